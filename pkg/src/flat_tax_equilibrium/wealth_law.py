"""
Stationary distribution of total wealth.

Total wealth follows a Markov multiplicative process with reset: a surviving
household's wealth is multiplied by ``G[J_t, J_{t+1}]`` and, with probability
``1 - upsilon``, a household is replaced by a newborn holding ``h`` in a state
drawn from ``varpi``. With ``A(z)_{nn'} = upsilon * pi_nn' * G_nn'^z`` the
joint Mellin transform is

    E(S^z 1{J=n}) = (1 - upsilon) h^z [varpi^T (I - A(z))^{-1}]_n

whenever the spectral radius of ``A(Re z)`` is below one, and the right tail
is Pareto with exponent ``zeta`` solving ``rho(A(zeta)) = 1``.

The law has point masses: newborns sit at ``h`` and a household that has never
left its birth state ``n`` sits at ``h G_nn^k`` after ``k`` years, with mass
``(1 - upsilon) varpi_n (upsilon pi_nn)^k``. These diagonal atom series are
summed exactly; the Gil-Pelaez inversion is applied to what remains.
"""

from __future__ import annotations

import logging
import math
from typing import Any

import numpy as np
import pandas as pd
from pydantic import Field
from scipy.optimize import brentq

from flat_tax_equilibrium.constants import (
    ATOM_MASS_FLOOR,
    EXTRAPOLATION_ERROR_RATIO,
    GRID_LOWER_OFFSET,
    GRID_POINTS,
    GRID_UPPER_OFFSET,
    INVERSION_T_MAX,
    PARETO_TOL,
    PARETO_Z_MAX,
    TAIL_S_MAX,
)
from flat_tax_equilibrium.exceptions import (
    DivergentMomentError,
    ModelDomainError,
    NoParetoTailError,
    NonConvergenceError,
)
from flat_tax_equilibrium.numerics import perron_root
from flat_tax_equilibrium.type_helpers import (
    ArrayModel,
    DistributionSource,
    FloatArray,
    FrozenModel,
    ShareEntry,
)

logger = logging.getLogger(__name__)

__all__ = [
    "MellinEvaluator",
    "GridSpec",
    "WealthDistribution",
    "TailExtension",
    "invert_distribution",
    "tail_extrapolate",
    "wealth_shares",
    "share_table",
    "top_share_slope",
    "compare_exceedance",
    "simulate_panel",
    "hill_estimator",
    "empirical_checks",
]

# Gauss-Kronrod 7/15 rule on [-1, 1]
_GK_NODES = np.array(
    [
        0.991455371120812639206854697526329,
        0.949107912342758524526189684047851,
        0.864864423359769072789712788640926,
        0.741531185599394439863864773280788,
        0.586087235467691130294144845693013,
        0.405845151377397166906606412076961,
        0.207784955007898467600689403773245,
        0.0,
    ]
)
_GK_WEIGHTS = np.array(
    [
        0.022935322010529224963732008058970,
        0.063092092629978553290700663189204,
        0.104790010322250183839876322541518,
        0.140653259715525918745189590510238,
        0.169004726639267902826583426598550,
        0.190350578064785409913256402421014,
        0.204432940075298892414161999234649,
        0.209482141084727828012999174891714,
    ]
)
_GAUSS_WEIGHTS = np.array(
    [
        0.0,
        0.129484966168869693270611432679082,
        0.0,
        0.279705391489276667901467771423780,
        0.0,
        0.381830050505118944950369775488975,
        0.0,
        0.417959183673469387755102040816327,
    ]
)
_ENVELOPE_TOL = 1e-12
_ERROR_FLOOR = 1e-13
_SOLVE_CHUNK = 8192
_GRID_CHUNK = 128


def _symmetric_rule() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    nodes = np.concatenate([-_GK_NODES[:-1], _GK_NODES[::-1]])
    kronrod = np.concatenate([_GK_WEIGHTS[:-1], _GK_WEIGHTS[::-1]])
    gauss = np.concatenate([_GAUSS_WEIGHTS[:-1], _GAUSS_WEIGHTS[::-1]])
    return nodes, kronrod, gauss


class MellinEvaluator:
    """
    Mellin transforms of the stationary joint law of (S, J).

    Args:
        growth: Matrix G of gross wealth growth, G_nn' > 0
        transition: Row-stochastic state transition matrix
        upsilon: Survival probability in (0, 1)
        newborn_dist: State distribution of newborns
        reset_level: Total wealth of a newborn (human wealth h)
    """

    def __init__(
        self,
        growth: np.ndarray,
        transition: np.ndarray,
        upsilon: float,
        newborn_dist: np.ndarray,
        reset_level: float,
    ):
        self.growth = np.asarray(growth, dtype=float)
        self.transition = np.asarray(transition, dtype=float)
        self.upsilon = float(upsilon)
        self.newborn_dist = np.asarray(newborn_dist, dtype=float)
        self.reset_level = float(reset_level)

        if np.any(self.growth <= 0.0):
            raise ModelDomainError("Growth matrix must be strictly positive")
        if not 0.0 < self.upsilon < 1.0:
            raise ModelDomainError(f"upsilon must lie in (0, 1), got {upsilon}")
        if not self.reset_level > 0.0:
            raise ModelDomainError(f"Reset level must be positive, got {reset_level}")

        self._log_growth = np.log(self.growth)
        self._base = self.upsilon * self.transition
        self._log_h = math.log(self.reset_level)
        self._zeta: float | None = None
        self.stationary_dist = np.real(self.joint_mellin(0.0)).astype(float)

    @classmethod
    def from_policy(cls, policy: Any, process: Any) -> MellinEvaluator:
        """Evaluator for a solved ``PolicySolution`` and its ``AbilityProcess``."""
        return cls(
            growth=policy.growth,
            transition=process.transition,
            upsilon=policy.params.upsilon,
            newborn_dist=process.newborn_dist,
            reset_level=policy.returns.h,
        )

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    def build_A(self, z: complex) -> np.ndarray:
        """``A(z)_{nn'} = upsilon * pi_nn' * G_nn'^z``."""
        if isinstance(z, complex) and z.imag != 0.0:
            return self._base * np.exp(z * self._log_growth)
        return self._base * np.exp(float(np.real(z)) * self._log_growth)

    def spectral_radius(self, z: float) -> float:
        return perron_root(self.build_A(float(z)))

    def domain_description(self) -> str:
        zeta = self._zeta if self._zeta is not None else float("nan")
        return f"I- = {{z : rho(A(Re z)) < 1}} = (z_min, {zeta:.6g}) around 0"

    def _check_domain(self, z: complex) -> None:
        radius = self.spectral_radius(float(np.real(z)))
        if radius >= 1.0:
            raise DivergentMomentError(z, radius)

    def resolvent_row(self, z: complex) -> np.ndarray:
        """``varpi^T (I - A(z))^{-1}`` by a linear solve."""
        system = np.eye(self.n_states) - self.build_A(z)
        return np.linalg.solve(system.T, self.newborn_dist.astype(system.dtype))

    def joint_mellin(self, z: complex) -> np.ndarray:
        """Vector of ``E(S^z 1{J=n})``."""
        self._check_domain(z)
        scale = (1.0 - self.upsilon) * np.exp(z * self._log_h)
        return scale * self.resolvent_row(z)

    def mellin(self, z: complex, state: int | None = None) -> complex:
        """
        ``E(S^z)``, or ``E(S^z | J = state)``.

        Raises:
            DivergentMomentError: if rho(A(Re z)) >= 1
        """
        joint = self.joint_mellin(z)
        if state is None:
            value = joint.sum()
        else:
            p_n = self.stationary_dist[state]
            if p_n <= 0.0:
                raise ModelDomainError(f"State {state} has zero stationary mass")
            value = joint[state] / p_n
        if np.iscomplexobj(value) and np.imag(value) != 0.0:
            return complex(value)
        return float(np.real(value))

    def characteristic_batch(self, t: np.ndarray) -> np.ndarray:
        """
        ``E((S/h)^{it} 1{J=n})`` for many real ``t``: array of shape (len(t), N).

        ``A(it)`` has spectral radius at most ``upsilon``, so no domain check is needed.
        """
        t = np.asarray(t, dtype=float)
        out = np.empty((t.size, self.n_states), dtype=complex)
        eye = np.eye(self.n_states)
        rhs = self.newborn_dist.astype(complex)
        for start in range(0, t.size, _SOLVE_CHUNK):
            chunk = t[start : start + _SOLVE_CHUNK]
            a_it = self._base[None] * np.exp(1j * chunk[:, None, None] * self._log_growth[None])
            systems = np.transpose(eye[None] - a_it, (0, 2, 1))
            rows = np.linalg.solve(systems, np.broadcast_to(rhs, (chunk.size, self.n_states))[..., None])
            out[start : start + chunk.size] = rows[..., 0]
        return (1.0 - self.upsilon) * out

    def atom_masses(self) -> np.ndarray:
        """Total mass of each state's diagonal atom series."""
        diagonal = np.diag(self.transition)
        return (1.0 - self.upsilon) * self.newborn_dist / (1.0 - self.upsilon * diagonal)

    def atom_characteristic_batch(self, t: np.ndarray) -> np.ndarray:
        """Closed-form characteristic function of the diagonal atom series relative to h."""
        t = np.asarray(t, dtype=float)
        diagonal = np.diag(self.transition)
        log_diag_growth = np.diag(self._log_growth)
        ratio = self.upsilon * diagonal[None, :] * np.exp(1j * t[:, None] * log_diag_growth[None, :])
        return (1.0 - self.upsilon) * self.newborn_dist[None, :] / (1.0 - ratio)

    def diagonal_atoms(self, mass_floor: float = ATOM_MASS_FLOOR) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Explicit atoms of the diagonal series.

        Returns:
            Tuple of (log wealth relative to h, joint mass, state index), one entry per atom.
        """
        levels, masses, states = [], [], []
        for n in range(self.n_states):
            first = (1.0 - self.upsilon) * self.newborn_dist[n]
            if first <= 0.0:
                continue
            ratio = self.upsilon * self.transition[n, n]
            if ratio > 0.0 and first > mass_floor:
                count = int(math.floor(math.log(mass_floor / first) / math.log(ratio))) + 1
            else:
                count = 1
            k = np.arange(count)
            levels.append(k * self._log_growth[n, n])
            masses.append(first * ratio**k)
            states.append(np.full(count, n))
        return np.concatenate(levels), np.concatenate(masses), np.concatenate(states)

    def sufficient_tail_condition(self) -> bool:
        """Some state can repeat itself while growing: pi_nn > 0 and G_nn > 1."""
        return bool(np.any((np.diag(self.transition) > 0.0) & (np.diag(self.growth) > 1.0)))

    def pareto_exponent(self, z_max: float = PARETO_Z_MAX, tol: float = PARETO_TOL) -> float:
        """
        Positive root of ``rho(A(z)) = 1``.

        ``rho(A(z))`` is convex with ``rho(A(0)) = upsilon < 1``, so the first
        sign change found by doubling ``z`` brackets the unique positive root.

        Raises:
            NoParetoTailError: if rho(A(z)) < 1 on all of [0, z_max]
        """
        if self._zeta is not None:
            return self._zeta
        if not self.sufficient_tail_condition():
            logger.warning("No state with pi_nn > 0 and G_nn > 1; a Pareto tail may not exist")

        lo, z = 0.0, 0.5
        while True:
            z = min(z, z_max)
            if self.spectral_radius(z) >= 1.0:
                break
            if z >= z_max:
                raise NoParetoTailError(z_max, self.spectral_radius(z_max))
            lo, z = z, 2.0 * z

        self._zeta = float(brentq(lambda x: self.spectral_radius(x) - 1.0, lo, z, xtol=tol))
        logger.debug(f"Pareto exponent zeta={self._zeta:.6f}")
        return self._zeta


class GridSpec(FrozenModel):
    """Log-wealth grid and quadrature settings for the inversion."""

    n_points: int = Field(default=GRID_POINTS, ge=16)
    lower_offset: float = Field(default=GRID_LOWER_OFFSET, gt=0.0)
    upper_offset: float = Field(default=GRID_UPPER_OFFSET, gt=0.0)
    t_max: float = Field(default=INVERSION_T_MAX, gt=0.0)
    error_ratio: float = Field(default=EXTRAPOLATION_ERROR_RATIO, gt=0.0)


class WealthDistribution(ArrayModel):
    """
    CDF of log total wealth on a grid, with exact atoms and a Pareto tail.

    ``cdf`` and ``cdf_by_state`` include the atoms; ``diffuse_cdf`` is the
    inverted remainder alone. Above ``extrapolation_threshold`` exceedance
    probabilities follow ``P(S > s) = P(S > s_T) (s/s_T)^{-zeta}``.
    """

    log_grid: FloatArray
    cdf: FloatArray
    cdf_by_state: FloatArray
    diffuse_cdf: FloatArray
    error_estimate: FloatArray
    zeta: float
    extrapolation_threshold: float
    human_wealth: float
    mean_total_wealth: float
    state_probabilities: FloatArray
    atom_log_wealth: FloatArray
    atom_mass: FloatArray

    @property
    def threshold_exceedance(self) -> float:
        return float(1.0 - self._interp_cdf(math.log(self.extrapolation_threshold), self.cdf))

    def _interp_cdf(self, log_s: Any, values: np.ndarray) -> Any:
        return np.interp(log_s, self.log_grid, values, left=0.0, right=float(values[-1]))

    def cdf_at(self, s: Any, state: int | None = None) -> Any:
        """P(S <= s), or conditional on the state, using the Pareto tail above the threshold."""
        s_arr = np.asarray(s, dtype=float)
        values = self.cdf if state is None else self.cdf_by_state[state]
        safe = np.where(s_arr > 0.0, s_arr, 1.0)
        body = np.where(s_arr > 0.0, self._interp_cdf(np.log(safe), values), 0.0)
        threshold = self.extrapolation_threshold
        anchor = 1.0 - self._interp_cdf(math.log(threshold), values)
        tail = 1.0 - anchor * (safe / threshold) ** (-self.zeta)
        out = np.where(s_arr > threshold, tail, body)
        return float(out) if out.ndim == 0 else out

    def exceedance(self, s: Any, state: int | None = None) -> Any:
        return 1.0 - self.cdf_at(s, state)

    def financial_exceedance(self, w: Any, state: int | None = None) -> Any:
        """P(W > w) for financial wealth W = S - h."""
        return self.exceedance(np.asarray(w, dtype=float) + self.human_wealth, state)

    def median(self) -> float:
        """Median of total wealth by linear interpolation of the gridded CDF."""
        index = int(np.searchsorted(self.cdf, 0.5, side="left"))
        index = min(max(index, 1), self.cdf.size - 1)
        lo, hi = self.cdf[index - 1], self.cdf[index]
        if hi == lo:
            return float(math.exp(self.log_grid[index]))
        weight = (0.5 - lo) / (hi - lo)
        return float(math.exp(self.log_grid[index - 1] + weight * (self.log_grid[index] - self.log_grid[index - 1])))

    def summary(self) -> dict[str, float]:
        log_h = math.log(self.human_wealth)
        below = np.interp(log_h, self.log_grid, self.diffuse_cdf, left=0.0)
        return {
            "zeta": self.zeta,
            "extrapolation_threshold": self.extrapolation_threshold,
            "mass_zero_financial_wealth": float(self.atom_mass[self.atom_log_wealth == log_h].sum()),
            "mass_negative_financial_wealth": float(below + self.atom_mass[self.atom_log_wealth < log_h].sum()),
            "median_total_wealth": self.median(),
        }


def _panel_nodes(panel_width: float, t_max: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    nodes, kronrod, gauss = _symmetric_rule()
    n_panels = max(1, int(math.ceil(t_max / panel_width)))
    centers = (np.arange(n_panels) + 0.5) * panel_width
    half = 0.5 * panel_width
    t = (centers[:, None] + half * nodes[None, :]).ravel()
    w_k = np.tile(half * kronrod, n_panels)
    w_g = np.tile(half * gauss, n_panels)
    return t, w_k, w_g


def invert_distribution(
    evaluator: MellinEvaluator,
    grid: GridSpec | None = None,
    state: int | None = None,
) -> WealthDistribution:
    """
    Gil-Pelaez inversion of the stationary law of log total wealth.

    For the diffuse part with joint characteristic function ``phi_n``,

        F_n(y) = m_n/2 - (1/pi) int_0^inf Im(e^{-ity} phi_n(t)) / t dt,

    integrated with Gauss-Kronrod 7/15 panels whose width follows the fastest
    oscillation on the grid. The Kronrod-Gauss difference plus a truncation
    bound is the error estimate that places the extrapolation threshold.

    Args:
        evaluator: Mellin evaluator of a solved policy
        grid: Grid and quadrature settings
        state: If given, ``cdf`` holds the conditional CDF of that state

    Raises:
        NonConvergenceError: if the estimated error exceeds the error ratio
            already at the median
    """
    grid = grid or GridSpec()
    zeta = evaluator.pareto_exponent()
    h = evaluator.reset_level
    log_h = math.log(h)
    n_states = evaluator.n_states
    p = evaluator.stationary_dist

    u = np.linspace(-grid.lower_offset, grid.upper_offset, grid.n_points)
    frequency = 2.0 * max(grid.lower_offset, grid.upper_offset)
    t, w_k, w_g = _panel_nodes(2.0 * math.pi / frequency, grid.t_max)

    phi = evaluator.characteristic_batch(t) - evaluator.atom_characteristic_batch(t)
    envelope = np.abs(phi).sum(axis=1) / t
    above = np.nonzero(envelope >= _ENVELOPE_TOL)[0]
    cut = int(above[-1]) + 1 if above.size else 1
    cut = int(math.ceil(cut / 15.0)) * 15
    t, w_k, w_g, phi = t[:cut], w_k[:cut], w_g[:cut], phi[:cut]
    truncation = float(np.abs(phi[-15:]).sum(axis=1).max()) / (math.pi * t[-1])
    logger.debug(f"Inversion with {t.size} nodes up to t={t[-1]:.1f}; truncation bound {truncation:.2e}")

    columns = np.concatenate(
        [
            (w_k / t)[:, None] * phi.imag,
            (w_k / t)[:, None] * phi.real,
            (w_g / t)[:, None] * phi.imag,
            (w_g / t)[:, None] * phi.real,
        ],
        axis=1,
    )
    integral_k = np.empty((u.size, n_states))
    integral_g = np.empty((u.size, n_states))
    for start in range(0, u.size, _GRID_CHUNK):
        chunk = u[start : start + _GRID_CHUNK]
        phase = np.outer(chunk, t)
        cos_part = np.cos(phase) @ columns
        sin_part = np.sin(phase) @ columns
        s = slice(start, start + chunk.size)
        integral_k[s] = cos_part[:, :n_states] - sin_part[:, n_states : 2 * n_states]
        integral_g[s] = cos_part[:, 2 * n_states : 3 * n_states] - sin_part[:, 3 * n_states :]

    diffuse_mass = p - evaluator.atom_masses()
    diffuse = diffuse_mass[None, :] / 2.0 - integral_k / math.pi
    diffuse = np.clip(np.maximum.accumulate(diffuse, axis=0), 0.0, np.maximum(diffuse_mass, 0.0)[None, :])

    atom_levels, atom_mass, atom_state = evaluator.diagonal_atoms()
    joint = diffuse.copy()
    for n in range(n_states):
        mine = atom_state == n
        order = np.argsort(atom_levels[mine])
        levels = atom_levels[mine][order]
        cumulative = np.cumsum(atom_mass[mine][order])
        counts = np.searchsorted(levels, u, side="right")
        joint[:, n] += np.where(counts > 0, cumulative[np.maximum(counts - 1, 0)], 0.0)

    cdf_by_state = (joint / np.where(p > 0.0, p, 1.0)[None, :]).T
    cdf = np.clip(joint.sum(axis=1), 0.0, 1.0)
    error = np.abs(integral_k - integral_g).sum(axis=1) / math.pi + truncation + _ERROR_FLOOR

    exceed = 1.0 - cdf
    median_index = int(np.searchsorted(cdf, 0.5))
    if median_index < u.size and error[median_index] > grid.error_ratio * max(exceed[median_index], 0.5):
        raise NonConvergenceError(
            f"Inversion error {error[median_index]:.3g} is too large at the median",
            residual=float(error[median_index]),
            iterations=t.size,
        )
    bad = np.nonzero((np.arange(u.size) > median_index) & (error > grid.error_ratio * exceed))[0]
    threshold_index = int(bad[0]) - 1 if bad.size else u.size - 1
    threshold_index = max(threshold_index, median_index)
    threshold = float(h * math.exp(u[threshold_index]))
    logger.info(
        f"Inverted wealth distribution: zeta={zeta:.4f}, extrapolation threshold "
        f"S={threshold:.4g} (exceedance {exceed[threshold_index]:.3g})"
    )

    order = np.argsort(atom_levels)
    return WealthDistribution(
        log_grid=u + log_h,
        cdf=cdf if state is None else cdf_by_state[state],
        cdf_by_state=cdf_by_state,
        diffuse_cdf=np.clip(diffuse.sum(axis=1), 0.0, 1.0),
        error_estimate=error,
        zeta=zeta,
        extrapolation_threshold=threshold,
        human_wealth=h,
        mean_total_wealth=evaluator.mellin(1.0),
        state_probabilities=p,
        atom_log_wealth=atom_levels[order] + log_h,
        atom_mass=atom_mass[order],
    )


class TailExtension(ArrayModel):
    """Exceedance curve of total wealth: inversion output up to the threshold, Pareto beyond."""

    wealth: FloatArray
    exceedance: FloatArray
    source: tuple[DistributionSource, ...]
    human_wealth: float
    zeta: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "wealth": self.wealth - self.human_wealth,
                "exceedance_prob": self.exceedance,
                "source": [flag.value for flag in self.source],
            }
        )


def tail_extrapolate(
    dist: WealthDistribution, s_max: float = TAIL_S_MAX, n_points: int = 200
) -> TailExtension:
    """Splice the Pareto tail onto the inverted exceedance curve at the threshold."""
    threshold = dist.extrapolation_threshold
    body_s = np.exp(dist.log_grid)
    body_s = body_s[body_s <= threshold]
    body = 1.0 - np.interp(np.log(body_s), dist.log_grid, dist.cdf)
    anchor = 1.0 - float(np.interp(math.log(threshold), dist.log_grid, dist.cdf))
    upper = max(s_max, threshold * 10.0)
    tail_s = np.geomspace(threshold, upper, n_points + 1)[1:]
    tail = anchor * (tail_s / threshold) ** (-dist.zeta)
    return TailExtension(
        wealth=np.concatenate([body_s, tail_s]),
        exceedance=np.concatenate([body, tail]),
        source=tuple([DistributionSource.INVERSION] * body_s.size + [DistributionSource.EXTRAPOLATION] * tail_s.size),
        human_wealth=dist.human_wealth,
        zeta=dist.zeta,
    )


def _discrete_representation(dist: WealthDistribution) -> tuple[np.ndarray, np.ndarray, float, float]:
    """
    Point masses of the law below the threshold plus the Pareto tail beyond it.

    Returns:
        Tuple of (sorted wealth levels, masses, tail probability, tail partial mean).
    """
    log_threshold = math.log(dist.extrapolation_threshold)
    keep = dist.atom_log_wealth <= log_threshold
    levels = [np.exp(dist.atom_log_wealth[keep])]
    masses = [dist.atom_mass[keep]]

    inside = dist.log_grid <= log_threshold
    grid = dist.log_grid[inside]
    diffuse = dist.diffuse_cdf[inside]
    levels.append(np.exp(grid[:1]))
    masses.append(diffuse[:1])
    levels.append(np.exp(0.5 * (grid[1:] + grid[:-1])))
    masses.append(np.diff(diffuse))

    s = np.concatenate(levels)
    m = np.concatenate(masses)
    order = np.argsort(s, kind="stable")
    tail_probability = max(1.0 - float(m.sum()), 0.0)
    tail_mean = tail_probability * dist.extrapolation_threshold * dist.zeta / (dist.zeta - 1.0)
    return s[order], m[order], tail_probability, tail_mean


def _bottom_partial_mean(
    q: float, s: np.ndarray, m: np.ndarray, tail_probability: float, dist: WealthDistribution
) -> float:
    """E[S; S in the bottom q of the distribution]."""
    body_mass = 1.0 - tail_probability
    cumulative = np.cumsum(m)
    cumulative_mean = np.cumsum(m * s)
    if q <= body_mass:
        index = int(np.searchsorted(cumulative, q, side="left"))
        index = min(index, s.size - 1)
        before_mass = cumulative[index - 1] if index > 0 else 0.0
        before_mean = cumulative_mean[index - 1] if index > 0 else 0.0
        return float(before_mean + (q - before_mass) * s[index])
    threshold = dist.extrapolation_threshold
    zeta = dist.zeta
    upper = 1.0 - q
    s_q = threshold * (tail_probability / upper) ** (1.0 / zeta) if upper > 0.0 else math.inf
    tail_part = zeta / (zeta - 1.0) * (threshold * tail_probability - (s_q * upper if upper > 0.0 else 0.0))
    return float(cumulative_mean[-1] + tail_part)


def wealth_shares(
    dist: WealthDistribution,
    top: tuple[float, ...] = (),
    bottom: tuple[float, ...] = (),
) -> list[ShareEntry]:
    """
    Shares of total financial wealth held by top and bottom groups.

    Shares are partial means of the quantile function of ``W = S - h``, so a
    top share and the complementary bottom share add to one.

    Raises:
        DivergentMomentError: if zeta <= 1 (infinite mean)
    """
    if dist.zeta <= 1.0:
        raise DivergentMomentError(1.0, float("inf"))
    s, m, tail_probability, tail_mean = _discrete_representation(dist)
    h = dist.human_wealth
    total_s = float(m @ s) + tail_mean
    total_w = total_s - h
    gap = abs(total_s - dist.mean_total_wealth) / dist.mean_total_wealth
    if gap > 1e-3:
        logger.warning(f"Integrated mean wealth differs from E(S) by {gap:.2%}")

    def _bottom_w(q: float) -> float:
        return _bottom_partial_mean(q, s, m, tail_probability, dist) - h * q

    rows: list[ShareEntry] = []
    for q in top:
        rows.append({"group": "top", "fraction": float(q), "share": (total_w - _bottom_w(1.0 - q)) / total_w})
    for q in bottom:
        rows.append({"group": "bottom", "fraction": float(q), "share": _bottom_w(q) / total_w})
    return rows


def share_table(dist: WealthDistribution, top: tuple[float, ...], bottom: tuple[float, ...]) -> pd.DataFrame:
    frame = pd.DataFrame(wealth_shares(dist, top, bottom))
    frame["share_percent"] = 100.0 * frame["share"]
    return frame


def top_share_slope(dist: WealthDistribution, fractions: tuple[float, ...] = (1e-7, 1e-8, 1e-9)) -> float:
    """Log-log slope of top shares against top fractions; tends to 1 - 1/zeta deep in the tail."""
    shares = [row["share"] for row in wealth_shares(dist, top=fractions)]
    slope, _ = np.polyfit(np.log(fractions), np.log(shares), 1)
    return float(slope)


def compare_exceedance(
    first: WealthDistribution,
    second: WealthDistribution,
    wealth: np.ndarray,
) -> tuple[pd.DataFrame, float | None]:
    """
    Financial-wealth exceedance curves of two regimes on a common grid.

    Returns:
        Tuple of (frame with columns wealth/exceedance_first/exceedance_second,
        first crossing wealth level or None).
    """
    wealth = np.asarray(wealth, dtype=float)
    a = first.financial_exceedance(wealth)
    b = second.financial_exceedance(wealth)
    frame = pd.DataFrame({"wealth": wealth, "exceedance_first": a, "exceedance_second": b})
    sign = np.sign(a - b)
    flips = np.nonzero(sign[1:] * sign[:-1] < 0)[0]
    crossing = float(wealth[flips[0] + 1]) if flips.size else None
    return frame, crossing


def simulate_panel(
    growth: np.ndarray,
    transition: np.ndarray,
    newborn_dist: np.ndarray,
    upsilon: float,
    reset_level: float,
    n_agents: int,
    n_periods: int,
    seed: int,
    n_streams: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Monte Carlo cross-section of (S, J) after ``n_periods`` years.

    Everyone starts as a newborn. Each stream owns a generator spawned from
    ``SeedSequence(seed)``, so the result depends only on the arguments.
    """
    growth = np.asarray(growth, dtype=float)
    transition = np.asarray(transition, dtype=float)
    newborn_dist = np.asarray(newborn_dist, dtype=float)
    n_states = transition.shape[0]
    cumulative = np.cumsum(transition, axis=1)
    newborn_cumulative = np.cumsum(newborn_dist)
    sizes = np.full(n_streams, n_agents // n_streams)
    sizes[: n_agents % n_streams] += 1

    wealth_parts, state_parts = [], []
    for child, size in zip(np.random.SeedSequence(seed).spawn(n_streams), sizes):
        rng = np.random.default_rng(child)
        S = np.full(size, float(reset_level))
        J = np.minimum(np.searchsorted(newborn_cumulative, rng.random(size), side="right"), n_states - 1)
        for _ in range(n_periods):
            draws = rng.random(size)
            J_next = np.minimum((draws[:, None] >= cumulative[J]).sum(axis=1), n_states - 1)
            S = S * growth[J, J_next]
            dead = rng.random(size) >= upsilon
            n_dead = int(dead.sum())
            if n_dead:
                S[dead] = reset_level
                J_next[dead] = np.minimum(
                    np.searchsorted(newborn_cumulative, rng.random(n_dead), side="right"),
                    n_states - 1,
                )
            J = J_next
        wealth_parts.append(S)
        state_parts.append(J)
    return np.concatenate(wealth_parts), np.concatenate(state_parts)


def hill_estimator(sample: np.ndarray, k: int) -> float:
    """Hill estimate of the tail exponent from the ``k`` largest observations."""
    ordered = np.sort(np.asarray(sample, dtype=float))[::-1]
    if not 0 < k < ordered.size:
        raise ValueError(f"k must lie in (0, {ordered.size}), got {k}")
    return float(1.0 / np.mean(np.log(ordered[:k] / ordered[k])))


def empirical_checks(
    evaluator: MellinEvaluator,
    dist: WealthDistribution,
    wealth: np.ndarray,
    states: np.ndarray,
    z: float = 0.5,
    n_sigma: float = 3.0,
) -> list[dict[str, Any]]:
    """
    Compare a simulated cross-section with the analytic law.

    Checks the fractional moment ``E(S^z)`` rather than the mean: with
    ``zeta < 2`` the sample mean has infinite variance and no standard error,
    while ``2z < zeta`` keeps it finite. Also checks state frequencies, the
    Hill tail exponent and the Kolmogorov distance of the inverted CDF on the
    body of the distribution.
    """
    n = wealth.size
    checks: list[dict[str, Any]] = []

    powered = wealth**z
    analytic = float(np.real(evaluator.mellin(z)))
    se = float(powered.std(ddof=1) / math.sqrt(n))
    checks.append(
        {
            "name": f"mellin_{z:g}",
            "analytic": analytic,
            "empirical": float(powered.mean()),
            "standard_error": se,
            "passed": abs(powered.mean() - analytic) <= n_sigma * se,
        }
    )

    p = evaluator.stationary_dist
    frequencies = np.bincount(states, minlength=p.size) / n
    se_states = np.sqrt(p * (1.0 - p) / n)
    checks.append(
        {
            "name": "state_frequencies",
            "analytic": p.tolist(),
            "empirical": frequencies.tolist(),
            "standard_error": se_states.tolist(),
            "passed": bool(np.all(np.abs(frequencies - p) <= n_sigma * se_states + 1e-15)),
        }
    )

    k = max(n // 1000, 10)
    hill = hill_estimator(wealth, k)
    se_hill = dist.zeta / math.sqrt(k)
    checks.append(
        {
            "name": "tail_exponent",
            "analytic": dist.zeta,
            "empirical": hill,
            "standard_error": se_hill,
            "passed": abs(hill - dist.zeta) <= n_sigma * se_hill,
        }
    )

    ordered = np.sort(wealth)
    body = ordered <= dist.extrapolation_threshold
    empirical_cdf = np.arange(1, n + 1) / n
    analytic_cdf = dist.cdf_at(ordered[body])
    distance = float(np.max(np.abs(empirical_cdf[body] - analytic_cdf))) if body.any() else 0.0
    # 99.9% Kolmogorov critical value, floored at the inversion accuracy
    tolerance = max(4e-4, 1.95 / math.sqrt(n))
    checks.append(
        {
            "name": "kolmogorov_distance",
            "analytic": 0.0,
            "empirical": distance,
            "standard_error": tolerance,
            "passed": distance <= tolerance,
        }
    )
    for check in checks:
        check["passed"] = bool(check["passed"])
        logger.info(f"Oracle check {check['name']}: {'passed' if check['passed'] else 'FAILED'}")
    return checks

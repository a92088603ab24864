"""
Perfect-foresight transition after an unanticipated tax reform.

Year 0 is the old stationary equilibrium; the new rates apply from year 1 and
prices reach the new stationary values at the horizon ``T``. Decision rules are
affine in total wealth, so the per-state first moments
``m_{n,t} = E(S_t 1{J_t=n})`` are enough to compute every aggregate along
the path. Financial wealth carries over at the announcement while human
wealth is revalued at the new wage path.

Price paths are cubic splines through knot years, pinned to the new
stationary prices at ``T``. The free knot values minimize the sum of squared
bond and labour excess demands; knots are added one year at a time,
warm-starting each stage from the previous spline.
"""

from __future__ import annotations

import logging
from typing import Any

import numpy as np
import pandas as pd
from pydantic import Field
from scipy.interpolate import CubicSpline
from scipy.optimize import least_squares

from flat_tax_equilibrium.config import SolverSettings
from flat_tax_equilibrium.constants import INITIAL_KNOTS, final_knot_years
from flat_tax_equilibrium.equilibrium import StationaryEquilibrium
from flat_tax_equilibrium.exceptions import FlatTaxError, ModelDomainError
from flat_tax_equilibrium.household import bellman_step
from flat_tax_equilibrium.model_core import (
    ModelParams,
    gross_return_matrix,
    labor_demand_and_return,
)
from flat_tax_equilibrium.type_helpers import ArrayModel, FloatArray, FrozenModel
from flat_tax_equilibrium.wealth_law import WealthDistribution, simulate_panel

logger = logging.getLogger(__name__)

__all__ = [
    "TransitionPath",
    "VoteResult",
    "backward_value_path",
    "forward_moments",
    "excess_demand_path",
    "solve_transition",
    "vote_analysis",
    "simulate_transition",
]

_INVALID_RESIDUAL = 1e3
_TIE_TOL = 1e-10


class VoteResult(FrozenModel):
    """Shares of households whose value rises at the announcement."""

    share_all: float
    share_workers: float
    share_entrepreneurs: float
    share_indifferent: float
    thresholds: list[float | None]
    in_favor_above: list[bool | None]
    share_by_state: list[float]


class TransitionPath(ArrayModel):
    """
    Prices, policies and first moments for years ``0..T``.

    Row 0 of every array is the old stationary equilibrium.
    """

    horizon: int
    knots: tuple[int, ...]
    R_path: FloatArray
    omega_path: FloatArray
    h_path: FloatArray
    a_path: FloatArray
    theta_path: FloatArray
    moments: FloatArray
    excess_bond: FloatArray
    excess_labor: FloatArray
    aggregates: list[dict[str, float]]
    objective_history: list[float] = Field(default_factory=list)
    diagnostics: dict[str, Any] = Field(default_factory=dict)
    vote: VoteResult | None = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.aggregates)

    def max_excess(self) -> tuple[float, float]:
        """Largest absolute bond and labour excess demand over years 1..T."""
        return float(np.max(np.abs(self.excess_bond[1:]))), float(np.max(np.abs(self.excess_labor[1:])))

    def summary(self) -> dict[str, Any]:
        frame = self.to_frame()
        first, base = frame.iloc[1], frame.iloc[0]

        def _change(column: str) -> float:
            return float(first[column] / base[column] - 1.0)

        def _recovery(column: str) -> int | None:
            later = frame[(frame["t"] >= 1) & (frame[column] >= base[column])]
            return int(later["t"].iloc[0]) if not later.empty else None

        max_bond, max_labor = self.max_excess()
        return {
            "horizon": self.horizon,
            "knots": list(self.knots),
            "year_one_change": {
                "consumption_total": _change("consumption_total"),
                "consumption_workers": _change("consumption_workers"),
                "consumption_entrepreneurs": _change("consumption_entrepreneurs"),
                "revenue_total": _change("revenue_total"),
            },
            "recovery_year": {
                "consumption_workers": _recovery("consumption_workers"),
                "consumption_total": _recovery("consumption_total"),
                "revenue_total": _recovery("revenue_total"),
            },
            "max_abs_excess_bond": max_bond,
            "max_abs_excess_labor": max_labor,
            "objective_history": self.objective_history,
            "diagnostics": self.diagnostics,
            "vote": self.vote.model_dump() if self.vote is not None else None,
        }


def _state_prices(params: ModelParams, productivities: np.ndarray, omega_path: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Labour per unit capital and capital returns for each year, shape (T+1, N)."""
    ell = np.empty((omega_path.size, productivities.size))
    r = np.empty_like(ell)
    for t, omega in enumerate(omega_path):
        ell[t], r[t] = labor_demand_and_return(productivities, params, float(omega))
    return ell, r


def backward_value_path(
    R_path: np.ndarray,
    omega_path: np.ndarray,
    terminal: StationaryEquilibrium,
    initial: StationaryEquilibrium,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Value coefficients, portfolio weights and human wealth for years ``0..T``.

    Years ``t >= 1`` follow one Bellman step from year ``t+1`` under the new
    rates; year ``T`` is the new stationary solution and year 0 the old one.

    Returns:
        Tuple of (a_path, theta_path, h_path), shapes (T+1, N), (T+1, N), (T+1,).
    """
    params = terminal.params
    transition = terminal.process.transition
    horizon = R_path.size - 1
    _, r_path = _state_prices(params, terminal.process.productivities, omega_path)

    n = transition.shape[0]
    log_a = np.empty((horizon + 1, n))
    theta = np.empty((horizon + 1, n))
    h = np.empty(horizon + 1)
    log_a[horizon] = np.log(terminal.policy.a_star)
    theta[horizon] = terminal.policy.theta_star
    h[horizon] = terminal.h
    for t in range(horizon - 1, 0, -1):
        log_a[t], theta[t], _ = bellman_step(log_a[t + 1], r_path[t + 1], float(R_path[t + 1]), params, transition)
        h[t] = (1.0 - params.tau_L) * omega_path[t] + params.upsilon * h[t + 1] / R_path[t + 1]
    log_a[0] = np.log(initial.policy.a_star)
    theta[0] = initial.policy.theta_star
    h[0] = initial.h
    return np.exp(log_a), theta, h


def forward_moments(
    initial: StationaryEquilibrium,
    theta_path: np.ndarray,
    R_path: np.ndarray,
    r_path: np.ndarray,
    h_path: np.ndarray,
    params: ModelParams,
) -> np.ndarray:
    """
    First moments ``m_{n,t}`` of total wealth by state for years ``0..T``.

    Year 1 keeps the old financial wealth and adds the revalued human wealth;
    afterwards ``m_{t+1} = upsilon * m_t (Pi ⊙ G_t) + (1 - upsilon) varpi h_{t+1}``.
    """
    process = initial.process
    horizon = R_path.size - 1
    m = np.empty((horizon + 1, process.n_states))
    m[0] = initial.state_moments
    m[1] = m[0] + process.stationary_dist * (h_path[1] - initial.h)
    upsilon, beta = params.upsilon, params.beta
    for t in range(1, horizon):
        growth = beta * gross_return_matrix(theta_path[t], r_path[t + 1], float(R_path[t + 1]), upsilon)
        m[t + 1] = upsilon * (m[t] @ (process.transition * growth)) + (1.0 - upsilon) * process.newborn_dist * h_path[t + 1]
    return m


def _next(values: np.ndarray) -> np.ndarray:
    """Values one year ahead; the last year is stationary."""
    return np.concatenate([values[1:], values[-1:]])


def excess_demand_path(
    moments: np.ndarray,
    theta_path: np.ndarray,
    R_path: np.ndarray,
    h_path: np.ndarray,
    ell_path: np.ndarray,
    params: ModelParams,
    initial: StationaryEquilibrium,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Bond and labour excess demands for years ``0..T``.

    Bonds bought in year ``t`` face the limit ``-h_{t+1}/R_{t+1}``; labour in
    year ``t`` is hired at the year-``t`` wage. Year 0 reports the old equilibrium.
    """
    scale = params.beta / params.upsilon
    bond = -_next(h_path) / _next(R_path) + scale * np.sum((1.0 - theta_path) * moments, axis=1)
    labor = scale * np.sum(theta_path * ell_path * moments, axis=1) - 1.0
    bond[0], labor[0] = initial.excess_demands()
    return bond, labor


class _PathModel:
    """Maps knot values to excess demands along the path."""

    def __init__(self, old: StationaryEquilibrium, new: StationaryEquilibrium, horizon: int):
        self.old = old
        self.new = new
        self.horizon = horizon
        self.years = np.arange(1, horizon + 1)

    def prices(self, knots: list[int], x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        k = len(knots) - 1
        R_knots = np.append(x[:k], self.new.prices.R)
        omega_knots = np.append(x[k:], self.new.prices.omega)
        R = np.concatenate([[self.old.prices.R], CubicSpline(knots, R_knots)(self.years)])
        omega = np.concatenate([[self.old.prices.omega], CubicSpline(knots, omega_knots)(self.years)])
        R[-1], omega[-1] = self.new.prices.R, self.new.prices.omega
        return R, omega

    def evaluate(self, R: np.ndarray, omega: np.ndarray) -> dict[str, np.ndarray]:
        params = self.new.params
        if np.any(R[1:] <= params.upsilon) or np.any(omega[1:] <= 0.0):
            raise ModelDomainError("Trial price path leaves R > upsilon, omega > 0")
        a, theta, h = backward_value_path(R, omega, self.new, self.old)
        ell, r = _state_prices(params, self.new.process.productivities, omega)
        ell[0] = self.old.policy.returns.ell
        r[0] = self.old.policy.returns.r
        m = forward_moments(self.old, theta, R, r, h, params)
        bond, labor = excess_demand_path(m, theta, R, h, ell, params, self.old)
        return {"R": R, "omega": omega, "a": a, "theta": theta, "h": h, "ell": ell, "r": r, "m": m, "bond": bond, "labor": labor}

    def residuals(self, knots: list[int], x: np.ndarray) -> np.ndarray:
        try:
            state = self.evaluate(*self.prices(knots, x))
        except (FlatTaxError, FloatingPointError):
            return np.full(2 * self.horizon, _INVALID_RESIDUAL)
        out = np.concatenate([state["bond"][1:], state["labor"][1:]])
        return np.where(np.isfinite(out), out, _INVALID_RESIDUAL)


def _aggregate_rows(state: dict[str, np.ndarray], old: StationaryEquilibrium, new: StationaryEquilibrium) -> list[dict[str, float]]:
    process = new.process
    p = process.stationary_dist
    workers, entrepreneurs = process.worker_mask, process.entrepreneur_mask
    h_next, R_next = _next(state["h"]), _next(state["R"])
    h_next[0], R_next[0] = old.h, old.prices.R

    rows = []
    for t in range(state["R"].size):
        params = old.params if t == 0 else new.params
        scale = params.beta / params.upsilon
        m, theta = state["m"][t], state["theta"][t]
        consumption = (1.0 - params.beta) / (1.0 + params.tau_C) * m
        capital = scale * theta * m
        bonds = -p * h_next[t] / R_next[t] + scale * (1.0 - theta) * m
        prev = 0 if t == 0 else t - 1
        expected_r = process.transition @ state["r"][t]
        capital_tax = (
            params.tau_K / (1.0 - params.tau_K) * params.beta
            * state["m"][prev] * state["theta"][prev] * expected_r
        )
        labor_tax = params.tau_L * state["omega"][t] * p
        consumption_tax = params.tau_C * consumption
        tax = labor_tax + consumption_tax + capital_tax
        rows.append(
            {
                "t": t,
                "R": float(state["R"][t]),
                "omega": float(state["omega"][t]),
                "h": float(state["h"][t]),
                "consumption_total": float(consumption.sum()),
                "consumption_workers": float(consumption[workers].sum()),
                "consumption_entrepreneurs": float(consumption[entrepreneurs].sum()),
                "capital": float(capital.sum()),
                "capital_workers": float(capital[workers].sum()),
                "capital_entrepreneurs": float(capital[entrepreneurs].sum()),
                "bonds_workers": float(bonds[workers].sum()),
                "bonds_entrepreneurs": float(bonds[entrepreneurs].sum()),
                "revenue_total": float(tax.sum()),
                "revenue_labor": float(labor_tax.sum()),
                "revenue_consumption": float(consumption_tax.sum()),
                "revenue_capital": float(capital_tax.sum()),
                "tax_paid_workers": float(tax[workers].sum()),
                "tax_paid_entrepreneurs": float(tax[entrepreneurs].sum()),
                "excess_bond": float(state["bond"][t]),
                "excess_labor": float(state["labor"][t]),
            }
        )
    return rows


def _knot_values(knots: list[int], R: np.ndarray, omega: np.ndarray) -> np.ndarray:
    free = knots[:-1]
    return np.concatenate([R[free], omega[free]])


def solve_transition(
    old: StationaryEquilibrium,
    new: StationaryEquilibrium,
    settings: SolverSettings | None = None,
    horizon: int | None = None,
) -> TransitionPath:
    """
    Price paths that clear bonds and labour in every year of the transition.

    Stages add one knot year at a time, in increasing order, until the final
    schedule is reached. A stage whose objective falls by less than the
    stagnation tolerance ends the refinement and the best path is returned.
    """
    settings = settings or SolverSettings()
    horizon = horizon or settings.transition_horizon
    model = _PathModel(old, new, horizon)

    knots = sorted({k for k in INITIAL_KNOTS if k < horizon} | {horizon})
    schedule = final_knot_years(horizon)
    linear = np.linspace(0.0, 1.0, horizon + 1)
    R_seed = old.prices.R + linear * (new.prices.R - old.prices.R)
    omega_seed = old.prices.omega + linear * (new.prices.omega - old.prices.omega)
    x = _knot_values(knots, R_seed, omega_seed)

    history: list[float] = []
    diagnostics: dict[str, Any] = {"stagnated": False, "stages": 0, "nfev": 0}
    best_x, best_knots, best_cost = x, list(knots), float(np.sum(model.residuals(knots, x) ** 2))
    while True:
        start_cost = float(np.sum(model.residuals(knots, x) ** 2))
        result = least_squares(
            lambda v: model.residuals(knots, v),
            x,
            method="trf",
            jac="2-point",
            max_nfev=settings.stage_max_nfev,
        )
        cost = 2.0 * float(result.cost)
        if cost <= start_cost:
            x = result.x
        else:
            cost = start_cost
        diagnostics["stages"] += 1
        diagnostics["nfev"] += int(result.nfev)
        logger.info(f"Transition stage {diagnostics['stages']}: {len(knots)} knots, objective {cost:.3e}")
        if cost <= best_cost:
            best_x, best_knots, best_cost = x, list(knots), cost
        if history and history[-1] - cost < settings.stagnation_tol:
            history.append(cost)
            diagnostics["stagnated"] = True
            logger.warning(f"Transition objective stagnated at {cost:.3e}; returning best path")
            break
        history.append(cost)

        missing = [year for year in schedule if year not in knots]
        if not missing:
            break
        R, omega = model.prices(knots, x)
        knots = sorted(knots + [missing[0]])
        x = _knot_values(knots, R, omega)

    state = model.evaluate(*model.prices(best_knots, best_x))
    path = TransitionPath(
        horizon=horizon,
        knots=tuple(best_knots),
        R_path=state["R"],
        omega_path=state["omega"],
        h_path=state["h"],
        a_path=state["a"],
        theta_path=state["theta"],
        moments=state["m"],
        excess_bond=state["bond"],
        excess_labor=state["labor"],
        aggregates=_aggregate_rows(state, old, new),
        objective_history=history,
        diagnostics=diagnostics,
    )
    max_bond, max_labor = path.max_excess()
    logger.info(f"Transition solved: max |bond excess| {max_bond:.2e}, max |labour excess| {max_labor:.2e}")
    return path


def vote_analysis(
    path: TransitionPath,
    old: StationaryEquilibrium,
    distribution: WealthDistribution,
    revalue_human_wealth: bool = True,
) -> VoteResult:
    """
    Share of households whose value rises when the reform is announced.

    In state ``n`` a household with financial wealth ``W`` is in favour when
    ``a1_n (W + h1) > a0_n (W + h0)``, a threshold condition in ``W``. Shares
    are conditional exceedance probabilities of the old wealth law. Ties
    count as not in favour. With ``revalue_human_wealth=False`` the old human
    wealth is used on both sides.
    """
    a_old = old.policy.a_star
    a_new = path.a_path[1]
    h_old = old.h
    h_new = path.h_path[1] if revalue_human_wealth else h_old
    p = old.process.stationary_dist

    shares, thresholds, above, indifferent = [], [], [], 0.0
    for n in range(a_old.size):
        slope = a_new[n] - a_old[n]
        gap = a_old[n] * h_old - a_new[n] * h_new
        scale = max(a_old[n] * h_old, a_new[n] * h_new)
        if abs(slope) <= _TIE_TOL * max(a_old[n], a_new[n]):
            thresholds.append(None)
            above.append(None)
            if abs(gap) <= _TIE_TOL * scale:
                shares.append(0.0)
                indifferent += p[n]
            else:
                shares.append(1.0 if gap < 0.0 else 0.0)
            continue
        threshold = gap / slope
        thresholds.append(float(threshold))
        # Households need positive total wealth under the new human wealth
        floor = -h_new
        if slope > 0.0:
            above.append(True)
            share = distribution.financial_exceedance(max(threshold, floor), state=n)
        else:
            above.append(False)
            share = distribution.financial_exceedance(floor, state=n) - distribution.financial_exceedance(threshold, state=n)
        shares.append(float(np.clip(share, 0.0, 1.0)))

    shares_arr = np.asarray(shares)
    workers = old.process.worker_mask
    entrepreneurs = old.process.entrepreneur_mask
    result = VoteResult(
        share_all=float(p @ shares_arr),
        share_workers=float(p[workers] @ shares_arr[workers] / p[workers].sum()),
        share_entrepreneurs=float(p[entrepreneurs] @ shares_arr[entrepreneurs] / p[entrepreneurs].sum()),
        share_indifferent=float(indifferent),
        thresholds=thresholds,
        in_favor_above=above,
        share_by_state=shares,
    )
    logger.info(
        f"Vote: {result.share_all:.1%} of all, {result.share_workers:.1%} of workers, "
        f"{result.share_entrepreneurs:.1%} of entrepreneurs in favour"
    )
    return result


def simulate_transition(
    path: TransitionPath,
    old: StationaryEquilibrium,
    new: StationaryEquilibrium,
    n_agents: int,
    seed: int,
    burn_in: int,
    n_streams: int = 1,
) -> pd.DataFrame:
    """
    Monte Carlo panel along a solved transition.

    The year-0 cross-section is simulated from the old wealth law; from year 1
    households carry their financial wealth, add the new human wealth and
    follow the path's portfolio weights and prices.

    Returns:
        Frame with columns t, mean_total_wealth, standard_error, consumption_total.
    """
    process = old.process
    S, J = simulate_panel(
        old.policy.growth,
        process.transition,
        process.newborn_dist,
        old.params.upsilon,
        old.h,
        n_agents,
        burn_in,
        seed,
        n_streams,
    )
    params = new.params
    _, r_path = _state_prices(params, process.productivities, path.omega_path)
    cumulative = np.cumsum(process.transition, axis=1)
    newborn_cumulative = np.cumsum(process.newborn_dist)
    n_states = process.n_states
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(n_streams + 1)[-1])

    def _row(t: int) -> dict[str, float]:
        return {"t": t, "mean_total_wealth": float(S.mean()), "standard_error": float(S.std(ddof=1) / np.sqrt(S.size))}

    rows = [_row(0)]
    S = S - old.h + path.h_path[1]
    for t in range(1, path.horizon + 1):
        rows.append(_row(t))
        if t == path.horizon:
            break
        growth = params.beta * gross_return_matrix(path.theta_path[t], r_path[t + 1], float(path.R_path[t + 1]), params.upsilon)
        J_next = np.minimum((rng.random(S.size)[:, None] >= cumulative[J]).sum(axis=1), n_states - 1)
        S = S * growth[J, J_next]
        dead = rng.random(S.size) >= params.upsilon
        n_dead = int(dead.sum())
        S[dead] = path.h_path[t + 1]
        J_next[dead] = np.minimum(np.searchsorted(newborn_cumulative, rng.random(n_dead), side="right"), n_states - 1)
        J = J_next

    frame = pd.DataFrame(rows)
    share = np.where(frame["t"] == 0, (1.0 - old.params.beta) / (1.0 + old.params.tau_C), (1.0 - params.beta) / (1.0 + params.tau_C))
    frame["consumption_total"] = share * frame["mean_total_wealth"]
    return frame

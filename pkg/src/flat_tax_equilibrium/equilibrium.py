"""
Stationary equilibrium.

Given prices ``(R, omega)`` the household policy and the Mellin transforms of
the wealth law give the aggregate demands for bonds and labour in closed form.
Prices clear both markets when ``E(B) = 0`` and ``E(L) = 1``.
"""

from __future__ import annotations

import logging
import math
from typing import Any

import numpy as np
from pydantic import Field
from scipy.optimize import brentq
from scipy.special import logsumexp

from flat_tax_equilibrium.config import SolverSettings
from flat_tax_equilibrium.constants import OMEGA_MAX, OMEGA_MIN, R_MAX_FACTOR
from flat_tax_equilibrium.exceptions import (
    EquilibriumNonexistenceError,
    FlatTaxError,
    NoParetoTailError,
    NonConvergenceError,
)
from flat_tax_equilibrium.household import (
    HouseholdContext,
    PolicySolution,
    solve_value_coefficients,
)
from flat_tax_equilibrium.model_core import (
    AbilityProcess,
    ModelParams,
    Prices,
    pre_tax_interest,
    post_tax_wage,
)
from flat_tax_equilibrium.numerics import broyden_solve
from flat_tax_equilibrium.type_helpers import ArrayModel, FrozenModel
from flat_tax_equilibrium.wealth_law import MellinEvaluator

logger = logging.getLogger(__name__)

__all__ = [
    "Aggregates",
    "GroupAggregates",
    "RevenueBreakdown",
    "StationaryEquilibrium",
    "aggregate_demands",
    "solve_policy_at",
    "equilibrium_at_prices",
    "solve_equilibrium",
    "welfare",
    "welfare_gain",
    "tax_revenue",
    "group_aggregates",
    "GoodsMarket",
    "goods_market",
    "resource_residual",
    "market_gap_value",
]

# Dispersed starts as fractions of (R - upsilon) over (1/beta - upsilon), and wages
_START_FRACTIONS = ((0.63, 1.27), (0.3, 0.8), (0.85, 2.0), (0.45, 1.0), (0.75, 1.6))
_ROOT_MATCH_TOL = 1e-6
_R_SCAN_POINTS = 24
_OMEGA_SCAN_POINTS = 16


class Aggregates(FrozenModel):
    """Cross-sectional means per capita."""

    total_wealth: float
    bonds: float
    labor: float
    capital: float
    consumption: float


class GroupAggregates(FrozenModel):
    """Aggregates of the households currently in one occupation."""

    mass: float
    consumption: float
    capital: float
    bonds: float
    labor: float
    total_wealth: float
    tax_paid: float


class RevenueBreakdown(FrozenModel):
    """Per-capita revenue by instrument; ``capital`` is the survivors' payment ``upsilon*E(T_K)``."""

    labor: float
    consumption: float
    capital: float

    @property
    def total(self) -> float:
        return self.labor + self.consumption + self.capital


class StationaryEquilibrium(ArrayModel):
    params: ModelParams
    process: AbilityProcess
    prices: Prices
    policy: PolicySolution
    mellin: MellinEvaluator = Field(exclude=True)
    aggregates: Aggregates
    revenue: RevenueBreakdown
    welfare: float
    revenue_target: float | None = None
    alternative_roots: list[Prices] = Field(default_factory=list)
    diagnostics: dict[str, Any] = Field(default_factory=dict)

    @property
    def h(self) -> float:
        return self.policy.returns.h

    @property
    def state_moments(self) -> np.ndarray:
        """``E(S 1{J=n})`` by state."""
        return np.real(self.mellin.joint_mellin(1.0))

    @property
    def zeta(self) -> float | None:
        try:
            return self.mellin.pareto_exponent()
        except NoParetoTailError:
            return None

    @property
    def revenue_gap(self) -> float | None:
        if self.revenue_target is None:
            return None
        return self.revenue.total - self.revenue_target

    def excess_demands(self) -> tuple[float, float]:
        return self.aggregates.bonds, self.aggregates.labor - 1.0

    def summary(self) -> dict[str, Any]:
        """JSON-ready digest of the equilibrium."""
        R, omega = self.prices.R, self.prices.omega
        groups = group_aggregates(self)
        return {
            "rates": self.params.rates.model_dump(),
            "prices": {
                "R": R,
                "omega": omega,
                "interest_post_tax": R - 1.0,
                "interest_pre_tax": pre_tax_interest(R, self.params.tau_K),
                "wage_post_tax": post_tax_wage(omega, self.params.tau_L),
            },
            "h": self.h,
            "b_bar": self.policy.returns.b_bar,
            "zeta": self.zeta,
            "aggregates": self.aggregates.model_dump(),
            "groups": {name: group.model_dump() for name, group in groups.items()},
            "revenue": {**self.revenue.model_dump(), "total": self.revenue.total},
            "revenue_target": self.revenue_target,
            "welfare": self.welfare,
            "regime": [flag.value for flag in self.policy.regime],
            "theta_star": self.policy.theta_star.tolist(),
            "a_star": self.policy.a_star.tolist(),
            "excess_demands": list(self.excess_demands()),
            "goods_market": goods_market(self).model_dump(),
            "resource_residual": resource_residual(self),
            "market_gap_value": market_gap_value(self),
            "alternative_roots": [root.model_dump() for root in self.alternative_roots],
            "solver": self.diagnostics,
        }


def aggregate_demands(
    prices: Prices, policy: PolicySolution, mellin: MellinEvaluator
) -> tuple[float, float]:
    """
    Aggregate demands for bonds and labour.

    Raises:
        DivergentMomentError: if rho(A(1)) >= 1 (E(S) is infinite)
    """
    m = np.real(mellin.joint_mellin(1.0))
    scale = policy.params.beta / policy.params.upsilon
    theta = policy.theta_star
    bonds = -policy.returns.h / prices.R + scale * float(m @ (1.0 - theta))
    labor = scale * float(m @ (theta * policy.returns.ell))
    return bonds, labor


def solve_policy_at(
    params: ModelParams,
    process: AbilityProcess,
    prices: Prices,
    settings: SolverSettings | None = None,
    x0: np.ndarray | None = None,
) -> tuple[PolicySolution, MellinEvaluator]:
    settings = settings or SolverSettings()
    context = HouseholdContext.build(params, process, prices)
    policy = solve_value_coefficients(
        context,
        x0,
        tol=settings.value_tol,
        max_iter=settings.value_max_iter,
        acceleration=settings.value_acceleration,
        regime_tol=settings.regime_tol,
    )
    return policy, MellinEvaluator.from_policy(policy, process)


class _ExcessDemand:
    """Excess demands as a function of prices, warm-starting the value iteration."""

    def __init__(self, params: ModelParams, process: AbilityProcess, settings: SolverSettings):
        self.params = params
        self.process = process
        self.settings = settings
        self.log_a: np.ndarray | None = None
        self.evaluations = 0

    def at_prices(self, R: float, omega: float) -> np.ndarray:
        self.evaluations += 1
        prices = Prices.within(self.params, R, omega)
        policy, mellin = solve_policy_at(self.params, self.process, prices, self.settings, self.log_a)
        self.log_a = np.log(policy.a_star)
        bonds, labor = aggregate_demands(prices, policy, mellin)
        return np.array([bonds, labor - 1.0])

    def prices_from(self, x: np.ndarray) -> tuple[float, float]:
        return self.params.upsilon + math.exp(x[0]), math.exp(x[1])

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.at_prices(*self.prices_from(x))


def _in_box(R: float, omega: float, params: ModelParams) -> bool:
    return params.upsilon < R < R_MAX_FACTOR / params.beta and OMEGA_MIN <= omega <= OMEGA_MAX


def _start_points(params: ModelParams, initial: Prices | None) -> list[tuple[float, float]]:
    span = 1.0 / params.beta - params.upsilon
    starts = [(params.upsilon + fraction * span, omega) for fraction, omega in _START_FRACTIONS]
    if initial is not None:
        starts.insert(0, (initial.R, initial.omega))
    return starts


def _broyden_root(
    excess: _ExcessDemand, start: tuple[float, float], tol: float
) -> tuple[float, float] | None:
    x0 = np.array([math.log(start[0] - excess.params.upsilon), math.log(start[1])])
    try:
        x = broyden_solve(excess, x0, tol=tol)
    except (FlatTaxError, np.linalg.LinAlgError, ValueError) as exc:
        logger.debug(f"Broyden from R={start[0]:.5f}, omega={start[1]:.4f} failed: {exc}")
        return None
    R, omega = excess.prices_from(x)
    return (R, omega) if _in_box(R, omega, excess.params) else None


def _scan_bracket(f, points: np.ndarray) -> tuple[float, float] | None:
    """First sign change of ``f`` over increasing ``points``, skipping failed evaluations."""
    previous = None
    for x in points:
        try:
            value = f(x)
        except FlatTaxError:
            continue
        if not math.isfinite(value):
            continue
        if value == 0.0:
            return float(x), float(x)
        if previous is not None and np.sign(value) != np.sign(previous[1]):
            return previous[0], float(x)
        previous = (float(x), value)
    return None


def _nested_root(excess: _ExcessDemand, tol: float) -> tuple[float, float] | None:
    """Bonds cleared in R for each wage (inner), labour cleared in the wage (outer)."""
    params = excess.params
    gaps = params.upsilon + np.geomspace(1e-4, R_MAX_FACTOR / params.beta - params.upsilon, _R_SCAN_POINTS)[:-1]

    def _clear_bonds(omega: float) -> float:
        bracket = _scan_bracket(lambda R: excess.at_prices(R, omega)[0], gaps)
        if bracket is None:
            raise EquilibriumNonexistenceError(f"Bond market does not clear at omega={omega:.4f}")
        lo, hi = bracket
        if lo == hi:
            return lo
        return float(brentq(lambda R: excess.at_prices(R, omega)[0], lo, hi, xtol=1e-14, rtol=1e-14))

    def _labor_gap(omega: float) -> float:
        return float(excess.at_prices(_clear_bonds(omega), omega)[1])

    bracket = _scan_bracket(_labor_gap, np.geomspace(OMEGA_MIN, OMEGA_MAX, _OMEGA_SCAN_POINTS))
    if bracket is None:
        return None
    lo, hi = bracket
    omega = lo if lo == hi else float(brentq(_labor_gap, lo, hi, xtol=1e-14, rtol=1e-14))
    R = _clear_bonds(omega)
    residual = float(np.max(np.abs(excess.at_prices(R, omega))))
    if residual > tol:
        logger.warning(f"Nested solver stopped with residual {residual:.2e}")
        return None
    return R, omega


def _is_new_root(root: tuple[float, float], roots: list[tuple[float, float]]) -> bool:
    return all(
        abs(root[0] - other[0]) > _ROOT_MATCH_TOL * other[0]
        or abs(root[1] - other[1]) > _ROOT_MATCH_TOL * other[1]
        for other in roots
    )


def equilibrium_at_prices(
    params: ModelParams,
    process: AbilityProcess,
    prices: Prices,
    settings: SolverSettings | None = None,
    x0: np.ndarray | None = None,
    revenue_target: float | None = None,
    alternative_roots: list[Prices] | None = None,
    diagnostics: dict[str, Any] | None = None,
) -> StationaryEquilibrium:
    """Assemble the equilibrium object at given prices (whether or not they clear markets)."""
    policy, mellin = solve_policy_at(params, process, prices, settings, x0)
    m = np.real(mellin.joint_mellin(1.0))
    bonds, labor = aggregate_demands(prices, policy, mellin)
    total = float(m.sum())
    scale = params.beta / params.upsilon
    aggregates = Aggregates(
        total_wealth=total,
        bonds=bonds,
        labor=labor,
        capital=scale * float(m @ policy.theta_star),
        consumption=(1.0 - params.beta) / (1.0 + params.tau_C) * total,
    )
    return StationaryEquilibrium(
        params=params,
        process=process,
        prices=prices,
        policy=policy,
        mellin=mellin,
        aggregates=aggregates,
        revenue=_revenue(params, process, prices, policy, m),
        welfare=welfare(policy, policy.returns.h, process.newborn_dist, params.gamma),
        revenue_target=revenue_target,
        alternative_roots=alternative_roots or [],
        diagnostics=diagnostics or {},
    )


def solve_equilibrium(
    params: ModelParams,
    process: AbilityProcess,
    revenue_target: float | None = None,
    *,
    settings: SolverSettings | None = None,
    initial: Prices | None = None,
    n_starts: int | None = None,
) -> StationaryEquilibrium:
    """
    Prices that clear the bond and labour markets.

    Broyden's method in ``(log(R - upsilon), log omega)`` runs from ``initial``
    (if given) and dispersed starting points; when every start fails, a nested
    bracketing scheme clears bonds in R for each wage and labour in the wage.
    With ``n_starts > 1`` every start is run and distinct roots are kept in
    ``alternative_roots``.

    Raises:
        EquilibriumNonexistenceError: if no prices in the search box clear both markets
    """
    settings = settings or SolverSettings()
    n_starts = settings.equilibrium_starts if n_starts is None else n_starts
    excess = _ExcessDemand(params, process, settings)
    starts = _start_points(params, initial)

    roots: list[tuple[float, float]] = []
    attempted = 0
    for start in starts:
        if attempted >= n_starts and roots:
            break
        attempted += 1
        root = _broyden_root(excess, start, settings.equilibrium_tol)
        if root is not None and _is_new_root(root, roots):
            roots.append(root)
    method = "broyden"

    if not roots:
        logger.warning("Broyden failed from every start; falling back to nested bracketing")
        method = "nested"
        root = _nested_root(excess, settings.equilibrium_tol)
        if root is not None:
            roots.append(root)

    if not roots:
        raise EquilibriumNonexistenceError(
            "No prices in the search box clear both markets",
            details={
                "params": params.model_dump(),
                "search_box": {
                    "R": [params.upsilon, R_MAX_FACTOR / params.beta],
                    "omega": [OMEGA_MIN, OMEGA_MAX],
                },
                "starts_tried": attempted,
                "evaluations": excess.evaluations,
            },
        )
    if len(roots) > 1:
        logger.warning(f"Found {len(roots)} distinct equilibria; reporting the first")

    R, omega = roots[0]
    result = equilibrium_at_prices(
        params,
        process,
        Prices.within(params, R, omega),
        settings,
        x0=excess.log_a,
        revenue_target=revenue_target,
        alternative_roots=[Prices.within(params, r, w) for r, w in roots[1:]],
        diagnostics={"method": method, "evaluations": excess.evaluations, "starts_tried": attempted},
    )
    residual = max(abs(value) for value in result.excess_demands())
    if residual > settings.equilibrium_tol:
        raise NonConvergenceError(
            f"Equilibrium residual {residual:.3g} exceeds {settings.equilibrium_tol:g}",
            residual=residual,
            iterations=excess.evaluations,
        )
    logger.info(
        f"Equilibrium R-1={R - 1.0:.5f}, omega={omega:.5f} after {excess.evaluations} evaluations"
    )
    return result


def welfare(policy: PolicySolution, h: float, newborn_dist: np.ndarray, gamma: float) -> float:
    """
    Certainty equivalent of a newborn's value ``a_J h`` over ``J ~ varpi``.

    The gain in this number between two regimes is the permanent percent
    increase in consumption that is equivalent to the change.
    """
    log_a = np.log(policy.a_star)
    weights = np.asarray(newborn_dist, dtype=float)
    if gamma == 1.0:
        return float(h * math.exp(weights @ log_a))
    mask = weights > 0.0
    log_mean = logsumexp((1.0 - gamma) * log_a[mask], b=weights[mask]) / (1.0 - gamma)
    return float(h * math.exp(log_mean))


def welfare_gain(new: StationaryEquilibrium | float, old: StationaryEquilibrium | float) -> float:
    """Percent-of-consumption equivalent gain as a fraction."""
    new_value = new.welfare if isinstance(new, StationaryEquilibrium) else float(new)
    old_value = old.welfare if isinstance(old, StationaryEquilibrium) else float(old)
    return new_value / old_value - 1.0


def _capital_tax_by_state(
    params: ModelParams, process: AbilityProcess, policy: PolicySolution, m: np.ndarray
) -> np.ndarray:
    expected_return = process.transition @ policy.returns.r
    factor = params.tau_K / (1.0 - params.tau_K) * params.beta
    return factor * m * policy.theta_star * expected_return


def _revenue(
    params: ModelParams,
    process: AbilityProcess,
    prices: Prices,
    policy: PolicySolution,
    m: np.ndarray,
) -> RevenueBreakdown:
    total = float(m.sum())
    return RevenueBreakdown(
        labor=params.tau_L * prices.omega,
        consumption=params.tau_C / (1.0 + params.tau_C) * (1.0 - params.beta) * total,
        capital=float(_capital_tax_by_state(params, process, policy, m).sum()),
    )


def tax_revenue(equilibrium: StationaryEquilibrium) -> RevenueBreakdown:
    """Revenue components; their sum is ``.total``."""
    return _revenue(
        equilibrium.params,
        equilibrium.process,
        equilibrium.prices,
        equilibrium.policy,
        equilibrium.state_moments,
    )


def group_aggregates(equilibrium: StationaryEquilibrium) -> dict[str, GroupAggregates]:
    """Workers and entrepreneurs by current state; each field sums to the aggregate."""
    params = equilibrium.params
    process = equilibrium.process
    policy = equilibrium.policy
    m = equilibrium.state_moments
    p = process.stationary_dist
    theta = policy.theta_star
    scale = params.beta / params.upsilon
    consumption = (1.0 - params.beta) / (1.0 + params.tau_C) * m
    capital = scale * theta * m
    bonds = -p * equilibrium.h / equilibrium.prices.R + scale * (1.0 - theta) * m
    labor = capital * policy.returns.ell
    tax = (
        params.tau_L * equilibrium.prices.omega * p
        + params.tau_C * consumption
        + _capital_tax_by_state(params, process, policy, m)
    )

    def _group(mask: np.ndarray) -> GroupAggregates:
        return GroupAggregates(
            mass=float(p[mask].sum()),
            consumption=float(consumption[mask].sum()),
            capital=float(capital[mask].sum()),
            bonds=float(bonds[mask].sum()),
            labor=float(labor[mask].sum()),
            total_wealth=float(m[mask].sum()),
            tax_paid=float(tax[mask].sum()),
        )

    return {
        "workers": _group(process.worker_mask),
        "entrepreneurs": _group(process.entrepreneur_mask),
    }


class GoodsMarket(FrozenModel):
    """
    Stationary goods-market flows per capita.

    ``consumption`` is gross of tax, so it already covers the government
    purchases financed by the consumption tax; ``government`` is the part
    financed by labour and capital income taxes. Net investment is zero in the
    stationary state.
    """

    output: float
    depreciation: float
    consumption: float
    government: float
    installed_capital: float
    labor_employed: float

    @property
    def residual(self) -> float:
        return self.output - self.depreciation - self.consumption - self.government


def goods_market(equilibrium: StationaryEquilibrium) -> GoodsMarket:
    """
    Output, depreciation and uses of goods at the equilibrium's prices.

    Capital is the survivors' holdings ``beta * theta_n * E(S 1{J=n})``, each
    unit run with the labour intensity of its owner's new state.
    """
    params = equilibrium.params
    process = equilibrium.process
    returns = equilibrium.policy.returns
    installed = params.beta * (equilibrium.policy.theta_star * equilibrium.state_moments) @ process.transition
    per_unit_output = process.productivities * returns.ell ** (1.0 - params.alpha)
    capital = float(installed.sum())
    return GoodsMarket(
        output=float(installed @ per_unit_output),
        depreciation=params.delta * capital,
        consumption=(1.0 + params.tau_C) * equilibrium.aggregates.consumption,
        government=equilibrium.revenue.labor + equilibrium.revenue.capital,
        installed_capital=capital,
        labor_employed=float(installed @ returns.ell),
    )


def resource_residual(equilibrium: StationaryEquilibrium) -> float:
    """
    Goods-market residual: output minus depreciation, gross consumption and government purchases.

    Equal to :func:`market_gap_value` at any prices, so it vanishes only when
    employed labour is one and the bond market clears.
    """
    return goods_market(equilibrium).residual


def market_gap_value(equilibrium: StationaryEquilibrium) -> float:
    """``omega*(L_employed - 1) - upsilon*(R - 1)*E(B)``."""
    prices = equilibrium.prices
    employed = goods_market(equilibrium).labor_employed
    return prices.omega * (employed - 1.0) - equilibrium.params.upsilon * (prices.R - 1.0) * equilibrium.aggregates.bonds

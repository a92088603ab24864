"""
Searches over revenue-preserving flat tax mixes.

Every candidate mix is evaluated at its own stationary equilibrium and one of
the three rates is pinned down by the revenue target. Because ``(R, omega)``,
the portfolio weights and the wealth law do not depend on ``tau_C`` (it only
scales the value coefficients by ``1/(1+tau_C)``), the consumption rate that
meets the target is available in closed form from one equilibrium solve.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from concurrent.futures import ProcessPoolExecutor
from typing import Any

import numpy as np
import pandas as pd
from pydantic import Field
from scipy.optimize import brentq, minimize

from flat_tax_equilibrium.calibration import CalibrationTargets, calibrate
from flat_tax_equilibrium.config import SolverSettings
from flat_tax_equilibrium.equilibrium import (
    StationaryEquilibrium,
    group_aggregates,
    solve_equilibrium,
)
from flat_tax_equilibrium.exceptions import FlatTaxError, InfeasibleTaxMixError, NonConvergenceError
from flat_tax_equilibrium.model_core import (
    AbilityProcess,
    ModelParams,
    Prices,
    TaxRates,
    post_tax_wage,
    pre_tax_interest,
)
from flat_tax_equilibrium.numerics import golden_section_max
from flat_tax_equilibrium.type_helpers import ArrayModel, BorrowingRegime, FreeRate, SweepParameter

logger = logging.getLogger(__name__)

__all__ = [
    "TaxRegimePoint",
    "EquilibriumSolver",
    "FrontierResult",
    "FullSearchResult",
    "SweepResult",
    "overall_regime",
    "revenue_preserving_rate",
    "consumption_tax_for_target",
    "optimize_no_consumption_tax",
    "optimize_full",
    "optimize_consumption_only",
    "sweep",
]

_RATE_DIGITS = 12
_BRACKET_STEP = 0.02
_SCAN_POINTS = 21
_INFEASIBLE_PENALTY = 1e6


def overall_regime(regimes: tuple[BorrowingRegime, ...]) -> BorrowingRegime:
    """Strictly binding if any state is, else barely binding if any state is, else slack."""
    if BorrowingRegime.STRICTLY_BINDING in regimes:
        return BorrowingRegime.STRICTLY_BINDING
    if BorrowingRegime.BARELY_BINDING in regimes:
        return BorrowingRegime.BARELY_BINDING
    return BorrowingRegime.SLACK


class TaxRegimePoint(ArrayModel):
    """A revenue-preserving tax mix and its equilibrium."""

    rates: TaxRates
    prices: Prices
    welfare: float
    revenue: float
    revenue_gap: float
    regime: BorrowingRegime
    state_regimes: tuple[BorrowingRegime, ...]
    equilibrium: StationaryEquilibrium | None = Field(default=None, exclude=True)

    @classmethod
    def from_equilibrium(cls, equilibrium: StationaryEquilibrium, target: float) -> TaxRegimePoint:
        return cls(
            rates=equilibrium.params.rates,
            prices=equilibrium.prices,
            welfare=equilibrium.welfare,
            revenue=equilibrium.revenue.total,
            revenue_gap=equilibrium.revenue.total - target,
            regime=overall_regime(equilibrium.policy.regime),
            state_regimes=equilibrium.policy.regime,
            equilibrium=equilibrium,
        )

    def row(self) -> dict[str, Any]:
        row: dict[str, Any] = {
            "tau_L": self.rates.tau_L,
            "tau_K": self.rates.tau_K,
            "tau_C": self.rates.tau_C,
            "welfare": self.welfare,
            "R": self.prices.R,
            "omega": self.prices.omega,
            "interest_pre_tax": pre_tax_interest(self.prices.R, self.rates.tau_K),
            "wage_post_tax": post_tax_wage(self.prices.omega, self.rates.tau_L),
            "revenue": self.revenue,
            "revenue_gap": self.revenue_gap,
            "regime": self.regime.value,
        }
        if self.equilibrium is not None:
            groups = group_aggregates(self.equilibrium)
            row.update(
                capital=self.equilibrium.aggregates.capital,
                consumption_total=self.equilibrium.aggregates.consumption,
                consumption_workers=groups["workers"].consumption,
                consumption_entrepreneurs=groups["entrepreneurs"].consumption,
                zeta=self.equilibrium.zeta,
            )
        return row


class EquilibriumSolver:
    """
    Solves equilibria for tax mixes of one economy, caching by rates and
    warm-starting each solve from the last prices found.
    """

    def __init__(
        self,
        params: ModelParams,
        process: AbilityProcess,
        settings: SolverSettings | None = None,
    ):
        self.params = params
        self.process = process
        self.settings = settings or SolverSettings()
        self._cache: dict[tuple[float, float, float], StationaryEquilibrium] = {}
        self._last_prices: Prices | None = None

    def __len__(self) -> int:
        return len(self._cache)

    def solve(self, rates: TaxRates, revenue_target: float | None = None) -> StationaryEquilibrium:
        key = tuple(round(value, _RATE_DIGITS) for value in rates.as_tuple())
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        equilibrium = solve_equilibrium(
            self.params.with_rates(rates),
            self.process,
            revenue_target,
            settings=self.settings,
            initial=self._last_prices,
            n_starts=1,
        )
        self._last_prices = equilibrium.prices
        self._cache[key] = equilibrium
        return equilibrium

    def revenue(self, rates: TaxRates) -> float:
        return self.solve(rates).revenue.total


def _accepted(point: TaxRegimePoint, free_rate: FreeRate, target: float, tol: float) -> TaxRegimePoint:
    """
    The point itself, once its revenue is within ``tol`` of the target.

    Raises:
        NonConvergenceError: if the revenue gap exceeds ``tol * |target|``
    """
    if abs(point.revenue_gap) > tol * abs(target):
        raise NonConvergenceError(
            f"Revenue gap {point.revenue_gap:.3g} at {free_rate}={getattr(point.rates, free_rate):.6f} "
            f"exceeds {tol:g} of the target",
            residual=point.revenue_gap,
            iterations=1,
        )
    return point


def consumption_tax_for_target(
    solver: EquilibriumSolver, tau_L: float, tau_K: float, target: float
) -> TaxRegimePoint:
    """
    Closed-form ``tau_C`` meeting the revenue target given the income tax rates.

    Raises:
        InfeasibleTaxMixError: if income taxes alone already exceed the target,
            or consumption tax revenue cannot reach it
        NonConvergenceError: if the solved point misses the target
    """
    base = solver.solve(TaxRates(tau_L=tau_L, tau_K=tau_K, tau_C=0.0))
    beta = solver.params.beta
    income = base.revenue.labor + base.revenue.capital
    share = (target - income) / ((1.0 - beta) * base.aggregates.total_wealth)
    if not 0.0 <= share < 1.0:
        raise InfeasibleTaxMixError(
            f"No tau_C >= 0 meets revenue {target:.6g} at tau_L={tau_L:.4f}, tau_K={tau_K:.4f} "
            f"(income tax revenue {income:.6g})",
            free_rate="tau_C",
            target=target,
        )
    tau_C = share / (1.0 - share)
    equilibrium = solver.solve(TaxRates(tau_L=tau_L, tau_K=tau_K, tau_C=tau_C), target)
    point = TaxRegimePoint.from_equilibrium(equilibrium, target)
    return _accepted(point, "tau_C", target, solver.settings.revenue_tol)


def _rate_bounds(free_rate: FreeRate, settings: SolverSettings) -> tuple[float, float]:
    return (0.0, settings.tau_L_max) if free_rate == "tau_L" else (0.0, settings.tau_K_max)


def _bracket_from_guess(
    f: Callable[[float], float], guess: float, lo: float, hi: float, step: float
) -> tuple[float, float] | None:
    """Walk from ``guess`` towards the root of ``f`` until the sign flips."""
    x0 = min(max(guess, lo), hi)
    f0 = f(x0)
    if f0 == 0.0:
        return x0, x0
    x1 = x0 + step if x0 + step <= hi else x0 - step
    f1 = f(x1)
    if np.sign(f1) != np.sign(f0):
        return (min(x0, x1), max(x0, x1))
    slope = (f1 - f0) / (x1 - x0)
    if slope == 0.0:
        return None
    direction = -np.sign(f0) * np.sign(slope)
    x_prev, f_prev = x0, f0
    while True:
        x_next = min(max(x_prev + direction * step, lo), hi)
        if x_next == x_prev:
            return None
        f_next = f(x_next)
        if np.sign(f_next) != np.sign(f_prev):
            return (min(x_prev, x_next), max(x_prev, x_next))
        x_prev, f_prev = x_next, f_next


def _bracket_by_scan(f: Callable[[float], float], lo: float, hi: float) -> tuple[float, float] | None:
    previous = None
    for x in np.linspace(lo, hi, _SCAN_POINTS):
        try:
            value = f(float(x))
        except FlatTaxError:
            continue
        if previous is not None and np.sign(value) != np.sign(previous[1]):
            return previous[0], float(x)
        previous = (float(x), value)
    return None


def revenue_preserving_rate(
    solver: EquilibriumSolver,
    free_rate: FreeRate,
    rates: TaxRates,
    target: float,
    guess: float | None = None,
) -> TaxRegimePoint:
    """
    Solve for the free rate that makes equilibrium revenue equal ``target``.

    The other two rates are taken from ``rates``. ``tau_C`` is solved in
    closed form; ``tau_L`` and ``tau_K`` by Brent's method on a bracket found
    by walking from ``guess`` (or scanning the legal range).

    Raises:
        InfeasibleTaxMixError: if no rate in the legal range meets the target
        NonConvergenceError: if the solved point misses the target
    """
    if free_rate == "tau_C":
        return consumption_tax_for_target(solver, rates.tau_L, rates.tau_K, target)

    settings = solver.settings
    lo, hi = _rate_bounds(free_rate, settings)

    def _gap(value: float) -> float:
        return solver.revenue(TaxRates.model_validate({**rates.model_dump(), free_rate: value})) - target

    bracket = None
    if guess is not None:
        try:
            bracket = _bracket_from_guess(_gap, guess, lo, hi, _BRACKET_STEP)
        except FlatTaxError as exc:
            logger.debug(f"Bracket walk from {free_rate}={guess:.4f} failed: {exc}")
    if bracket is None:
        bracket = _bracket_by_scan(_gap, lo, hi)
    if bracket is None:
        raise InfeasibleTaxMixError(
            f"No {free_rate} in [{lo}, {hi}] meets revenue {target:.6g} with rates {rates.as_tuple()}",
            free_rate=free_rate,
            target=target,
        )

    a, b = bracket
    value = a if a == b else float(brentq(_gap, a, b, xtol=1e-12, rtol=1e-12))
    final = TaxRates.model_validate({**rates.model_dump(), free_rate: value})
    point = TaxRegimePoint.from_equilibrium(solver.solve(final, target), target)
    return _accepted(point, free_rate, target, settings.revenue_tol)


class FrontierResult(ArrayModel):
    """Revenue-preserving (tau_L, tau_K) mixes with tau_C = 0 and the welfare maximum."""

    points: list[TaxRegimePoint]
    optimum: TaxRegimePoint
    kink_tau_K: float | None = None
    failures: list[dict[str, Any]] = Field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([point.row() for point in self.points])
        if frame.empty:
            return frame
        flags = frame["regime"].to_numpy()
        frame["kink"] = np.concatenate([[False], flags[1:] != flags[:-1]])
        return frame


def _frontier_point(solver: EquilibriumSolver, tau_K: float, target: float, guess: float | None) -> TaxRegimePoint:
    return revenue_preserving_rate(
        solver, "tau_L", TaxRates(tau_L=guess or 0.0, tau_K=tau_K, tau_C=0.0), target, guess=guess
    )


def _frontier_column(
    params: ModelParams,
    process: AbilityProcess,
    settings: SolverSettings,
    target: float,
    tau_K_values: list[float],
) -> list[TaxRegimePoint | dict[str, Any]]:
    """Frontier points for consecutive tau_K values, each warm-started from the last."""
    solver = EquilibriumSolver(params, process, settings)
    out: list[TaxRegimePoint | dict[str, Any]] = []
    guess = params.tau_L
    for tau_K in tau_K_values:
        try:
            point = _frontier_point(solver, tau_K, target, guess)
        except FlatTaxError as exc:
            logger.warning(f"Frontier point tau_K={tau_K:.4f} failed: {exc}")
            out.append({"tau_K": tau_K, **exc.diagnostics()})
            continue
        guess = point.rates.tau_L
        out.append(point)
    return out


def _split(values: list[float], parts: int) -> list[list[float]]:
    parts = max(1, min(parts, len(values)))
    return [chunk.tolist() for chunk in np.array_split(np.asarray(values), parts) if chunk.size]


def _locate_boundary(
    regime_at: Callable[[float], BorrowingRegime], lo: float, hi: float, tol: float
) -> float:
    """Bisection on a regime flag between ``lo`` and ``hi`` (whose flags differ)."""
    left = regime_at(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if regime_at(mid) == left:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _snap_to_kink(
    point: TaxRegimePoint,
    kink: float | None,
    settle: Callable[[float], TaxRegimePoint],
    tol: float,
) -> TaxRegimePoint:
    if kink is None or abs(point.rates.tau_K - kink) > tol:
        return point
    snapped = settle(kink)
    logger.info(f"Optimum at tau_K={point.rates.tau_K:.5f} snapped to kink {kink:.5f}")
    return snapped.model_copy(update={"regime": BorrowingRegime.BARELY_BINDING})


def optimize_no_consumption_tax(
    params: ModelParams,
    process: AbilityProcess,
    target: float,
    settings: SolverSettings | None = None,
    threads: int = 1,
) -> FrontierResult:
    """
    Welfare maximum over ``tau_K`` with ``tau_C = 0`` and ``tau_L`` implied by revenue.

    A grid in ``tau_K`` is refined by golden-section search around the best
    grid point. The kink where the borrowing regime changes is located by
    bisection between the grid points whose flags differ.
    """
    settings = settings or SolverSettings()
    n_steps = int(round(settings.tau_K_max / settings.frontier_step))
    grid = [round(i * settings.frontier_step, 10) for i in range(n_steps + 1)]

    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(_frontier_column, params, process, settings, target, chunk)
                for chunk in _split(grid, threads)
            ]
            results = [item for future in futures for item in future.result()]
    else:
        results = _frontier_column(params, process, settings, target, grid)

    points = [item for item in results if isinstance(item, TaxRegimePoint)]
    failures = [item for item in results if not isinstance(item, TaxRegimePoint)]
    if not points:
        raise InfeasibleTaxMixError(
            "No feasible point on the no-consumption-tax frontier", free_rate="tau_L", target=target
        )

    solver = EquilibriumSolver(params, process, settings)

    def _settle(tau_K: float) -> TaxRegimePoint:
        nearest = min(points, key=lambda point: abs(point.rates.tau_K - tau_K))
        return _frontier_point(solver, tau_K, target, nearest.rates.tau_L)

    kink = None
    for left, right in zip(points[:-1], points[1:]):
        if left.regime != right.regime:
            kink = _locate_boundary(
                lambda x: _settle(x).regime, left.rates.tau_K, right.rates.tau_K, settings.kink_tol
            )
            logger.info(f"Borrowing regime changes at tau_K={kink:.5f}")
            break

    best = max(points, key=lambda point: point.welfare)
    lo = max(0.0, best.rates.tau_K - settings.frontier_step)
    hi = min(settings.tau_K_max, best.rates.tau_K + settings.frontier_step)
    tau_K_star, _ = golden_section_max(lambda x: _settle(x).welfare, lo, hi, tol=0.5 * settings.kink_tol)
    optimum = _settle(tau_K_star)
    if optimum.welfare < best.welfare:
        optimum = best
    optimum = _snap_to_kink(optimum, kink, _settle, 2.0 * settings.kink_tol)
    logger.info(
        f"No-consumption-tax optimum tau_K={optimum.rates.tau_K:.4f}, tau_L={optimum.rates.tau_L:.4f}"
    )
    return FrontierResult(points=points, optimum=optimum, kink_tau_K=kink, failures=failures)


class FullSearchResult(ArrayModel):
    """Grid over (tau_L, tau_K) with tau_C implied, refined local optima and the global one."""

    grid: list[TaxRegimePoint]
    candidates: list[TaxRegimePoint]
    optimum: TaxRegimePoint

    def grid_frame(self) -> pd.DataFrame:
        return pd.DataFrame([point.row() for point in self.grid])

    def candidate_frame(self) -> pd.DataFrame:
        return pd.DataFrame([point.row() for point in self.candidates])


def _full_column(
    params: ModelParams,
    process: AbilityProcess,
    settings: SolverSettings,
    target: float,
    tau_K_values: list[float],
) -> list[TaxRegimePoint]:
    """Grid points for each tau_K, with tau_L rising until tau_C would turn negative."""
    solver = EquilibriumSolver(params, process, settings)
    out = []
    n_steps = int(round(settings.tau_L_max / settings.full_grid_step))
    for tau_K in tau_K_values:
        for i in range(n_steps + 1):
            tau_L = round(i * settings.full_grid_step, 10)
            try:
                out.append(consumption_tax_for_target(solver, tau_L, tau_K, target))
            except InfeasibleTaxMixError:
                break
            except FlatTaxError as exc:
                logger.warning(f"Grid point tau_L={tau_L:.3f}, tau_K={tau_K:.3f} failed: {exc}")
    return out


def optimize_consumption_only(
    params: ModelParams,
    process: AbilityProcess,
    target: float,
    settings: SolverSettings | None = None,
) -> TaxRegimePoint:
    """The only revenue-preserving mix with tau_L = tau_K = 0."""
    solver = EquilibriumSolver(params, process, settings)
    return consumption_tax_for_target(solver, 0.0, 0.0, target)


def optimize_full(
    params: ModelParams,
    process: AbilityProcess,
    target: float,
    settings: SolverSettings | None = None,
    threads: int = 1,
) -> FullSearchResult:
    """
    Welfare maximum over (tau_L, tau_K) with tau_C implied by revenue.

    The best ``optimizer_starts`` grid points, plus midpoints of grid edges
    where the borrowing regime flips, seed bounded Nelder-Mead refinements.
    Welfare is kinked at regime boundaries, so no derivatives are used.
    """
    settings = settings or SolverSettings()
    n_steps = int(round(settings.tau_K_max / settings.full_grid_step))
    tau_K_grid = [round(i * settings.full_grid_step, 10) for i in range(n_steps + 1)]

    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(_full_column, params, process, settings, target, chunk)
                for chunk in _split(tau_K_grid, threads)
            ]
            grid = [point for future in futures for point in future.result()]
    else:
        grid = _full_column(params, process, settings, target, tau_K_grid)
    if not grid:
        raise InfeasibleTaxMixError("No feasible tax mix on the grid", free_rate="tau_C", target=target)

    ranked = sorted(grid, key=lambda point: point.welfare, reverse=True)
    starts = [(point.rates.tau_L, point.rates.tau_K) for point in ranked[: settings.optimizer_starts]]

    # Ridge restarts: midpoints of tau_K grid edges where the regime flips, best first
    step = settings.full_grid_step
    by_rates = {(round(p.rates.tau_L, 8), round(p.rates.tau_K, 8)): p for p in grid}
    edges = []
    for (tau_L, tau_K), point in by_rates.items():
        neighbour = by_rates.get((tau_L, round(tau_K + step, 8)))
        if neighbour is not None and neighbour.regime != point.regime:
            edges.append((max(point.welfare, neighbour.welfare), (tau_L, tau_K + 0.5 * step)))
    edges.sort(key=lambda edge: edge[0], reverse=True)
    starts.extend(start for _, start in edges[: settings.optimizer_starts])

    solver = EquilibriumSolver(params, process, settings)

    def _objective(x: np.ndarray) -> float:
        try:
            return -consumption_tax_for_target(solver, float(x[0]), float(x[1]), target).welfare
        except FlatTaxError:
            return _INFEASIBLE_PENALTY

    bounds = [(0.0, settings.tau_L_max), (0.0, settings.tau_K_max)]
    candidates: list[TaxRegimePoint] = []
    for start in starts:
        result = minimize(
            _objective,
            x0=np.asarray(start),
            method="Nelder-Mead",
            bounds=bounds,
            options={
                "xatol": settings.kink_tol,
                "fatol": 1e-12,
                "initial_simplex": _initial_simplex(start, step, bounds),
            },
        )
        if result.fun >= _INFEASIBLE_PENALTY:
            continue
        point = consumption_tax_for_target(solver, float(result.x[0]), float(result.x[1]), target)
        candidates.append(point)
        logger.debug(
            f"Refined start {start} to tau_L={point.rates.tau_L:.4f}, tau_K={point.rates.tau_K:.4f}"
        )

    candidates.append(ranked[0])
    optimum = max(candidates, key=lambda point: point.welfare)
    optimum = _label_full_boundary(solver, optimum, target, settings)
    logger.info(
        f"Full optimum tau_L={optimum.rates.tau_L:.4f}, tau_K={optimum.rates.tau_K:.4f}, "
        f"tau_C={optimum.rates.tau_C:.4f}"
    )
    return FullSearchResult(grid=grid, candidates=candidates, optimum=optimum)


def _initial_simplex(start: tuple[float, float], step: float, bounds: list[tuple[float, float]]) -> np.ndarray:
    x = np.clip(np.asarray(start, dtype=float), [b[0] for b in bounds], [b[1] for b in bounds])
    simplex = [x.copy()]
    for axis in range(2):
        vertex = x.copy()
        vertex[axis] = vertex[axis] + step if vertex[axis] + step <= bounds[axis][1] else vertex[axis] - step
        simplex.append(vertex)
    return np.asarray(simplex)


def _label_full_boundary(
    solver: EquilibriumSolver, point: TaxRegimePoint, target: float, settings: SolverSettings
) -> TaxRegimePoint:
    """Label an optimum that sits on a regime boundary in tau_K as barely binding."""
    offset = 10.0 * settings.kink_tol
    regimes = set()
    for tau_K in (point.rates.tau_K - offset, point.rates.tau_K + offset):
        if not 0.0 <= tau_K <= settings.tau_K_max:
            continue
        try:
            regimes.add(consumption_tax_for_target(solver, point.rates.tau_L, tau_K, target).regime)
        except FlatTaxError:
            continue
    if len(regimes) > 1:
        return point.model_copy(update={"regime": BorrowingRegime.BARELY_BINDING})
    return point


class SweepResult(ArrayModel):
    """Optimal rates across a parameter grid and the borrowing-regime regions."""

    parameter: SweepParameter
    mode: str
    rows: list[dict[str, Any]]
    boundaries: list[float]
    failures: list[dict[str, Any]] = Field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    def regions(self) -> list[dict[str, Any]]:
        """Contiguous runs of one regime, with their boundaries."""
        runs: list[dict[str, Any]] = []
        for row in self.rows:
            if runs and runs[-1]["regime"] == row["regime"]:
                runs[-1]["end"] = row[self.parameter]
            else:
                runs.append({"regime": row["regime"], "start": row[self.parameter], "end": row[self.parameter]})
        return runs


def _economy_for(
    parameter: SweepParameter, value: float, params: ModelParams, targets: CalibrationTargets
) -> tuple[ModelParams, AbilityProcess]:
    if parameter == "gamma":
        return params.replace(gamma=value), calibrate(targets, params.upsilon).process
    perturbed = targets.model_copy(update={"sigma": value})
    perturbed = CalibrationTargets.model_validate(perturbed.model_dump())
    return params, calibrate(perturbed, params.upsilon).process


def _sweep_point(
    parameter: SweepParameter,
    value: float,
    params: ModelParams,
    targets: CalibrationTargets,
    settings: SolverSettings,
    mode: str,
) -> dict[str, Any]:
    """Re-calibrate, recompute the revenue target at the baseline rates, re-optimize."""
    economy_params, process = _economy_for(parameter, value, params, targets)
    baseline = solve_equilibrium(economy_params, process, settings=settings)
    target = baseline.revenue.total
    if mode == "no_consumption_tax":
        optimum = optimize_no_consumption_tax(economy_params, process, target, settings).optimum
    else:
        optimum = optimize_full(economy_params, process, target, settings).optimum
    return {parameter: value, "target_revenue": target, **optimum.row()}


def sweep(
    parameter: SweepParameter,
    grid: list[float],
    params: ModelParams,
    targets: CalibrationTargets,
    settings: SolverSettings | None = None,
    mode: str = "full",
    threads: int = 1,
) -> SweepResult:
    """
    Optimal tax mix across ``grid`` values of gamma or sigma.

    Points that fail are recorded and skipped. Between neighbouring points whose
    optimum lies in different borrowing regimes the boundary is located by
    bisection in the parameter.
    """
    settings = settings or SolverSettings()
    if mode not in ("full", "no_consumption_tax"):
        raise ValueError(f"Unknown sweep mode '{mode}'")

    def _run(values: list[float]) -> list[dict[str, Any] | Exception]:
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                futures = [
                    pool.submit(_sweep_point, parameter, value, params, targets, settings, mode)
                    for value in values
                ]
                outcomes: list[dict[str, Any] | Exception] = []
                for future in futures:
                    try:
                        outcomes.append(future.result())
                    except FlatTaxError as exc:
                        outcomes.append(exc)
                return outcomes
        outcomes = []
        for value in values:
            try:
                outcomes.append(_sweep_point(parameter, value, params, targets, settings, mode))
            except FlatTaxError as exc:
                outcomes.append(exc)
        return outcomes

    rows, failures = [], []
    for value, outcome in zip(grid, _run(list(grid))):
        if isinstance(outcome, Exception):
            logger.warning(f"Sweep point {parameter}={value} failed: {outcome}")
            failures.append({parameter: value, **outcome.diagnostics()})
        else:
            rows.append(outcome)

    def _regime_at(value: float) -> str:
        try:
            return _sweep_point(parameter, value, params, targets, settings, mode)["regime"]
        except FlatTaxError:
            return "failed"

    boundaries = []
    for left, right in zip(rows[:-1], rows[1:]):
        if left["regime"] != right["regime"]:
            boundary = _locate_boundary(
                _regime_at, left[parameter], right[parameter], settings.sweep_boundary_tol
            )
            boundaries.append(boundary)
            logger.info(f"Regime boundary {left['regime']} -> {right['regime']} at {parameter}={boundary:.4f}")
    return SweepResult(parameter=parameter, mode=mode, rows=rows, boundaries=boundaries, failures=failures)


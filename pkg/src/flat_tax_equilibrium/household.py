"""
The household problem.

With unit elasticity of intertemporal substitution the value function is
linear in total wealth, ``V_n(s) = a_n s``. A household in state ``n`` picks
the capital share ``theta`` that maximizes the certainty equivalent of next
period's value,

    g_n(theta; a) = sum_n' pi_nn' nu_gamma(a_n' R_n'(theta)),

which is concave in ``theta``, so the optimum is found by bisection on the
analytic derivative. The value coefficients solve the fixed point of the
Bellman map ``T``, a contraction of modulus ``beta`` in log space.
"""

from __future__ import annotations

import logging
import math
from typing import NamedTuple

import numpy as np
from pydantic import Field
from scipy.special import logsumexp

from flat_tax_equilibrium.constants import (
    REGIME_TOL,
    THETA_TOL,
    VALUE_MAX_ITER,
    VALUE_TOL,
)
from flat_tax_equilibrium.exceptions import ModelDomainError, NonConvergenceError
from flat_tax_equilibrium.model_core import (
    AbilityProcess,
    ModelParams,
    Prices,
    StateReturns,
    box_cox,
    gross_return_matrix,
    state_returns,
)
from flat_tax_equilibrium.type_helpers import (
    ArrayModel,
    BorrowingRegime,
    FloatArray,
    FrozenModel,
)

logger = logging.getLogger(__name__)

__all__ = [
    "HouseholdContext",
    "ConvergenceReport",
    "PolicySolution",
    "DecisionRule",
    "portfolio_objective",
    "portfolio_objective_derivative",
    "optimal_theta",
    "optimal_thetas",
    "log_certainty_equivalents",
    "bellman_step",
    "solve_value_coefficients",
    "decision_rules",
    "classify_regime",
]

# Portfolio weights this close to one count as a full-leverage corner
_CORNER_TOL = 1e-9


class HouseholdContext(ArrayModel):
    """Everything the household takes as given in a stationary environment."""

    params: ModelParams
    process: AbilityProcess
    prices: Prices
    returns: StateReturns

    @classmethod
    def build(
        cls, params: ModelParams, process: AbilityProcess, prices: Prices
    ) -> HouseholdContext:
        return cls(
            params=params,
            process=process,
            prices=prices,
            returns=state_returns(process, params, prices),
        )

    @property
    def log_consumption_share(self) -> float:
        return math.log((1.0 - self.params.beta) / (1.0 + self.params.tau_C))


class ConvergenceReport(FrozenModel):
    iterations: int
    residual: float
    accelerated: bool
    residual_history: list[float] = Field(default_factory=list)


class PolicySolution(ArrayModel):
    """Solved value coefficients, portfolio weights and the implied wealth growth."""

    a_star: FloatArray
    theta_star: FloatArray
    kappa: FloatArray
    growth: FloatArray
    returns: StateReturns
    regime: tuple[BorrowingRegime, ...]
    iterations: ConvergenceReport
    params: ModelParams
    prices: Prices

    def diagnostics(self) -> dict:
        return {
            "a_star": self.a_star.tolist(),
            "theta_star": self.theta_star.tolist(),
            "kappa": self.kappa.tolist(),
            "regime": [flag.value for flag in self.regime],
            "iterations": self.iterations.model_dump(),
        }


class DecisionRule(NamedTuple):
    C: float
    K: float
    L: float
    B: float


def _log_gross(theta: np.ndarray, r: np.ndarray, R: float, upsilon: float) -> np.ndarray:
    gross = gross_return_matrix(theta, r, R, upsilon)
    if np.any(gross <= 0.0):
        raise ModelDomainError("Gross return on total wealth must be positive")
    return np.log(gross)


def _slope_signals(
    theta: np.ndarray,
    log_a: np.ndarray,
    transition: np.ndarray,
    r: np.ndarray,
    R: float,
    upsilon: float,
    gamma: float,
) -> np.ndarray:
    """g_n'(theta_n) for every n, each row rescaled by a positive constant."""
    exponent = (1.0 - gamma) * log_a[None, :] - gamma * _log_gross(theta, r, R, upsilon)
    exponent = np.where(transition > 0.0, exponent, -np.inf)
    shift = exponent.max(axis=1, keepdims=True)
    weights = transition * np.exp(exponent - shift)
    return weights @ ((1.0 + r - R) / upsilon)


def optimal_thetas(
    log_a: np.ndarray,
    transition: np.ndarray,
    r: np.ndarray,
    R: float,
    upsilon: float,
    gamma: float,
    tol: float = THETA_TOL,
) -> np.ndarray:
    """
    Maximizers of ``g_n`` on [0, 1] for all states at once.

    Corners are detected from the derivative sign at 0 and 1; interior optima
    are bracketed by bisection to ``tol``. A zero derivative at 0 (riskless
    equivalence) returns 0.
    """
    n = log_a.size
    args = (log_a, transition, r, R, upsilon, gamma)
    d0 = _slope_signals(np.zeros(n), *args)
    d1 = _slope_signals(np.ones(n), *args)
    theta = np.where(d0 <= 0.0, 0.0, 1.0)
    interior = (d0 > 0.0) & (d1 < 0.0)
    if interior.any():
        lo = np.zeros(n)
        hi = np.ones(n)
        for _ in range(int(math.ceil(math.log2(1.0 / tol)))):
            mid = 0.5 * (lo + hi)
            rising = _slope_signals(mid, *args) > 0.0
            lo = np.where(rising, mid, lo)
            hi = np.where(rising, hi, mid)
        theta = np.where(interior, 0.5 * (lo + hi), theta)
    return theta


def log_certainty_equivalents(
    theta: np.ndarray,
    log_a: np.ndarray,
    transition: np.ndarray,
    r: np.ndarray,
    R: float,
    upsilon: float,
    gamma: float,
) -> np.ndarray:
    """``log kappa_n`` where ``kappa_n = nu^{-1}(g_n(theta_n; a))``, computed as a power mean."""
    y = log_a[None, :] + _log_gross(theta, r, R, upsilon)
    mean = np.sum(transition * y, axis=1)
    if gamma == 1.0:
        return mean
    centered = np.where(transition > 0.0, (1.0 - gamma) * (y - mean[:, None]), 0.0)
    return mean + logsumexp(centered, b=transition, axis=1) / (1.0 - gamma)


def bellman_step(
    log_a_next: np.ndarray,
    r_next: np.ndarray,
    R_next: float,
    params: ModelParams,
    transition: np.ndarray,
    theta_tol: float = THETA_TOL,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    One application of the Bellman map in log space.

    Args:
        log_a_next: Next-period log value coefficients
        r_next: Next-period post-tax capital returns by state
        R_next: Gross bond rate paid next period
        params: Model parameters for this period's choice
        transition: State transition matrix

    Returns:
        Tuple of (log_a, theta, log_kappa) for the current period.
    """
    theta = optimal_thetas(
        log_a_next, transition, r_next, R_next, params.upsilon, params.gamma, theta_tol
    )
    log_kappa = log_certainty_equivalents(
        theta, log_a_next, transition, r_next, R_next, params.upsilon, params.gamma
    )
    beta = params.beta
    constant = (1.0 - beta) * math.log((1.0 - beta) / (1.0 + params.tau_C)) + beta * math.log(beta)
    return constant + beta * log_kappa, theta, log_kappa


def _bellman_jacobian(
    log_a: np.ndarray,
    theta: np.ndarray,
    log_kappa: np.ndarray,
    transition: np.ndarray,
    r: np.ndarray,
    params: ModelParams,
    R: float,
) -> np.ndarray:
    """Row-stochastic derivative of ``log kappa`` with respect to ``log a`` (envelope theorem)."""
    if params.gamma == 1.0:
        return transition.copy()
    y = log_a[None, :] + _log_gross(theta, r, R, params.upsilon) - log_kappa[:, None]
    exponent = np.where(transition > 0.0, (1.0 - params.gamma) * y, -np.inf)
    return transition * np.exp(exponent)


def portfolio_objective(n: int, theta: float, a: np.ndarray, context: HouseholdContext) -> float:
    """``g_n(theta; a)``."""
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0.0):
        raise ModelDomainError("Value coefficients must be positive")
    gross = gross_return_matrix(
        np.array([theta]), context.returns.r, context.prices.R, context.params.upsilon
    )[0]
    values = box_cox(a * gross, context.params.gamma)
    return float(context.process.transition[n] @ values)


def portfolio_objective_derivative(
    n: int, theta: float, a: np.ndarray, context: HouseholdContext
) -> float:
    """Analytic ``d g_n / d theta``."""
    a = np.asarray(a, dtype=float)
    upsilon = context.params.upsilon
    r = context.returns.r
    gross = gross_return_matrix(np.array([theta]), r, context.prices.R, upsilon)[0]
    marginal = (a * gross) ** (-context.params.gamma) * a * (1.0 + r - context.prices.R) / upsilon
    return float(context.process.transition[n] @ marginal)


def optimal_theta(n: int, a: np.ndarray, context: HouseholdContext) -> float:
    """Maximizer of ``g_n(.; a)`` on [0, 1]."""
    theta = optimal_thetas(
        np.log(np.asarray(a, dtype=float)),
        context.process.transition,
        context.returns.r,
        context.prices.R,
        context.params.upsilon,
        context.params.gamma,
    )
    return float(theta[n])


def solve_value_coefficients(
    context: HouseholdContext,
    x0: np.ndarray | float | None = None,
    *,
    tol: float = VALUE_TOL,
    max_iter: int = VALUE_MAX_ITER,
    acceleration: bool = True,
    regime_tol: float = REGIME_TOL,
) -> PolicySolution:
    """
    Fixed point of the Bellman map in log value coefficients.

    Plain iteration converges geometrically at rate ``beta``. With
    ``acceleration`` a Newton step ``x - (I - beta*M)^{-1}(x - Tx)`` is
    attempted every iteration and accepted only when it lowers the sup-norm
    residual; otherwise the plain step is taken.

    Raises:
        NonConvergenceError: if ``max_iter`` is exceeded
    """
    params = context.params
    transition = context.process.transition
    r = context.returns.r
    R = context.prices.R
    n = context.process.n_states

    def _step(x: np.ndarray):
        return bellman_step(x, r, R, params, transition)

    x = np.zeros(n) if x0 is None else np.broadcast_to(np.asarray(x0, dtype=float), (n,)).copy()
    tx, theta, log_kappa = _step(x)
    residual = float(np.max(np.abs(tx - x)))
    history = [residual]
    iterations = 0
    while residual >= tol:
        if iterations >= max_iter:
            raise NonConvergenceError(
                f"Value iteration did not converge in {max_iter} iterations",
                residual=residual,
                iterations=iterations,
            )
        iterations += 1
        if acceleration:
            jac = np.eye(n) - params.beta * _bellman_jacobian(
                x, theta, log_kappa, transition, r, params, R
            )
            newton = x - np.linalg.solve(jac, x - tx)
            n_tx, n_theta, n_log_kappa = _step(newton)
            n_residual = float(np.max(np.abs(n_tx - newton)))
            if n_residual < residual:
                x, tx, theta, log_kappa, residual = newton, n_tx, n_theta, n_log_kappa, n_residual
                history.append(residual)
                continue
        x = tx
        tx, theta, log_kappa = _step(x)
        residual = float(np.max(np.abs(tx - x)))
        history.append(residual)

    logger.debug(f"Value coefficients converged in {iterations} iterations (residual {residual:.2e})")

    a_star = np.exp(x)
    growth = params.beta * gross_return_matrix(theta, r, R, params.upsilon)
    partial = PolicySolution(
        a_star=a_star,
        theta_star=theta,
        kappa=np.exp(log_kappa),
        growth=growth,
        returns=context.returns,
        regime=tuple(BorrowingRegime.SLACK for _ in range(n)),
        iterations=ConvergenceReport(
            iterations=iterations,
            residual=residual,
            accelerated=acceleration,
            residual_history=history,
        ),
        params=params,
        prices=context.prices,
    )
    return partial.model_copy(
        update={"regime": classify_regime(partial, context, tol=regime_tol)}
    )


def decision_rules(s: float, n: int, solution: PolicySolution) -> DecisionRule:
    """
    Consumption, capital, labour and bonds of a household with total wealth ``s`` in state ``n``.

    Raises:
        ModelDomainError: if s <= 0
    """
    if not s > 0.0:
        raise ModelDomainError(f"Total wealth must be positive, got s={s!r}")
    params = solution.params
    beta, upsilon = params.beta, params.upsilon
    theta = float(solution.theta_star[n])
    invested = beta / upsilon * s
    return DecisionRule(
        C=(1.0 - beta) * s / (1.0 + params.tau_C),
        K=invested * theta,
        L=invested * theta * float(solution.returns.ell[n]),
        B=-solution.returns.h / solution.prices.R + invested * (1.0 - theta),
    )


def classify_regime(
    solution: PolicySolution, context: HouseholdContext, tol: float = REGIME_TOL
) -> tuple[BorrowingRegime, ...]:
    """
    Borrowing regime of each state.

    A state at the full-leverage corner is strictly binding when the
    normalized one-sided derivative ``g_n'(1)/|g_n(1)|`` exceeds ``tol`` and
    barely binding when it is within ``tol`` of zero; any interior weight is slack.
    """
    flags = []
    for n, theta in enumerate(solution.theta_star):
        if theta < 1.0 - _CORNER_TOL:
            flags.append(BorrowingRegime.SLACK)
            continue
        g1 = portfolio_objective(n, 1.0, solution.a_star, context)
        dg1 = portfolio_objective_derivative(n, 1.0, solution.a_star, context)
        normalized = dg1 / max(abs(g1), np.finfo(float).tiny)
        if normalized > tol:
            flags.append(BorrowingRegime.STRICTLY_BINDING)
        elif abs(normalized) <= tol:
            flags.append(BorrowingRegime.BARELY_BINDING)
        else:
            flags.append(BorrowingRegime.SLACK)
    return tuple(flags)

"""
Model primitives: parameters, the ability process, prices, and the closed-form
per-period objects (profit maximization, borrowing limit, human wealth,
Box-Cox utility, gross returns on total wealth).
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from typing import Any

import numpy as np
from pydantic import Field, ValidationInfo, model_validator

from flat_tax_equilibrium.constants import (
    _UNSET,
    BASELINE_ALPHA,
    BASELINE_BETA,
    BASELINE_DELTA,
    BASELINE_GAMMA,
    BASELINE_TAU_C,
    BASELINE_TAU_K,
    BASELINE_TAU_L,
    BASELINE_UPSILON,
)
from flat_tax_equilibrium.exceptions import (
    IllPosedBorrowingLimitError,
    ModelDomainError,
)
from flat_tax_equilibrium.numerics import golden_section_max, is_irreducible
from flat_tax_equilibrium.type_helpers import ArrayModel, FloatArray, FrozenModel, is_probability_vector

logger = logging.getLogger(__name__)

__all__ = [
    "ModelParams",
    "TaxRates",
    "AbilityProcess",
    "Prices",
    "StateReturns",
    "labor_demand_and_return",
    "numeric_labor_demand",
    "borrowing_limit",
    "human_wealth",
    "state_returns",
    "box_cox",
    "inverse_box_cox",
    "gross_total_return",
    "gross_return_matrix",
    "capital_tax_split",
    "pre_tax_interest",
    "post_tax_wage",
]

_STOCHASTIC_TOL = 1e-12


class TaxRates(FrozenModel):
    """The three flat rates."""

    tau_L: float = Field(default=BASELINE_TAU_L, ge=0.0, lt=1.0)
    tau_K: float = Field(default=BASELINE_TAU_K, ge=0.0, lt=1.0)
    tau_C: float = Field(default=BASELINE_TAU_C, ge=0.0)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.tau_L, self.tau_K, self.tau_C)


class ModelParams(FrozenModel):
    """Preferences, technology, demography and tax rates (annual frequency)."""

    alpha: float = Field(default=BASELINE_ALPHA, gt=0.0, lt=1.0)
    delta: float = Field(default=BASELINE_DELTA, ge=0.0, le=1.0)
    beta: float = Field(default=BASELINE_BETA, gt=0.0, lt=1.0)
    gamma: float = Field(default=BASELINE_GAMMA, gt=0.0)
    upsilon: float = Field(default=BASELINE_UPSILON, gt=0.0, lt=1.0)
    tau_K: float = Field(default=BASELINE_TAU_K, ge=0.0, lt=1.0)
    tau_L: float = Field(default=BASELINE_TAU_L, ge=0.0, lt=1.0)
    tau_C: float = Field(default=BASELINE_TAU_C, ge=0.0)

    @property
    def rates(self) -> TaxRates:
        return TaxRates(tau_L=self.tau_L, tau_K=self.tau_K, tau_C=self.tau_C)

    def with_rates(
        self,
        rates: TaxRates | None = None,
        *,
        tau_L: Any = _UNSET,
        tau_K: Any = _UNSET,
        tau_C: Any = _UNSET,
    ) -> ModelParams:
        """Validated copy with some or all tax rates replaced."""
        update = rates.model_dump() if rates is not None else {}
        for name, value in (("tau_L", tau_L), ("tau_K", tau_K), ("tau_C", tau_C)):
            if value is not _UNSET:
                update[name] = value
        return ModelParams.model_validate({**self.model_dump(), **update})

    def replace(self, **changes: Any) -> ModelParams:
        return ModelParams.model_validate({**self.model_dump(), **changes})


class AbilityProcess(ArrayModel):
    """
    Markov chain over occupation-productivity states.

    State 0 with productivity 0 is the pure-worker state. ``stationary_dist``
    is the cross-sectional distribution of states once deaths and newborns
    drawn from ``newborn_dist`` are accounted for.
    """

    productivities: FloatArray
    transition: FloatArray
    newborn_dist: FloatArray
    stationary_dist: FloatArray

    @property
    def n_states(self) -> int:
        return int(self.productivities.size)

    @property
    def worker_mask(self) -> np.ndarray:
        return self.productivities == 0.0

    @property
    def entrepreneur_mask(self) -> np.ndarray:
        return self.productivities > 0.0

    @model_validator(mode="after")
    def _check_chain(self) -> AbilityProcess:
        n = self.productivities.size
        if self.productivities.ndim != 1 or n == 0:
            raise ValueError("productivities must be a non-empty vector")
        if np.any(self.productivities < 0.0):
            raise ValueError("productivities must be nonnegative")
        if self.transition.shape != (n, n):
            raise ValueError(
                f"transition must be {n}x{n}, got {self.transition.shape}"
            )
        if np.any(self.transition < 0.0):
            raise ValueError("transition has negative entries")
        row_error = np.max(np.abs(self.transition.sum(axis=1) - 1.0))
        if row_error > _STOCHASTIC_TOL:
            raise ValueError(f"transition rows must sum to 1 (error {row_error:.3g})")
        for name in ("newborn_dist", "stationary_dist"):
            vector = getattr(self, name)
            if vector.shape != (n,) or not is_probability_vector(vector, _STOCHASTIC_TOL):
                raise ValueError(f"{name} must be a probability {n}-vector")
        if not is_irreducible(self.transition):
            raise ValueError("transition matrix must be irreducible")
        return self

    def reset_chain(self, upsilon: float) -> np.ndarray:
        """Transition matrix of the state including death and rebirth."""
        n = self.n_states
        return upsilon * self.transition + (1.0 - upsilon) * np.outer(
            np.ones(n), self.newborn_dist
        )

    def check_stationary(self, upsilon: float, tol: float = 1e-10) -> bool:
        p = self.stationary_dist
        return bool(np.max(np.abs(self.reset_chain(upsilon).T @ p - p)) <= tol)


class Prices(FrozenModel):
    """Post-tax gross risk-free rate and pre-tax wage."""

    R: float = Field(gt=0.0)
    omega: float = Field(gt=0.0)

    @model_validator(mode="after")
    def _check_rate(self, info: ValidationInfo) -> Prices:
        upsilon = (info.context or {}).get("upsilon")
        if upsilon is not None and not self.R > upsilon:
            raise ValueError(f"R={self.R} must exceed the survival probability {upsilon}")
        return self

    @classmethod
    def within(cls, params: ModelParams, R: float, omega: float) -> Prices:
        """Prices validated against ``R > upsilon`` for the economy of ``params``."""
        return cls.model_validate({"R": R, "omega": omega}, context={"upsilon": params.upsilon})


class StateReturns(ArrayModel):
    """Per-state capital returns and labour demand at a wage, plus h and b_bar."""

    r: FloatArray
    ell: FloatArray
    h: float
    b_bar: float = Field(le=0.0)


def labor_demand_and_return(
    A_n: float | np.ndarray, params: ModelParams, omega: float
) -> tuple[Any, Any]:
    """
    Labour per unit of capital and post-tax net return of a Cobb-Douglas firm.

    Args:
        A_n: Productivity (scalar or array), nonnegative
        params: Model parameters (alpha, delta, tau_K are used)
        omega: Pre-tax wage

    Returns:
        Tuple of (ell, r) with ell = ((1-alpha)A/omega)^(1/alpha) and
        r = (1-tau_K)(alpha A ell^(1-alpha) - delta).

    Raises:
        ModelDomainError: if omega <= 0 or A_n < 0
    """
    if not omega > 0.0:
        raise ModelDomainError(f"Wage must be positive, got omega={omega!r}")
    A = np.asarray(A_n, dtype=float)
    if np.any(A < 0.0):
        raise ModelDomainError(f"Productivity must be nonnegative, got {A_n!r}")

    alpha = params.alpha
    ell = ((1.0 - alpha) * A / omega) ** (1.0 / alpha)
    profit = alpha * A * ell ** (1.0 - alpha)
    r = (1.0 - params.tau_K) * (profit - params.delta)
    if ell.ndim == 0:
        return float(ell), float(r)
    return ell, r


def numeric_labor_demand(
    production: Callable[[float], float],
    omega: float,
    delta: float,
    tau_K: float,
    ell_max: float = 1e3,
    tol: float = 1e-12,
) -> tuple[float, float]:
    """
    Profit maximization for a generic per-unit-capital technology ``F(1, ell)``.

    Golden-section search of ``F(1, ell) - delta - omega*ell`` over
    ``[0, ell_max]``; valid for any concave technology.

    Returns:
        Tuple of (ell, r) with r the post-tax net return.
    """
    if not omega > 0.0:
        raise ModelDomainError(f"Wage must be positive, got omega={omega!r}")
    ell, value = golden_section_max(
        lambda x: production(x) - delta - omega * x, 0.0, ell_max, tol=tol
    )
    return ell, (1.0 - tau_K) * value


def borrowing_limit(params: ModelParams, prices: Prices) -> float:
    """
    Natural borrowing limit ``-(1-tau_L) omega / (R - upsilon)``.

    Raises:
        IllPosedBorrowingLimitError: if R <= upsilon
    """
    if not prices.R > params.upsilon:
        raise IllPosedBorrowingLimitError(prices.R, params.upsilon)
    return -(1.0 - params.tau_L) * prices.omega / (prices.R - params.upsilon)


def human_wealth(params: ModelParams, prices: Prices) -> float:
    """Present value of post-tax wages discounted at R/upsilon, equal to -R*b_bar."""
    return -prices.R * borrowing_limit(params, prices)


def state_returns(
    process: AbilityProcess, params: ModelParams, prices: Prices
) -> StateReturns:
    ell, r = labor_demand_and_return(process.productivities, params, prices.omega)
    b_bar = borrowing_limit(params, prices)
    return StateReturns(r=r, ell=ell, h=-prices.R * b_bar, b_bar=b_bar)


def box_cox(c: float | np.ndarray, gamma: float) -> Any:
    """
    Box-Cox transform ``(c^(1-gamma) - 1)/(1-gamma)``, ``log c`` at gamma = 1.

    Raises:
        ModelDomainError: if any c <= 0
    """
    c_arr = np.asarray(c, dtype=float)
    if np.any(c_arr <= 0.0):
        raise ModelDomainError(f"Box-Cox argument must be positive, got {c!r}")
    log_c = np.log(c_arr)
    if gamma == 1.0:
        out = log_c
    else:
        out = np.expm1((1.0 - gamma) * log_c) / (1.0 - gamma)
    return float(out) if out.ndim == 0 else out


def inverse_box_cox(u: float | np.ndarray, gamma: float) -> Any:
    """
    Inverse of :func:`box_cox`.

    Raises:
        ModelDomainError: if ``1 + (1-gamma)u <= 0`` (outside the range of the transform)
    """
    u_arr = np.asarray(u, dtype=float)
    if gamma == 1.0:
        out = np.exp(u_arr)
    else:
        base = (1.0 - gamma) * u_arr
        if np.any(base <= -1.0):
            raise ModelDomainError(
                f"{u!r} is outside the range of the Box-Cox transform for gamma={gamma}"
            )
        out = np.exp(np.log1p(base) / (1.0 - gamma))
    return float(out) if out.ndim == 0 else out


def gross_total_return(
    n: int,
    theta: float,
    returns: StateReturns,
    params: ModelParams,
    prices: Prices,
) -> float:
    """Gross return on total wealth when moving into state ``n`` with capital share ``theta``."""
    if not 0.0 <= theta <= 1.0:
        raise ModelDomainError(f"Portfolio weight must lie in [0, 1], got {theta!r}")
    return ((1.0 + returns.r[n]) * theta + prices.R * (1.0 - theta)) / params.upsilon


def gross_return_matrix(
    theta: np.ndarray, r: np.ndarray, R: float, upsilon: float
) -> np.ndarray:
    """
    Matrix of gross total-wealth returns ``R_{n'}(theta_n)``.

    Row ``n`` uses the portfolio weight ``theta[n]`` chosen in state ``n``;
    column ``n'`` uses the return realized in state ``n'``.
    """
    theta = np.asarray(theta, dtype=float)[:, None]
    return ((1.0 + np.asarray(r)[None, :]) * theta + R * (1.0 - theta)) / upsilon


def capital_tax_split(tau_cap: float, tau_corp: float) -> float:
    """Effective flat rate on capital income from a personal and a corporate layer."""
    return 1.0 - (1.0 - tau_cap) * (1.0 - tau_corp)


def pre_tax_interest(R: float, tau_K: float) -> float:
    """Net interest rate before the capital income tax."""
    return (R - 1.0) / (1.0 - tau_K)


def post_tax_wage(omega: float, tau_L: float) -> float:
    return (1.0 - tau_L) * omega

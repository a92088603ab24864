"""
Ability process calibration.

Log entrepreneurial productivity lives on an evenly spaced support of
``n_productivity_states`` points spanning ``±sqrt(10)·sigma``. Probabilities
maximize entropy subject to the first four moments, solved through the convex
dual in the four Lagrange multipliers. The worker state and the entrepreneur
states are then combined into one transition matrix in which productivity is
redrawn every year while a household remains an entrepreneur.
"""

from __future__ import annotations

import logging

import numpy as np
from pydantic import Field, model_validator
from scipy.optimize import minimize

from flat_tax_equilibrium.constants import (
    BASELINE_KURTOSIS,
    BASELINE_PI_EW,
    BASELINE_PI_WE,
    BASELINE_SIGMA,
    BASELINE_SKEWNESS,
    BASELINE_UPSILON,
    N_PRODUCTIVITY_STATES,
    SUPPORT_HALF_WIDTH,
)
from flat_tax_equilibrium.exceptions import InfeasibleMomentsError
from flat_tax_equilibrium.model_core import AbilityProcess
from flat_tax_equilibrium.numerics import stationary_distribution
from flat_tax_equilibrium.type_helpers import ArrayModel, FloatArray, FrozenModel

logger = logging.getLogger(__name__)

__all__ = [
    "CalibrationTargets",
    "CalibrationResult",
    "discretize_productivity",
    "standardized_moments",
    "build_ability_process",
    "mortality_adjusted_stationary",
    "calibrate",
]

_DUAL_GTOL = 1e-10
_MOMENT_TOL = 1e-8


class CalibrationTargets(FrozenModel):
    """Moment targets for log productivity and the occupation switching rates."""

    sigma: float = Field(default=BASELINE_SIGMA, gt=0.0)
    skewness: float = BASELINE_SKEWNESS
    kurtosis: float = BASELINE_KURTOSIS
    pi_ew: float = Field(default=BASELINE_PI_EW, gt=0.0, lt=1.0)
    pi_we: float = Field(default=BASELINE_PI_WE, gt=0.0, lt=1.0)
    n_productivity_states: int = Field(default=N_PRODUCTIVITY_STATES, ge=5)

    @model_validator(mode="after")
    def _check_moments(self) -> CalibrationTargets:
        if self.kurtosis < 1.0 + self.skewness**2:
            raise ValueError(
                f"kurtosis={self.kurtosis} violates kurtosis >= 1 + skewness^2 "
                f"= {1.0 + self.skewness**2}"
            )
        return self

    @classmethod
    def from_entrepreneur_share(
        cls, share: float, pi_ew: float = BASELINE_PI_EW, **kwargs
    ) -> CalibrationTargets:
        """Targets whose worker-to-entrepreneur rate yields ``share`` entrepreneurs."""
        if not 0.0 < share < 1.0:
            raise ValueError(f"entrepreneur share must lie in (0, 1), got {share}")
        return cls(pi_ew=pi_ew, pi_we=share * pi_ew / (1.0 - share), **kwargs)

    @property
    def entrepreneur_share(self) -> float:
        return self.pi_we / (self.pi_we + self.pi_ew)


class CalibrationResult(ArrayModel):
    """Everything the ``calibrate`` command writes for audit."""

    targets: CalibrationTargets
    upsilon: float
    log_A: FloatArray
    p_A: FloatArray
    realized_moments: dict[str, float]
    process: AbilityProcess


def standardized_moments(log_A: np.ndarray, p_A: np.ndarray) -> dict[str, float]:
    """Mean, standard deviation, skewness and kurtosis of a discrete distribution."""
    mean = float(p_A @ log_A)
    centered = log_A - mean
    var = float(p_A @ centered**2)
    sd = np.sqrt(var)
    return {
        "mean": mean,
        "sigma": float(sd),
        "skewness": float(p_A @ centered**3) / sd**3,
        "kurtosis": float(p_A @ centered**4) / var**2,
    }


def discretize_productivity(targets: CalibrationTargets) -> tuple[np.ndarray, np.ndarray]:
    """
    Maximum-entropy distribution of log productivity on the fixed support.

    The dual minimizes the log-partition function
    ``log sum_i exp(lambda · (T(z_i) - T_bar))`` over the multipliers, where
    ``z`` is the support in units of sigma and ``T(z) = (z, z^2, z^3, z^4)``.
    Working in standardized units makes the probabilities independent of sigma.

    Returns:
        Tuple of (log_A, p_A).

    Raises:
        InfeasibleMomentsError: if the dual does not converge (the moments cannot
            be matched by a strictly positive distribution on the support)
    """
    n = targets.n_productivity_states
    z = np.linspace(-SUPPORT_HALF_WIDTH, SUPPORT_HALF_WIDTH, n)
    features = np.vstack([z, z**2, z**3, z**4]).T
    target_moments = np.array([0.0, 1.0, targets.skewness, targets.kurtosis])
    deviations = features - target_moments

    def _probabilities(lam: np.ndarray) -> np.ndarray:
        exponent = deviations @ lam
        weights = np.exp(exponent - exponent.max())
        return weights / weights.sum()

    def _dual(lam: np.ndarray) -> tuple[float, np.ndarray]:
        exponent = deviations @ lam
        shift = exponent.max()
        value = shift + np.log(np.mean(np.exp(exponent - shift)))
        return float(value), _probabilities(lam) @ deviations

    def _dual_hessian(lam: np.ndarray) -> np.ndarray:
        p = _probabilities(lam)
        mean = p @ deviations
        centered = deviations - mean
        return (centered * p[:, None]).T @ centered

    result = minimize(
        _dual,
        x0=np.zeros(4),
        jac=True,
        hess=_dual_hessian,
        method="trust-exact",
        options={"gtol": _DUAL_GTOL, "maxiter": 500},
    )
    p_A = _probabilities(result.x)
    gradient_norm = float(np.max(np.abs(p_A @ deviations)))
    if gradient_norm > _MOMENT_TOL or not np.all(np.isfinite(result.x)):
        raise InfeasibleMomentsError(
            f"Maximum-entropy dual diverged (multipliers {result.x}, "
            f"moment error {gradient_norm:.3g}); targets are infeasible on the support",
            gradient_norm=gradient_norm,
        )

    logger.debug(
        f"discretize_productivity: multipliers={result.x}, moment error={gradient_norm:.2e}"
    )
    return targets.sigma * z, p_A


def mortality_adjusted_stationary(
    process: AbilityProcess, upsilon: float
) -> np.ndarray:
    """Stationary distribution of ``upsilon*Pi + (1-upsilon)*1*varpi^T``."""
    return stationary_distribution(process.reset_chain(upsilon))


def build_ability_process(
    targets: CalibrationTargets,
    log_A: np.ndarray,
    p_A: np.ndarray,
    upsilon: float = BASELINE_UPSILON,
) -> AbilityProcess:
    """
    Combine the worker state and the entrepreneur productivity states.

    State 0 is the worker. A worker becomes an entrepreneur with probability
    ``pi_we`` and draws productivity from ``p_A``; an entrepreneur returns to
    work with probability ``pi_ew`` and otherwise redraws productivity.
    Newborns are drawn from the stationary distribution of this chain.
    """
    p_A = np.asarray(p_A, dtype=float)
    n = p_A.size + 1
    transition = np.empty((n, n))
    transition[0, 0] = 1.0 - targets.pi_we
    transition[0, 1:] = targets.pi_we * p_A
    transition[1:, 0] = targets.pi_ew
    transition[1:, 1:] = (1.0 - targets.pi_ew) * p_A[None, :]

    productivities = np.concatenate([[0.0], np.exp(np.asarray(log_A, dtype=float))])
    newborn = stationary_distribution(transition)
    provisional = AbilityProcess(
        productivities=productivities,
        transition=transition,
        newborn_dist=newborn,
        stationary_dist=newborn,
    )
    return AbilityProcess(
        productivities=productivities,
        transition=transition,
        newborn_dist=newborn,
        stationary_dist=mortality_adjusted_stationary(provisional, upsilon),
    )


def calibrate(
    targets: CalibrationTargets, upsilon: float = BASELINE_UPSILON
) -> CalibrationResult:
    log_A, p_A = discretize_productivity(targets)
    process = build_ability_process(targets, log_A, p_A, upsilon)
    logger.info(
        f"Calibrated {process.n_states}-state ability process "
        f"(entrepreneur share {process.stationary_dist[1:].sum():.4f})"
    )
    return CalibrationResult(
        targets=targets,
        upsilon=upsilon,
        log_A=log_A,
        p_A=p_A,
        realized_moments=standardized_moments(log_A, p_A),
        process=process,
    )

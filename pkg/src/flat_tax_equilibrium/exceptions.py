"""
Exception hierarchy.

Solver failures carry the numbers needed to explain them; ``diagnostics()``
returns a JSON-ready dict that the CLI writes next to the other artifacts.
"""

from __future__ import annotations

from typing import Any

__all__ = [
    "FlatTaxError",
    "ModelDomainError",
    "IllPosedBorrowingLimitError",
    "InfeasibleMomentsError",
    "NonConvergenceError",
    "DivergentMomentError",
    "NoParetoTailError",
    "EquilibriumNonexistenceError",
    "InfeasibleTaxMixError",
    "ConfigError",
]


class FlatTaxError(Exception):
    """Base class for all errors raised by the package."""

    def diagnostics(self) -> dict[str, Any]:
        return {"error": type(self).__name__, "message": str(self)}


class ModelDomainError(FlatTaxError, ValueError):
    """An argument lies outside the domain of a model primitive."""


class IllPosedBorrowingLimitError(ModelDomainError):
    """The natural borrowing limit requires R > upsilon."""

    def __init__(self, R: float, upsilon: float):
        self.R = R
        self.upsilon = upsilon
        super().__init__(
            f"Borrowing limit is ill-posed: R={R!r} must exceed upsilon={upsilon!r}"
        )

    def diagnostics(self) -> dict[str, Any]:
        return {**super().diagnostics(), "R": self.R, "upsilon": self.upsilon}


class InfeasibleMomentsError(FlatTaxError, ValueError):
    """The maximum-entropy dual diverged: the moments cannot be matched on the support."""

    def __init__(self, message: str, gradient_norm: float):
        self.gradient_norm = gradient_norm
        super().__init__(message)

    def diagnostics(self) -> dict[str, Any]:
        return {**super().diagnostics(), "gradient_norm": self.gradient_norm}


class NonConvergenceError(FlatTaxError, RuntimeError):
    """An iterative solver hit its cap before meeting its tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(message)

    def diagnostics(self) -> dict[str, Any]:
        return {
            **super().diagnostics(),
            "residual": self.residual,
            "iterations": self.iterations,
        }


class DivergentMomentError(FlatTaxError, ArithmeticError):
    """A Mellin moment is infinite because the spectral radius is not below one."""

    def __init__(self, z: complex, spectral_radius: float):
        self.z = z
        self.spectral_radius = spectral_radius
        super().__init__(
            f"E(S^z) diverges at z={z!r}: spectral radius of A(Re z) is "
            f"{spectral_radius:.12g} >= 1"
        )

    def diagnostics(self) -> dict[str, Any]:
        return {
            **super().diagnostics(),
            "z_real": float(complex(self.z).real),
            "z_imag": float(complex(self.z).imag),
            "spectral_radius": self.spectral_radius,
        }


class NoParetoTailError(FlatTaxError, ArithmeticError):
    """rho(A(z)) = 1 has no root on the search interval."""

    def __init__(self, z_max: float, radius_at_z_max: float):
        self.z_max = z_max
        self.radius_at_z_max = radius_at_z_max
        super().__init__(
            f"No Pareto tail detected: spectral radius stays below one on [0, {z_max}] "
            f"(rho(A({z_max})) = {radius_at_z_max:.6g})"
        )

    def diagnostics(self) -> dict[str, Any]:
        return {
            **super().diagnostics(),
            "z_max": self.z_max,
            "radius_at_z_max": self.radius_at_z_max,
        }


class EquilibriumNonexistenceError(FlatTaxError, RuntimeError):
    """No prices in the search box clear both markets."""

    def __init__(self, message: str, details: dict[str, Any] | None = None):
        self.details = dict(details or {})
        super().__init__(message)

    def diagnostics(self) -> dict[str, Any]:
        return {**super().diagnostics(), **self.details}


class InfeasibleTaxMixError(FlatTaxError, ValueError):
    """No rate in the legal range preserves the revenue target."""

    def __init__(self, message: str, free_rate: str, target: float):
        self.free_rate = free_rate
        self.target = target
        super().__init__(message)

    def diagnostics(self) -> dict[str, Any]:
        return {
            **super().diagnostics(),
            "free_rate": self.free_rate,
            "target": self.target,
        }


class ConfigError(FlatTaxError, ValueError):
    """Invalid configuration, override key, or missing input artifact."""

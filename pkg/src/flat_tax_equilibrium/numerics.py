"""
Small numerical building blocks shared by the solver modules: golden-section
search, Perron roots of nonnegative matrices, stationary distributions of
Markov chains, and a backtracking Broyden solver.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable

import numpy as np
from scipy.sparse.csgraph import connected_components

from flat_tax_equilibrium.exceptions import FlatTaxError, NonConvergenceError

logger = logging.getLogger(__name__)

__all__ = [
    "golden_section_max",
    "perron_root",
    "is_irreducible",
    "stationary_distribution",
    "finite_difference_jacobian",
    "broyden_solve",
]

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max(
    f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-10
) -> tuple[float, float]:
    """
    Maximize a unimodal function on ``[lo, hi]`` by golden-section search.

    Args:
        f: Objective, assumed unimodal on the interval
        lo: Left end of the bracket
        hi: Right end of the bracket
        tol: Width of the final bracket

    Returns:
        Tuple of (argmax, max) where argmax is the best of the final bracket
        midpoint and the two ends.

    Raises:
        ValueError: if the bracket is empty
    """
    if not hi >= lo:
        raise ValueError(f"Empty golden-section bracket [{lo}, {hi}]")

    a, b = float(lo), float(hi)
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)

    # Boundary maxima are common (the portfolio weight sits at 1 when the limit binds)
    candidates = [(0.5 * (a + b), f(0.5 * (a + b))), (float(lo), f(lo)), (float(hi), f(hi))]
    return max(candidates, key=lambda pair: pair[1])


def perron_root(
    matrix: np.ndarray, tol: float = 1e-12, max_iter: int = 20_000
) -> float:
    """
    Spectral radius of a nonnegative square matrix.

    Power iteration from the positive vector, stopped when the Collatz-Wielandt
    bounds ``min(Ax/x) <= rho <= max(Ax/x)`` are within ``tol`` relative.
    Falls back to a full eigensolve when the iteration does not settle
    (reducible or periodic inputs).
    """
    matrix = np.asarray(matrix, dtype=float)
    x = np.ones(matrix.shape[0])
    for _ in range(max_iter):
        y = matrix @ x
        if np.any(y <= 0.0):
            break
        ratios = y / x
        lower, upper = ratios.min(), ratios.max()
        if upper - lower <= tol * upper:
            return float(0.5 * (lower + upper))
        x = y / y.sum()

    logger.debug("Power iteration did not settle, using full eigensolve")
    return float(np.max(np.abs(np.linalg.eigvals(matrix))))


def is_irreducible(transition: np.ndarray) -> bool:
    """True when the directed graph of positive entries is strongly connected."""
    n_components, _ = connected_components(
        np.asarray(transition) > 0.0, directed=True, connection="strong"
    )
    return n_components == 1


def stationary_distribution(transition: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """
    Stationary distribution ``p = P^T p`` of an irreducible row-stochastic matrix.

    Solves the singular system together with the normalization row in the
    least-squares sense, then checks the residual.

    Raises:
        NonConvergenceError: if the residual exceeds ``tol`` (reducible input)
    """
    transition = np.asarray(transition, dtype=float)
    n = transition.shape[0]
    system = np.vstack([transition.T - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    p, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    p = np.clip(p, 0.0, None)
    p = p / p.sum()
    residual = float(np.max(np.abs(transition.T @ p - p)))
    if residual > tol:
        raise NonConvergenceError(
            f"Stationary distribution residual {residual:.3g} exceeds {tol:g}",
            residual=residual,
            iterations=1,
        )
    return p


def finite_difference_jacobian(
    f: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    fx: np.ndarray,
    step: float = 1e-6,
) -> np.ndarray:
    """Forward-difference Jacobian of ``f`` at ``x`` given ``fx = f(x)``."""
    x = np.asarray(x, dtype=float)
    jac = np.empty((fx.size, x.size))
    for j in range(x.size):
        h = step * max(1.0, abs(x[j]))
        shifted = x.copy()
        shifted[j] += h
        jac[:, j] = (f(shifted) - fx) / h
    return jac


def broyden_solve(
    f: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    jac: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iter: int = 60,
    backtrack_fac: float = 0.5,
    max_backtrack: int = 30,
) -> np.ndarray:
    """
    Solve ``f(x) = 0`` with Broyden's good method.

    Steps that make ``f`` fail (a model-domain error or NaN) or that do not
    reduce the sup-norm residual are halved up to ``max_backtrack`` times.

    Raises:
        NonConvergenceError: on too many backtracks or iterations
    """
    x = np.asarray(x0, dtype=float).ravel().copy()
    y = np.asarray(f(x), dtype=float)
    if jac is None:
        jac = finite_difference_jacobian(f, x, y)

    for it in range(max_iter):
        abs_diff = float(np.max(np.abs(y)))
        logger.debug(f"broyden it={it:3d} max abs residual={abs_diff:8.1e}")
        if abs_diff < tol:
            return x

        dx = np.linalg.solve(jac, -y)
        for _ in range(max_backtrack):
            try:
                ynew = np.asarray(f(x + dx), dtype=float)
                if np.any(~np.isfinite(ynew)):
                    raise FloatingPointError
                if np.max(np.abs(ynew)) >= abs_diff and np.max(np.abs(dx)) > 1e-14:
                    raise FloatingPointError
            except (FlatTaxError, FloatingPointError, ValueError):
                dx *= backtrack_fac
            else:
                dy = ynew - y
                jac = jac + np.outer((dy - jac @ dx) / np.dot(dx, dx), dx)
                y = ynew
                x = x + dx
                break
        else:
            raise NonConvergenceError(
                "Too many backtracks in Broyden solver",
                residual=abs_diff,
                iterations=it,
            )

    raise NonConvergenceError(
        f"No convergence after {max_iter} Broyden iterations",
        residual=float(np.max(np.abs(y))),
        iterations=max_iter,
    )

"""
Side-by-side comparison of two stationary equilibria.

Levels are compared as relative changes ``new / old - 1``; prices that are
rates (interest) and tax rates are compared as differences.
"""

import logging

import pandas as pd

from flat_tax_equilibrium.equilibrium import StationaryEquilibrium, group_aggregates
from flat_tax_equilibrium.type_helpers import ChangeEntry, ChangesDict

logger = logging.getLogger(__name__)

__all__ = ["compare_regimes", "changes_frame"]

_DIFFERENCE_KEYS = ("interest_post_tax", "tau_L", "tau_K", "tau_C")


def _entry(key: str, old: float, new: float) -> ChangeEntry:
    if key in _DIFFERENCE_KEYS:
        return ChangeEntry(old=old, new=new, change=new - old, comment="difference")
    if old == 0.0:
        return ChangeEntry(old=old, new=new, change=float("nan"), comment="old level is zero")
    return ChangeEntry(old=old, new=new, change=new / old - 1.0, comment="relative change")


def _levels(equilibrium: StationaryEquilibrium) -> dict[str, float]:
    groups = group_aggregates(equilibrium)
    rates = equilibrium.params.rates
    return {
        "tau_L": rates.tau_L,
        "tau_K": rates.tau_K,
        "tau_C": rates.tau_C,
        "welfare": equilibrium.welfare,
        "capital": equilibrium.aggregates.capital,
        "consumption": equilibrium.aggregates.consumption,
        "consumption.workers": groups["workers"].consumption,
        "consumption.entrepreneurs": groups["entrepreneurs"].consumption,
        "capital.workers": groups["workers"].capital,
        "capital.entrepreneurs": groups["entrepreneurs"].capital,
        "interest_post_tax": equilibrium.prices.R - 1.0,
        "omega": equilibrium.prices.omega,
        "h": equilibrium.h,
        "revenue": equilibrium.revenue.total,
    }


def compare_regimes(new: StationaryEquilibrium, old: StationaryEquilibrium) -> ChangesDict:
    """
    Changes from ``old`` to ``new`` in welfare, capital, consumption and prices

    Args:
        new: Equilibrium under the reformed tax mix
        old: Reference equilibrium, usually the baseline

    Returns:
        ChangesDict keyed by quantity name
    """
    old_levels = _levels(old)
    new_levels = _levels(new)
    changes = {key: _entry(key, old_levels[key], new_levels[key]) for key in old_levels}
    logger.debug(
        f"Welfare change {changes['welfare']['change']:+.2%}, capital {changes['capital']['change']:+.2%}"
    )
    return changes


def changes_frame(comparisons: dict[str, ChangesDict]) -> pd.DataFrame:
    """One row per (comparison, quantity) for CSV output."""
    rows = [
        {"comparison": label, "quantity": key, **entry}
        for label, changes in comparisons.items()
        for key, entry in changes.items()
    ]
    return pd.DataFrame(rows, columns=["comparison", "quantity", "old", "new", "change", "comment"])

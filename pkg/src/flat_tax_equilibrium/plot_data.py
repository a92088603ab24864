"""
Figure tables built from command artifacts.

Each builder reads the artifacts of an earlier command from the output
directory and returns a DataFrame with the columns a plotting tool needs:

    fig2a   financial-wealth exceedance curve           (equilibrium)
    fig2b   top wealth shares against top fraction      (equilibrium)
    fig4a-f tau_K frontier without consumption tax      (frontier)
    fig5    optimal rates and prices across gamma, no consumption tax  (sweep)
    fig6    optimal rates and prices across sigma, no consumption tax  (sweep)
    fig7a-f welfare surface over (tau_L, tau_K), tau_C implied         (optimize)
    fig8    baseline and optimal exceedance curves      (optimize)
    fig9    optimal rates and prices across gamma       (sweep)
    fig10   optimal rates and prices across sigma       (sweep)
    fig11a-f transition paths, one row per year 0..T    (transition)
"""

import logging
import re
from typing import Callable, Dict, List

import pandas as pd

from flat_tax_equilibrium.artifacts import ArtifactStore
from flat_tax_equilibrium.registry import FigureRegistry

logger = logging.getLogger(__name__)

__all__ = ["build_figure", "register_default_figures", "BODY_TAIL_SPLIT"]

# Financial wealth separating the body and tail panels of the exceedance comparisons
BODY_TAIL_SPLIT = 10.0

_FRONTIER_COLUMNS: Dict[str, List[str]] = {
    "a": ["tau_L"],
    "b": ["welfare"],
    "c": ["capital"],
    "d": ["consumption_total", "consumption_workers", "consumption_entrepreneurs"],
    "e": ["interest_pre_tax", "interest_post_tax"],
    "f": ["omega", "wage_post_tax"],
}

_GRID_COLUMNS: Dict[str, List[str]] = {
    "a": ["tau_C"],
    "b": ["welfare"],
    "c": ["capital"],
    "d": ["consumption_total"],
    "e": ["interest_post_tax"],
    "f": ["omega"],
}

_TRANSITION_COLUMNS: Dict[str, List[str]] = {
    "a": ["R", "interest_post_tax"],
    "b": ["omega"],
    "c": ["capital", "capital_workers", "capital_entrepreneurs"],
    "d": ["consumption_total", "consumption_workers", "consumption_entrepreneurs"],
    "e": ["bonds_workers", "bonds_entrepreneurs"],
    "f": ["revenue_total", "revenue_labor", "revenue_consumption", "revenue_capital"],
}

_SWEEP_FIGURES = {
    "fig5": ("no_consumption_tax", "gamma"),
    "fig6": ("no_consumption_tax", "sigma"),
    "fig9": ("full", "gamma"),
    "fig10": ("full", "sigma"),
}

_SWEEP_COLUMNS = [
    "tau_L",
    "tau_K",
    "tau_C",
    "interest_pre_tax",
    "interest_post_tax",
    "omega",
    "wage_post_tax",
    "regime",
]


def _panel(figure_id: str) -> str:
    return figure_id[-1]


def _with_post_tax_interest(frame: pd.DataFrame) -> pd.DataFrame:
    if "interest_post_tax" not in frame.columns and "R" in frame.columns:
        frame = frame.assign(interest_post_tax=frame["R"] - 1.0)
    return frame


def wealth_exceedance(store: ArtifactStore, figure_id: str) -> pd.DataFrame:
    """Exceedance of positive financial wealth; inversion body then Pareto tail."""
    frame = store.read_csv("wealth_distribution.csv")
    frame = frame[frame["wealth"] > 0.0]
    return frame[["wealth", "exceedance_prob", "source"]].reset_index(drop=True)


def top_share_curve(store: ArtifactStore, figure_id: str) -> pd.DataFrame:
    frame = store.read_csv("top_shares.csv")
    return frame[["fraction", "share"]].sort_values("fraction", ascending=False).reset_index(drop=True)


def frontier_panel(store: ArtifactStore, figure_id: str) -> pd.DataFrame:
    """One fig4 panel against tau_K, with the regime, kink and optimum markers."""
    frame = _with_post_tax_interest(store.read_csv("frontier.csv"))
    optimum = store.read_json("frontier.json")["optimum"]
    columns = ["tau_K", *_FRONTIER_COLUMNS[_panel(figure_id)], "regime", "kink"]
    panel = frame[columns].copy()
    panel["optimum"] = (panel["tau_K"] - optimum["tau_K"]).abs() < 1e-12
    return panel


def sweep_panel(store: ArtifactStore, figure_id: str) -> pd.DataFrame:
    mode, parameter = _SWEEP_FIGURES[figure_id]
    frame = _with_post_tax_interest(store.read_csv(f"sweep_{mode}_{parameter}.csv"))
    columns = [parameter, *[column for column in _SWEEP_COLUMNS if column in frame.columns]]
    return frame[columns].sort_values(parameter).reset_index(drop=True)


def grid_panel(store: ArtifactStore, figure_id: str) -> pd.DataFrame:
    """
    One fig7 panel over the (tau_L, tau_K) grid

    Marker rows for the global optimum, the optimum without consumption tax
    and the baseline are appended with their ``marker`` label.
    """
    frame = _with_post_tax_interest(store.read_csv("full_grid.csv"))
    columns = ["tau_L", "tau_K", *_GRID_COLUMNS[_panel(figure_id)]]
    panel = frame[columns].assign(marker="")

    summary = store.read_json("optimize.json")
    markers = []
    for label in ("global_optimum", "no_consumption_tax_optimum", "baseline"):
        point = summary["points"].get(label)
        if point is None:
            continue
        point = dict(point)
        point.setdefault("interest_post_tax", point["R"] - 1.0)
        markers.append({**{column: point.get(column) for column in columns}, "marker": label})
    return pd.concat([panel, pd.DataFrame(markers, columns=[*columns, "marker"])], ignore_index=True)


def exceedance_comparison(store: ArtifactStore, figure_id: str) -> pd.DataFrame:
    """Baseline against optimal regimes, split into body and tail panels."""
    frame = store.read_csv("exceedance_comparison.csv")
    frame = frame.assign(panel=["body" if w < BODY_TAIL_SPLIT else "tail" for w in frame["wealth"]])
    return frame


def transition_panel(store: ArtifactStore, figure_id: str) -> pd.DataFrame:
    frame = _with_post_tax_interest(store.read_csv("transition.csv"))
    return frame[["t", *_TRANSITION_COLUMNS[_panel(figure_id)]]].reset_index(drop=True)


def _family(pattern: str) -> Callable[[str], bool]:
    compiled = re.compile(pattern)
    return lambda figure_id: compiled.fullmatch(figure_id) is not None


def register_default_figures() -> None:
    """Register the builders of every figure table."""
    FigureRegistry.register_figure("fig2a", wealth_exceedance)
    FigureRegistry.register_figure("fig2b", top_share_curve)
    FigureRegistry.register_figure_with_predicate(
        _family(r"fig4[a-f]"), frontier_panel, [f"fig4{panel}" for panel in "abcdef"]
    )
    for figure_id in ("fig5", "fig6"):
        FigureRegistry.register_figure(figure_id, sweep_panel)
    FigureRegistry.register_figure_with_predicate(
        _family(r"fig7[a-f]"), grid_panel, [f"fig7{panel}" for panel in "abcdef"]
    )
    FigureRegistry.register_figure("fig8", exceedance_comparison)
    for figure_id in ("fig9", "fig10"):
        FigureRegistry.register_figure(figure_id, sweep_panel)
    FigureRegistry.register_figure_with_predicate(
        _family(r"fig11[a-f]"), transition_panel, [f"fig11{panel}" for panel in "abcdef"]
    )


def build_figure(store: ArtifactStore, figure_id: str) -> pd.DataFrame:
    """
    Table for one figure

    Raises:
        ConfigError: for an unknown figure or a missing artifact
    """
    builder = FigureRegistry.get_builder(figure_id)
    frame = builder(store, figure_id)
    logger.debug(f"Built {figure_id}: {len(frame)} rows, columns {list(frame.columns)}")
    return frame

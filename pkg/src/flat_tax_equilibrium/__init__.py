__version__ = "0.1.0"

from flat_tax_equilibrium.calibration import (  # noqa: E402
    CalibrationResult,
    CalibrationTargets,
    calibrate,
)
from flat_tax_equilibrium.comparison import changes_frame, compare_regimes  # noqa: E402
from flat_tax_equilibrium.config import RunConfig, SolverSettings, load_config  # noqa: E402
from flat_tax_equilibrium.equilibrium import (  # noqa: E402
    StationaryEquilibrium,
    group_aggregates,
    solve_equilibrium,
    tax_revenue,
    welfare_gain,
)
from flat_tax_equilibrium.exceptions import FlatTaxError  # noqa: E402
from flat_tax_equilibrium.household import PolicySolution, solve_value_coefficients  # noqa: E402
from flat_tax_equilibrium.model_core import (  # noqa: E402
    AbilityProcess,
    ModelParams,
    Prices,
    TaxRates,
)
from flat_tax_equilibrium.registry import CommandRegistry, FigureRegistry  # noqa: E402
from flat_tax_equilibrium.tax_optimizer import (  # noqa: E402
    optimize_consumption_only,
    optimize_full,
    optimize_no_consumption_tax,
    revenue_preserving_rate,
    sweep,
)
from flat_tax_equilibrium.transition import (  # noqa: E402
    TransitionPath,
    solve_transition,
    vote_analysis,
)
from flat_tax_equilibrium.wealth_law import (  # noqa: E402
    MellinEvaluator,
    WealthDistribution,
    invert_distribution,
    wealth_shares,
)


def register_defaults() -> None:
    """Register the built-in CLI commands and figure builders"""
    from flat_tax_equilibrium.cli import register_default_commands
    from flat_tax_equilibrium.plot_data import register_default_figures

    register_default_commands()
    register_default_figures()


register_defaults()


__all__ = [
    "__version__",
    "AbilityProcess",
    "CalibrationResult",
    "CalibrationTargets",
    "CommandRegistry",
    "FigureRegistry",
    "FlatTaxError",
    "MellinEvaluator",
    "ModelParams",
    "PolicySolution",
    "Prices",
    "RunConfig",
    "SolverSettings",
    "StationaryEquilibrium",
    "TaxRates",
    "TransitionPath",
    "WealthDistribution",
    "calibrate",
    "changes_frame",
    "compare_regimes",
    "group_aggregates",
    "invert_distribution",
    "load_config",
    "optimize_consumption_only",
    "optimize_full",
    "optimize_no_consumption_tax",
    "revenue_preserving_rate",
    "solve_equilibrium",
    "solve_transition",
    "solve_value_coefficients",
    "sweep",
    "tax_revenue",
    "vote_analysis",
    "wealth_shares",
    "welfare_gain",
]

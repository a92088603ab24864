import sys
from pathlib import Path

# Insert the src directory from the current project
_project_root = Path(__file__).parent.parent
sys.path.insert(0, str(_project_root / "src"))

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from flat_tax_equilibrium.artifacts import ArtifactStore, RunManifest  # noqa: E402
from flat_tax_equilibrium.calibration import CalibrationTargets, calibrate  # noqa: E402
from flat_tax_equilibrium.household import (  # noqa: E402
    HouseholdContext,
    solve_value_coefficients,
)
from flat_tax_equilibrium.model_core import ModelParams, Prices  # noqa: E402
from flat_tax_equilibrium.wealth_law import MellinEvaluator  # noqa: E402

# Prices close to the baseline equilibrium; used where clearing is not needed
BASELINE_PRICES = Prices(R=1.017, omega=1.27)

# Two-state wealth process with a Pareto tail between 1 and 3
TOY_GROWTH = np.array([[1.06, 0.95], [1.02, 0.97]])
TOY_TRANSITION = np.array([[0.9, 0.1], [0.3, 0.7]])
TOY_UPSILON = 0.95
TOY_NEWBORN = np.array([0.4, 0.6])
TOY_RESET = 2.0

# Single-state process: zeta = -log(upsilon)/log(g), E(S^z) = (1-upsilon)h^z/(1-upsilon g^z)
SINGLE_GROWTH = 1.05
SINGLE_UPSILON = 0.9
SINGLE_RESET = 1.5


@pytest.fixture(scope="session")
def baseline_params():
    return ModelParams()


@pytest.fixture(scope="session")
def calibration_result():
    """Baseline calibration of the six-state ability process."""
    return calibrate(CalibrationTargets())


@pytest.fixture(scope="session")
def ability_process(calibration_result):
    return calibration_result.process


@pytest.fixture(scope="session")
def household_context(baseline_params, ability_process):
    return HouseholdContext.build(baseline_params, ability_process, BASELINE_PRICES)


@pytest.fixture(scope="session")
def policy_solution(household_context):
    return solve_value_coefficients(household_context)


@pytest.fixture
def toy_evaluator():
    return MellinEvaluator(
        growth=TOY_GROWTH,
        transition=TOY_TRANSITION,
        upsilon=TOY_UPSILON,
        newborn_dist=TOY_NEWBORN,
        reset_level=TOY_RESET,
    )


@pytest.fixture
def single_state_evaluator():
    return MellinEvaluator(
        growth=np.array([[SINGLE_GROWTH]]),
        transition=np.array([[1.0]]),
        upsilon=SINGLE_UPSILON,
        newborn_dist=np.array([1.0]),
        reset_level=SINGLE_RESET,
    )


@pytest.fixture
def artifact_store(tmp_path):
    """Writable artifact store in a temporary output directory."""
    manifest = RunManifest(command="test", output_dir=str(tmp_path))
    return ArtifactStore(tmp_path, manifest)


# --- Slow fixtures: full baseline solve and inversion ---
@pytest.fixture(scope="session")
def baseline_equilibrium(baseline_params, ability_process):
    from flat_tax_equilibrium.equilibrium import solve_equilibrium

    return solve_equilibrium(baseline_params, ability_process)


@pytest.fixture(scope="session")
def baseline_distribution(baseline_equilibrium):
    from flat_tax_equilibrium.wealth_law import invert_distribution

    return invert_distribution(baseline_equilibrium.mellin)


@pytest.fixture(scope="session")
def priced_equilibrium(baseline_params, ability_process):
    """Baseline economy assembled at fixed prices, without market clearing."""
    from flat_tax_equilibrium.equilibrium import equilibrium_at_prices

    return equilibrium_at_prices(baseline_params, ability_process, BASELINE_PRICES)

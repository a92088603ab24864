import math

import pytest

from flat_tax_equilibrium.comparison import changes_frame, compare_regimes
from flat_tax_equilibrium.equilibrium import equilibrium_at_prices
from flat_tax_equilibrium.model_core import ModelParams
from tests.conftest import BASELINE_PRICES


@pytest.fixture(scope="module")
def consumption_taxed(ability_process):
    return equilibrium_at_prices(ModelParams(tau_C=0.1), ability_process, BASELINE_PRICES)


@pytest.mark.unit
class TestCompareRegimes:
    def test_identical_regimes(self, priced_equilibrium):
        changes = compare_regimes(priced_equilibrium, priced_equilibrium)

        for key, entry in changes.items():
            if entry["comment"] != "old level is zero":
                assert entry["change"] == pytest.approx(0.0, abs=1e-14), key

    def test_consumption_tax_at_fixed_prices(self, priced_equilibrium, consumption_taxed):
        # Same prices: portfolios and wealth are unchanged, consumption and value scale by 1/(1+tau_C)
        changes = compare_regimes(consumption_taxed, priced_equilibrium)

        assert changes["tau_C"]["change"] == pytest.approx(0.1)
        assert changes["tau_C"]["comment"] == "difference"
        assert changes["consumption"]["change"] == pytest.approx(1.0 / 1.1 - 1.0, rel=1e-7)
        assert changes["welfare"]["change"] == pytest.approx(1.0 / 1.1 - 1.0, rel=1e-7)
        assert changes["capital"]["change"] == pytest.approx(0.0, abs=1e-7)
        assert changes["interest_post_tax"]["change"] == 0.0

    def test_zero_old_level(self, priced_equilibrium, consumption_taxed):
        changes = compare_regimes(consumption_taxed, priced_equilibrium)

        # Workers hold no private capital in either regime
        assert changes["capital.workers"]["old"] == 0.0
        assert math.isnan(changes["capital.workers"]["change"])
        assert changes["capital.workers"]["comment"] == "old level is zero"


@pytest.mark.unit
def test_changes_frame_layout():
    comparisons = {
        "optimum_vs_baseline": {
            "welfare": {"old": 1.0, "new": 1.066, "change": 0.066, "comment": "relative change"},
            "tau_K": {"old": 0.25, "new": 0.0, "change": -0.25, "comment": "difference"},
        },
        "income_only_vs_baseline": {
            "welfare": {"old": 1.0, "new": 1.004, "change": 0.004, "comment": "relative change"},
        },
    }

    frame = changes_frame(comparisons)

    assert list(frame.columns) == ["comparison", "quantity", "old", "new", "change", "comment"]
    assert len(frame) == 3
    assert frame.loc[1, "quantity"] == "tau_K"
    assert frame.loc[2, "comparison"] == "income_only_vs_baseline"

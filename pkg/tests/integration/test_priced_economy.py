import numpy as np
import pytest

from flat_tax_equilibrium.artifacts import canonical_json
from flat_tax_equilibrium.equilibrium import (
    equilibrium_at_prices,
    goods_market,
    group_aggregates,
    market_gap_value,
    resource_residual,
    tax_revenue,
)
from flat_tax_equilibrium.model_core import ModelParams, Prices
from tests.conftest import BASELINE_PRICES


@pytest.mark.integration
class TestEconomyAtFixedPrices:
    """Accounting identities hold at any prices, cleared or not."""

    @pytest.mark.parametrize("field", ["consumption", "capital", "bonds", "labor", "total_wealth"])
    def test_groups_add_up(self, priced_equilibrium, field):
        groups = group_aggregates(priced_equilibrium)
        total = getattr(groups["workers"], field) + getattr(groups["entrepreneurs"], field)

        assert total == pytest.approx(getattr(priced_equilibrium.aggregates, field), rel=1e-12, abs=1e-12)

    def test_group_taxes_add_up_to_revenue(self, ability_process):
        equilibrium = equilibrium_at_prices(ModelParams(tau_C=0.05), ability_process, BASELINE_PRICES)
        groups = group_aggregates(equilibrium)

        assert groups["workers"].mass + groups["entrepreneurs"].mass == pytest.approx(1.0, abs=1e-14)
        assert groups["workers"].tax_paid + groups["entrepreneurs"].tax_paid == pytest.approx(
            equilibrium.revenue.total, rel=1e-12
        )
        assert tax_revenue(equilibrium) == equilibrium.revenue

    @pytest.mark.parametrize("tau_C", [0.0, 0.3])
    def test_goods_market_matches_market_gaps(self, ability_process, tau_C):
        equilibrium = equilibrium_at_prices(ModelParams(tau_C=tau_C), ability_process, BASELINE_PRICES)

        assert resource_residual(equilibrium) == pytest.approx(market_gap_value(equilibrium), rel=1e-9, abs=1e-11)

    @pytest.mark.parametrize("prices", [BASELINE_PRICES, Prices(R=1.001, omega=3.0)])
    def test_goods_market_detects_uncleared_prices(self, ability_process, prices):
        equilibrium = equilibrium_at_prices(ModelParams(), ability_process, prices)
        bonds, labor = equilibrium.excess_demands()

        assert abs(bonds) > 1e-3 or abs(labor) > 1e-3
        assert abs(resource_residual(equilibrium)) > 1e-4

    def test_goods_market_flows(self, priced_equilibrium):
        flows = goods_market(priced_equilibrium)
        params = priced_equilibrium.params

        # Survivors hold upsilon times the per-capita capital choice
        assert flows.installed_capital == pytest.approx(params.upsilon * priced_equilibrium.aggregates.capital, rel=1e-12)
        assert flows.depreciation == pytest.approx(params.delta * flows.installed_capital)
        assert flows.output > flows.depreciation > 0.0
        assert flows.government == pytest.approx(
            priced_equilibrium.revenue.total - priced_equilibrium.revenue.consumption, rel=1e-12
        )

    def test_consumption_tax_revenue(self, ability_process):
        params = ModelParams(tau_C=0.2)
        equilibrium = equilibrium_at_prices(params, ability_process, BASELINE_PRICES)
        expected = 0.2 / 1.2 * (1.0 - params.beta) * equilibrium.aggregates.total_wealth

        assert equilibrium.revenue.consumption == pytest.approx(expected, rel=1e-12)

    def test_mean_wealth_exceeds_human_wealth_floor(self, priced_equilibrium):
        # Every household holds S > 0, and newborns start at S = h
        assert priced_equilibrium.aggregates.total_wealth > 0.0
        assert np.all(priced_equilibrium.state_moments > 0.0)

    def test_summary_is_serializable(self, priced_equilibrium):
        summary = priced_equilibrium.summary()
        text = canonical_json(summary)

        assert '"resource_residual"' in text
        assert summary["prices"]["interest_post_tax"] == pytest.approx(BASELINE_PRICES.R - 1.0)
        assert len(summary["regime"]) == priced_equilibrium.process.n_states

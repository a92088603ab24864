import numpy as np
import pytest

from flat_tax_equilibrium.transition import (
    TransitionPath,
    backward_value_path,
    excess_demand_path,
    forward_moments,
    vote_analysis,
)
from flat_tax_equilibrium.wealth_law import WealthDistribution

HORIZON = 8


def _flat_prices(equilibrium, horizon=HORIZON):
    return (
        np.full(horizon + 1, equilibrium.prices.R),
        np.full(horizon + 1, equilibrium.prices.omega),
    )


def _rows(vector, horizon=HORIZON):
    return np.tile(vector, (horizon + 1, 1))


def _announcement(equilibrium, a_scale=1.0, h_scale=1.0):
    """A one-year path whose year-1 value coefficients and human wealth are rescaled."""
    a_old = equilibrium.policy.a_star
    theta = equilibrium.policy.theta_star
    m = equilibrium.state_moments
    return TransitionPath(
        horizon=1,
        knots=(1,),
        R_path=[equilibrium.prices.R] * 2,
        omega_path=[equilibrium.prices.omega] * 2,
        h_path=[equilibrium.h, h_scale * equilibrium.h],
        a_path=np.vstack([a_old, a_scale * a_old]),
        theta_path=np.vstack([theta, theta]),
        moments=np.vstack([m, m]),
        excess_bond=np.zeros(2),
        excess_labor=np.zeros(2),
        aggregates=[],
    )


@pytest.fixture
def wealth_law(mocker):
    distribution = mocker.Mock(spec=WealthDistribution)
    distribution.financial_exceedance.return_value = 0.6
    return distribution


@pytest.mark.unit
class TestBackwardValuePath:
    def test_flat_prices_stay_stationary(self, priced_equilibrium):
        a, theta, h = backward_value_path(*_flat_prices(priced_equilibrium), priced_equilibrium, priced_equilibrium)

        np.testing.assert_allclose(a, _rows(priced_equilibrium.policy.a_star), rtol=1e-9)
        np.testing.assert_allclose(theta, _rows(priced_equilibrium.policy.theta_star), atol=1e-6)
        np.testing.assert_allclose(h, priced_equilibrium.h, rtol=1e-12)

    def test_wage_deviation_reaches_only_earlier_years(self, priced_equilibrium):
        R, omega = _flat_prices(priced_equilibrium)
        bumped = omega.copy()
        bumped[4] *= 1.05

        a, _, h = backward_value_path(R, omega, priced_equilibrium, priced_equilibrium)
        a_dev, _, h_dev = backward_value_path(R, bumped, priced_equilibrium, priced_equilibrium)

        np.testing.assert_array_equal(h_dev[5:], h[5:])
        assert np.all(h_dev[1:5] > h[1:5])
        assert h_dev[0] == h[0]
        np.testing.assert_array_equal(a_dev[4:], a[4:])
        # Year 3 sees the year-4 capital returns
        assert not np.allclose(a_dev[3], a[3], rtol=1e-12, atol=0.0)


@pytest.mark.unit
class TestForwardMoments:
    def _moments(self, equilibrium, h_path):
        R, _ = _flat_prices(equilibrium)
        return forward_moments(
            equilibrium,
            _rows(equilibrium.policy.theta_star),
            R,
            _rows(equilibrium.policy.returns.r),
            h_path,
            equilibrium.params,
        )

    def test_flat_prices_keep_moments_stationary(self, priced_equilibrium):
        m = self._moments(priced_equilibrium, np.full(HORIZON + 1, priced_equilibrium.h))

        np.testing.assert_allclose(m, _rows(priced_equilibrium.state_moments), rtol=1e-10)

    def test_announcement_revalues_human_wealth(self, priced_equilibrium):
        h_path = np.full(HORIZON + 1, 1.1 * priced_equilibrium.h)
        h_path[0] = priced_equilibrium.h

        m = self._moments(priced_equilibrium, h_path)

        expected = priced_equilibrium.process.stationary_dist * 0.1 * priced_equilibrium.h
        np.testing.assert_allclose(m[1] - m[0], expected, rtol=1e-9, atol=1e-14)

    def test_flat_prices_reproduce_excess_demands(self, priced_equilibrium):
        R, _ = _flat_prices(priced_equilibrium)
        h_path = np.full(HORIZON + 1, priced_equilibrium.h)
        theta = _rows(priced_equilibrium.policy.theta_star)
        m = self._moments(priced_equilibrium, h_path)

        bond, labor = excess_demand_path(
            m, theta, R, h_path, _rows(priced_equilibrium.policy.returns.ell), priced_equilibrium.params, priced_equilibrium
        )

        expected_bond, expected_labor = priced_equilibrium.excess_demands()
        np.testing.assert_allclose(bond, expected_bond, rtol=1e-9)
        np.testing.assert_allclose(labor, expected_labor, rtol=1e-9)


@pytest.mark.unit
class TestVoteAnalysis:
    def test_unchanged_values_are_ties(self, priced_equilibrium, wealth_law):
        vote = vote_analysis(_announcement(priced_equilibrium), priced_equilibrium, wealth_law)

        assert vote.share_all == 0.0
        assert vote.share_workers == 0.0
        assert vote.share_entrepreneurs == 0.0
        assert vote.share_indifferent == pytest.approx(1.0, abs=1e-12)
        assert vote.thresholds == [None] * priced_equilibrium.process.n_states
        wealth_law.financial_exceedance.assert_not_called()

    def test_higher_human_wealth_wins_everyone(self, priced_equilibrium, wealth_law):
        path = _announcement(priced_equilibrium, h_scale=1.1)

        vote = vote_analysis(path, priced_equilibrium, wealth_law)
        frozen = vote_analysis(path, priced_equilibrium, wealth_law, revalue_human_wealth=False)

        assert vote.share_all == pytest.approx(1.0, abs=1e-12)
        assert vote.share_indifferent == 0.0
        assert frozen.share_all == 0.0
        assert frozen.share_indifferent == pytest.approx(1.0, abs=1e-12)

    def test_threshold_in_financial_wealth(self, priced_equilibrium, wealth_law):
        h = priced_equilibrium.h

        gain = vote_analysis(_announcement(priced_equilibrium, a_scale=1.1), priced_equilibrium, wealth_law)
        loss = vote_analysis(_announcement(priced_equilibrium, a_scale=0.9), priced_equilibrium, wealth_law)

        # a1 (W + h) > a0 (W + h) holds for every W above -h when a1 > a0
        assert gain.thresholds == pytest.approx([-h] * priced_equilibrium.process.n_states)
        assert all(gain.in_favor_above)
        assert gain.share_all == pytest.approx(0.6)
        assert loss.in_favor_above == [False] * priced_equilibrium.process.n_states
        assert loss.share_all == pytest.approx(0.0, abs=1e-12)

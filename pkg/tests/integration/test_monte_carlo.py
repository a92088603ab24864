import numpy as np
import pytest

from flat_tax_equilibrium.wealth_law import WealthDistribution, empirical_checks, simulate_panel
from tests.conftest import TOY_GROWTH, TOY_NEWBORN, TOY_RESET, TOY_TRANSITION, TOY_UPSILON

N_AGENTS = 200_000
# Survival to 400 years is 0.95**400 ~ 1e-9, so the panel is stationary
N_PERIODS = 400


@pytest.fixture(scope="module")
def toy_panel():
    return simulate_panel(TOY_GROWTH, TOY_TRANSITION, TOY_NEWBORN, TOY_UPSILON, TOY_RESET, N_AGENTS, N_PERIODS, seed=5, n_streams=4)


@pytest.mark.integration
class TestSimulatedPanel:
    """Monte Carlo cross-sections agree with the Mellin transform."""

    def test_fractional_moment(self, toy_evaluator, toy_panel):
        S, _ = toy_panel
        sample = np.sqrt(S)
        standard_error = sample.std(ddof=1) / np.sqrt(sample.size)

        assert abs(sample.mean() - toy_evaluator.mellin(0.5)) < 4.0 * standard_error

    def test_state_frequencies(self, toy_evaluator, toy_panel):
        _, J = toy_panel
        frequencies = np.bincount(J, minlength=2) / J.size
        p = toy_evaluator.stationary_dist

        np.testing.assert_array_less(np.abs(frequencies - p), 4.0 * np.sqrt(p * (1.0 - p) / J.size))

    def test_reset_atom(self, toy_panel):
        S, _ = toy_panel
        # Households that died last year sit exactly at the reset level
        assert np.mean(S == TOY_RESET) >= 1.0 - TOY_UPSILON - 4.0 * np.sqrt(0.05 * 0.95 / S.size)

    def test_seeded_panels_are_reproducible(self):
        first = simulate_panel(TOY_GROWTH, TOY_TRANSITION, TOY_NEWBORN, TOY_UPSILON, TOY_RESET, 1_000, 20, seed=9, n_streams=3)
        second = simulate_panel(TOY_GROWTH, TOY_TRANSITION, TOY_NEWBORN, TOY_UPSILON, TOY_RESET, 1_000, 20, seed=9, n_streams=3)
        other = simulate_panel(TOY_GROWTH, TOY_TRANSITION, TOY_NEWBORN, TOY_UPSILON, TOY_RESET, 1_000, 20, seed=10, n_streams=3)

        np.testing.assert_array_equal(first[0], second[0])
        np.testing.assert_array_equal(first[1], second[1])
        assert not np.array_equal(first[0], other[0])
        assert first[0].size == 1_000

    def test_checks_use_fractional_moment(self, toy_evaluator, toy_panel, mocker):
        S, J = toy_panel
        dist = mocker.Mock(spec=WealthDistribution)
        dist.zeta = 1.5
        dist.extrapolation_threshold = -np.inf

        checks = empirical_checks(toy_evaluator, dist, S, J, n_sigma=4.0)

        moment = checks[0]
        assert moment["name"] == "mellin_0.5"
        assert moment["empirical"] == pytest.approx(np.sqrt(S).mean())
        assert moment["analytic"] == pytest.approx(float(np.real(toy_evaluator.mellin(0.5))))
        assert np.isfinite(moment["standard_error"])
        assert moment["passed"]
        dist.cdf_at.assert_not_called()

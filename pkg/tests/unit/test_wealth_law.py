import math

import numpy as np
import pytest

from flat_tax_equilibrium.exceptions import DivergentMomentError, ModelDomainError, NoParetoTailError
from flat_tax_equilibrium.wealth_law import (
    GridSpec,
    MellinEvaluator,
    hill_estimator,
    invert_distribution,
)
from tests.conftest import (
    SINGLE_GROWTH,
    SINGLE_RESET,
    SINGLE_UPSILON,
    TOY_GROWTH,
    TOY_NEWBORN,
    TOY_RESET,
    TOY_TRANSITION,
    TOY_UPSILON,
)


@pytest.mark.unit
class TestMellinEvaluator:
    """Mellin transforms of a two-state process with reset."""

    def test_spectral_radius_at_zero_is_survival(self, toy_evaluator):
        assert toy_evaluator.spectral_radius(0.0) == pytest.approx(TOY_UPSILON, rel=1e-12)

    def test_normalization(self, toy_evaluator):
        assert toy_evaluator.mellin(0.0) == pytest.approx(1.0, abs=1e-13)

    def test_state_probabilities_solve_reset_chain(self, toy_evaluator):
        p = toy_evaluator.stationary_dist
        expected = TOY_UPSILON * p @ TOY_TRANSITION + (1.0 - TOY_UPSILON) * TOY_NEWBORN

        np.testing.assert_allclose(p, expected, atol=1e-14)

    def test_conditional_moments_aggregate(self, toy_evaluator):
        p = toy_evaluator.stationary_dist
        aggregated = sum(p[n] * toy_evaluator.mellin(1.0, state=n) for n in range(2))

        assert aggregated == pytest.approx(toy_evaluator.mellin(1.0), rel=1e-12)

    def test_first_moment_recursion(self, toy_evaluator):
        m = toy_evaluator.joint_mellin(1.0)
        recursion = m @ toy_evaluator.build_A(1.0) + (1.0 - TOY_UPSILON) * TOY_RESET * TOY_NEWBORN

        np.testing.assert_allclose(m, recursion, rtol=1e-12)

    def test_complex_argument_matches_elementwise_power(self, toy_evaluator):
        expected = TOY_UPSILON * TOY_TRANSITION * np.exp(1j * np.log(TOY_GROWTH))

        np.testing.assert_allclose(toy_evaluator.build_A(1j), expected, atol=1e-14)

    def test_characteristic_batch_at_zero(self, toy_evaluator):
        values = toy_evaluator.characteristic_batch(np.array([0.0]))

        np.testing.assert_allclose(values[0].real, toy_evaluator.stationary_dist, atol=1e-14)

    def test_divergent_moment(self, toy_evaluator):
        with pytest.raises(DivergentMomentError, match="diverges") as info:
            toy_evaluator.mellin(5.0)

        assert info.value.diagnostics()["spectral_radius"] >= 1.0

    def test_pareto_exponent_is_root(self, toy_evaluator):
        zeta = toy_evaluator.pareto_exponent()

        assert 1.0 < zeta < 3.0
        assert toy_evaluator.spectral_radius(zeta) == pytest.approx(1.0, abs=1e-9)
        assert toy_evaluator.sufficient_tail_condition()
        assert "I-" in toy_evaluator.domain_description()

    def test_atom_masses_sum_of_series(self, toy_evaluator):
        _, masses, states = toy_evaluator.diagonal_atoms(mass_floor=1e-20)
        totals = np.bincount(states, weights=masses, minlength=2)

        np.testing.assert_allclose(totals, toy_evaluator.atom_masses(), rtol=1e-12)

    def test_invalid_inputs(self):
        with pytest.raises(ModelDomainError, match="strictly positive"):
            MellinEvaluator(np.zeros((1, 1)), np.eye(1), 0.9, np.ones(1), 1.0)
        with pytest.raises(ModelDomainError, match="upsilon"):
            MellinEvaluator(np.ones((1, 1)), np.eye(1), 1.0, np.ones(1), 1.0)
        with pytest.raises(ModelDomainError, match="Reset level"):
            MellinEvaluator(np.ones((1, 1)), np.eye(1), 0.9, np.ones(1), 0.0)


@pytest.mark.unit
class TestSingleStateClosedForms:
    """With one state the law is geometric: h g^k with mass (1-upsilon) upsilon^k."""

    def test_pareto_exponent(self, single_state_evaluator):
        expected = -math.log(SINGLE_UPSILON) / math.log(SINGLE_GROWTH)

        assert single_state_evaluator.pareto_exponent() == pytest.approx(expected, rel=1e-9)

    @pytest.mark.parametrize("z", [0.5, 1.0, 1.5, -0.7])
    def test_mellin_transform(self, single_state_evaluator, z):
        expected = (1.0 - SINGLE_UPSILON) * SINGLE_RESET**z / (1.0 - SINGLE_UPSILON * SINGLE_GROWTH**z)

        assert single_state_evaluator.mellin(z) == pytest.approx(expected, rel=1e-12)

    def test_no_tail_when_wealth_never_grows(self):
        evaluator = MellinEvaluator(np.array([[0.98]]), np.eye(1), 0.9, np.ones(1), 1.0)

        assert not evaluator.sufficient_tail_condition()
        with pytest.raises(NoParetoTailError, match="No Pareto tail"):
            evaluator.pareto_exponent(z_max=10.0)

    def test_inversion_of_pure_atoms(self, single_state_evaluator):
        dist = invert_distribution(single_state_evaluator, GridSpec(n_points=512))

        assert dist.zeta == pytest.approx(single_state_evaluator.pareto_exponent())
        assert dist.atom_mass.sum() == pytest.approx(1.0, abs=1e-12)
        summary = dist.summary()
        assert summary["mass_zero_financial_wealth"] == pytest.approx(1.0 - SINGLE_UPSILON, rel=1e-12)
        assert summary["mass_negative_financial_wealth"] == pytest.approx(0.0, abs=1e-10)
        assert np.all(np.diff(dist.cdf) >= 0.0)


@pytest.mark.unit
class TestHillEstimator:
    def test_recovers_pareto_exponent(self):
        rng = np.random.default_rng(11)
        sample = rng.pareto(2.0, size=200_000) + 1.0

        assert hill_estimator(sample, 2_000) == pytest.approx(2.0, rel=0.1)

    @pytest.mark.parametrize("k", [0, 10])
    def test_k_out_of_range(self, k):
        with pytest.raises(ValueError, match="k must lie"):
            hill_estimator(np.arange(1.0, 11.0), k)

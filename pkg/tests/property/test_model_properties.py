import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from flat_tax_equilibrium.equilibrium import welfare_gain
from flat_tax_equilibrium.household import (
    bellman_step,
    decision_rules,
    optimal_theta,
    portfolio_objective,
)
from flat_tax_equilibrium.numerics import golden_section_max
from flat_tax_equilibrium.wealth_law import MellinEvaluator
from tests.conftest import BASELINE_PRICES, TOY_GROWTH, TOY_NEWBORN, TOY_RESET, TOY_TRANSITION, TOY_UPSILON

_TOY = MellinEvaluator(TOY_GROWTH, TOY_TRANSITION, TOY_UPSILON, TOY_NEWBORN, TOY_RESET)

_offsets = arrays(np.float64, 6, elements=st.floats(min_value=-2.0, max_value=2.0))


@pytest.mark.property
class TestNumericsProperties:
    @given(st.floats(min_value=0.0, max_value=1.0), st.floats(min_value=0.1, max_value=10.0))
    def test_golden_section_finds_vertex(self, vertex, curvature):
        x, _ = golden_section_max(lambda t: -curvature * (t - vertex) ** 2, 0.0, 1.0, tol=1e-10)

        assert x == pytest.approx(vertex, abs=1e-5)

    @given(st.floats(min_value=-3.0, max_value=3.0), st.floats(min_value=-3.0, max_value=3.0))
    def test_spectral_radius_is_convex(self, z1, z2):
        midpoint = _TOY.spectral_radius(0.5 * (z1 + z2))

        assert midpoint <= 0.5 * (_TOY.spectral_radius(z1) + _TOY.spectral_radius(z2)) + 1e-12

    @given(st.floats(min_value=0.01, max_value=100.0), st.floats(min_value=0.01, max_value=100.0))
    def test_welfare_gain_sign(self, new, old):
        gain = welfare_gain(new, old)

        if new >= old:
            assert gain >= 0.0
        if new <= old:
            assert gain <= 0.0
        assert gain > -1.0


@pytest.mark.property
class TestHouseholdProperties:
    @settings(max_examples=30, deadline=None)
    @given(_offsets, _offsets)
    def test_bellman_map_is_a_contraction(self, household_context, policy_solution, dx, dy):
        log_a = np.log(policy_solution.a_star)
        args = (
            household_context.returns.r,
            household_context.prices.R,
            household_context.params,
            household_context.process.transition,
        )
        tx, _, _ = bellman_step(log_a + dx, *args)
        ty, _, _ = bellman_step(log_a + dy, *args)

        beta = household_context.params.beta
        assert np.max(np.abs(tx - ty)) <= beta * np.max(np.abs(dx - dy)) + 1e-9

    @settings(max_examples=30, deadline=None)
    @given(_offsets)
    def test_optimal_theta_beats_grid(self, household_context, policy_solution, offset):
        a = policy_solution.a_star * np.exp(offset)
        for n in range(household_context.process.n_states):
            best = portfolio_objective(n, optimal_theta(n, a, household_context), a, household_context)
            for candidate in np.linspace(0.0, 1.0, 11):
                assert best >= portfolio_objective(n, float(candidate), a, household_context) - 1e-10

    @settings(deadline=None)
    @given(st.floats(min_value=1e-6, max_value=1e6), st.integers(min_value=0, max_value=5))
    def test_budget_identity(self, policy_solution, s, n):
        params = policy_solution.params
        rule = decision_rules(s, n, policy_solution)
        spent = (1.0 + params.tau_C) * rule.C + params.upsilon * (
            rule.K + rule.B + policy_solution.returns.h / BASELINE_PRICES.R
        )

        assert spent == pytest.approx(s, rel=1e-10, abs=1e-10)

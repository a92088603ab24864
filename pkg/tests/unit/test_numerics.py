import numpy as np
import pytest

from flat_tax_equilibrium.exceptions import NonConvergenceError
from flat_tax_equilibrium.numerics import (
    broyden_solve,
    finite_difference_jacobian,
    golden_section_max,
    is_irreducible,
    perron_root,
    stationary_distribution,
)


@pytest.mark.unit
class TestGoldenSection:
    def test_interior_maximum(self):
        x, value = golden_section_max(lambda x: -((x - 0.3) ** 2) + 1.0, 0.0, 1.0, tol=1e-12)

        assert x == pytest.approx(0.3, abs=1e-6)
        assert value == pytest.approx(1.0, abs=1e-12)

    def test_boundary_maximum_is_returned_exactly(self):
        x, _ = golden_section_max(lambda x: x, 0.0, 1.0)

        assert x == 1.0

    def test_degenerate_bracket(self):
        assert golden_section_max(lambda x: x, 0.5, 0.5) == (0.5, 0.5)

    def test_empty_bracket_raises(self):
        with pytest.raises(ValueError, match="Empty golden-section bracket"):
            golden_section_max(lambda x: x, 1.0, 0.0)


@pytest.mark.unit
class TestPerronRoot:
    def test_matches_eigensolve(self):
        rng = np.random.default_rng(3)
        matrix = rng.random((6, 6))

        assert perron_root(matrix) == pytest.approx(np.max(np.abs(np.linalg.eigvals(matrix))), rel=1e-10)

    def test_stochastic_matrix_has_unit_root(self):
        matrix = np.array([[0.9, 0.1], [0.3, 0.7]])

        assert perron_root(0.95 * matrix) == pytest.approx(0.95, rel=1e-12)

    def test_periodic_matrix_falls_back_to_eigensolve(self):
        matrix = np.array([[0.0, 2.0], [0.5, 0.0]])

        assert perron_root(matrix) == pytest.approx(1.0, rel=1e-12)


@pytest.mark.unit
class TestMarkovChains:
    @pytest.mark.parametrize(
        "transition, expected",
        [
            (np.array([[0.5, 0.5], [0.5, 0.5]]), True),
            (np.array([[0.0, 1.0], [1.0, 0.0]]), True),
            (np.array([[1.0, 0.0], [0.0, 1.0]]), False),
            (np.array([[1.0, 0.0], [0.2, 0.8]]), False),
        ],
    )
    def test_is_irreducible(self, transition, expected):
        assert is_irreducible(transition) == expected

    def test_two_state_stationary_distribution(self):
        a, b = 0.02, 0.15
        transition = np.array([[1.0 - a, a], [b, 1.0 - b]])

        np.testing.assert_allclose(stationary_distribution(transition), [b / (a + b), a / (a + b)], atol=1e-14)

    def test_stationary_distribution_is_fixed_point(self):
        rng = np.random.default_rng(7)
        transition = rng.random((5, 5))
        transition /= transition.sum(axis=1, keepdims=True)
        p = stationary_distribution(transition)

        np.testing.assert_allclose(transition.T @ p, p, atol=1e-12)
        assert p.sum() == pytest.approx(1.0, abs=1e-14)


@pytest.mark.unit
class TestBroyden:
    def test_linear_system(self):
        def f(x):
            return np.array([x[0] + x[1] - 3.0, x[0] - x[1] - 1.0])

        np.testing.assert_allclose(broyden_solve(f, np.zeros(2), tol=1e-12), [2.0, 1.0], atol=1e-10)

    def test_nonlinear_scalar(self):
        root = broyden_solve(lambda x: x**2 - 2.0, np.array([1.0]), tol=1e-12)

        assert root[0] == pytest.approx(np.sqrt(2.0), abs=1e-10)

    def test_no_root_raises(self):
        with pytest.raises(NonConvergenceError) as info:
            broyden_solve(lambda x: x**2 + 1.0, np.array([1.0]))

        assert info.value.diagnostics()["residual"] >= 1.0

    def test_finite_difference_jacobian_of_linear_map(self):
        matrix = np.array([[2.0, -1.0], [0.5, 3.0]])
        x = np.array([0.3, -0.7])

        jac = finite_difference_jacobian(lambda v: matrix @ v, x, matrix @ x)
        np.testing.assert_allclose(jac, matrix, atol=1e-8)

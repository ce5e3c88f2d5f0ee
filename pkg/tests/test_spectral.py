import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elastica_feedback.spectral import (
    build_grid,
    cumulative_integral,
    integrate,
    interpolate,
    interpolation_matrix,
)


@pytest.fixture(scope="module", params=[5, 9, 17, 33, 65, 129])
def grid(request):
    return build_grid(request.param)


def test_nodes_ascending_with_exact_ends(grid):
    n = grid.n_points - 1
    expected = np.sort((1 + np.cos(np.pi * np.arange(n + 1) / n)) / 2)
    assert grid.nodes[0] == 0.0 and grid.nodes[-1] == 1.0
    assert np.all(np.diff(grid.nodes) > 0)
    np.testing.assert_allclose(grid.nodes, expected, atol=1e-15)


def test_derivative_of_constant_and_identity(grid):
    n = grid.n_points - 1
    assert np.abs(grid.d1 @ np.ones(grid.n_points)).max() < 1e-12 * n
    np.testing.assert_allclose(grid.d1 @ grid.nodes, 1.0, atol=1e-10)


def test_second_derivative_is_square_of_first(grid):
    assert np.abs(grid.d2 - grid.d1 @ grid.d1).max() <= 1e-9 * max(1.0, np.abs(grid.d2).max())


def test_weights_nonnegative_and_sum_to_one(grid):
    assert np.all(grid.quad_weights >= 0)
    assert abs(grid.quad_weights.sum() - 1.0) < 1e-12


def test_arrays_are_read_only(grid):
    with pytest.raises(ValueError):
        grid.d1[0, 0] = 1.0


def test_rejects_tiny_grids():
    with pytest.raises(ValueError):
        build_grid(3)
    with pytest.raises(ValueError):
        build_grid(7.5)


def test_five_points_include_midpoint():
    g = build_grid(5)
    assert 0.5 in g.nodes and 0.0 in g.nodes and 1.0 in g.nodes


def test_quadrature_examples():
    g9 = build_grid(9)
    assert abs(integrate(g9, g9.nodes**2) - 1 / 3) < 1e-15
    assert abs(integrate(g9, np.ones(9)) - 1.0) < 1e-15
    assert abs(integrate(g9, g9.nodes) - 0.5) < 1e-15
    g17 = build_grid(17)
    assert abs(integrate(g17, np.exp(g17.nodes)) - (np.e - 1)) < 1e-12


@settings(max_examples=40, deadline=None)
@given(n=st.sampled_from([9, 17, 33, 65]), seed=st.integers(0, 2**31 - 1))
def test_clenshaw_curtis_exact_for_polynomials(n, seed):
    g = build_grid(n)
    rng = np.random.default_rng(seed)
    coeffs = rng.normal(size=n - 1)  # degree n - 2 < N
    values = np.polynomial.polynomial.polyval(g.nodes, coeffs)
    exact = np.sum(coeffs / np.arange(1, n))
    assert abs(integrate(g, values) - exact) < 1e-13 * max(1.0, np.abs(coeffs).sum())


def test_cumulative_integral_examples():
    g = build_grid(17)
    np.testing.assert_allclose(cumulative_integral(g, np.ones(17)), g.nodes, atol=1e-14)
    np.testing.assert_allclose(cumulative_integral(g, 2 * g.nodes), g.nodes**2, atol=1e-12)
    F = cumulative_integral(g, np.cos(np.pi * g.nodes / 2))
    assert abs(F[-1] - 2 / np.pi) < 1e-10
    assert F[0] == 0.0


def test_cumulative_integral_consistent_with_quadrature(grid):
    # both are exact on a cubic for every grid in the fixture
    f = 1 + grid.nodes - 3 * grid.nodes**3
    assert abs(cumulative_integral(grid, f)[-1] - integrate(grid, f)) < 1e-12


def test_interpolation_examples():
    g = build_grid(33)
    v = np.sin(3 * g.nodes)
    for j in (0, 7, 32):
        assert interpolate(g, v, g.nodes[j]) == v[j]
    assert abs(interpolate(g, v, 0.37) - np.sin(1.11)) < 1e-10
    cubic = lambda s: 1 - 2 * s + 0.5 * s**2 + 3 * s**3  # noqa: E731
    g9 = build_grid(9)
    q = np.linspace(0, 1, 37)
    np.testing.assert_allclose(interpolate(g9, cubic(g9.nodes), q), cubic(q), atol=1e-12)


def test_interpolation_rejects_outside_queries():
    g = build_grid(9)
    with pytest.raises(ValueError):
        interpolation_matrix(g, [1.2])
    with pytest.raises(ValueError):
        interpolate(g, np.zeros(9), -0.1)


def test_node_vector_shape_is_checked():
    g = build_grid(9)
    with pytest.raises(ValueError):
        integrate(g, np.ones(8))

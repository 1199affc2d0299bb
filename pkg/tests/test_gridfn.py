import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from diffpost.gridfn import (Grid, GridFn, derivative, l2_distance, primitive, quadrature,
                             read_csv, write_csv)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def grid_values(m):
    return arrays(np.float64, 2**m + 1, elements=finite)


def test_grid_layout():
    g = Grid(4)
    assert g.M == 17
    assert g.x[0] == 0.0 and g.x[-1] == 1.0
    assert np.all(np.diff(g.x) > 0)
    assert g.h * (g.M - 1) == 1.0


def test_grid_rejects_nonpositive_exponent():
    with pytest.raises(ValueError):
        Grid(0)


def test_gridfn_rejects_bad_values():
    g = Grid(3)
    with pytest.raises(ValueError):
        GridFn(g, np.zeros(5))
    with pytest.raises(ValueError):
        GridFn(g, np.full(g.M, np.nan))


def test_quadrature_examples(grid10):
    assert quadrature(grid10.fn(1.0)) == pytest.approx(1.0, abs=1e-15)
    assert quadrature(grid10.fn(lambda x: x)) == pytest.approx(0.5, abs=1e-15)
    assert abs(quadrature(grid10.fn(lambda x: np.cos(np.pi * x)))) < 1e-6


def test_derivative_examples(grid10):
    assert derivative(grid10.fn(3.7)).sup() < 1e-12
    g = Grid(6)
    d = derivative(g.fn(lambda x: x**2))
    # the second-order stencils are exact on quadratics
    assert np.max(np.abs(d.values - 2 * g.x)) < 1e-10
    d = derivative(grid10.fn(lambda x: np.sin(2 * np.pi * x)))
    inner = (grid10.x >= 0.1) & (grid10.x <= 0.9)
    exact = 2 * np.pi * np.cos(2 * np.pi * grid10.x)
    assert np.max(np.abs(d.values - exact)[inner]) < 1e-4


def test_derivative_on_coarsest_grid():
    # m >= 1 guarantees the three points the stencils need
    g = Grid(1)
    assert g.M == 3
    np.testing.assert_allclose(derivative(g.fn(lambda x: 4 * x + 1)).values, 4.0)


def test_l2_distance_examples(grid10):
    f = grid10.fn(lambda x: np.cos(np.pi * x))
    assert l2_distance(f, f) == 0.0
    assert l2_distance(grid10.fn(1.0), grid10.fn(0.0)) == pytest.approx(1.0, abs=1e-14)
    assert l2_distance(f, grid10.fn(0.0)) == pytest.approx(np.sqrt(0.5), abs=1e-5)


def test_l2_distance_interval_checks(grid10):
    f = grid10.fn(1.0)
    for a, b in ((-0.1, 0.5), (0.5, 1.2), (0.6, 0.4)):
        with pytest.raises(ValueError):
            l2_distance(f, f, a, b)
    with pytest.raises(ValueError):
        l2_distance(f, Grid(5).fn(1.0))


def test_l2_distance_off_grid_endpoints(grid10):
    # constant difference over a subinterval with non-grid endpoints
    f = grid10.fn(2.0)
    assert l2_distance(f, grid10.fn(0.0), 0.1, 0.9) == pytest.approx(2 * np.sqrt(0.8), rel=1e-12)


@given(grid_values(5), grid_values(5), finite, finite)
def test_quadrature_linear(a, b, alpha, beta):
    g = Grid(5)
    f, h = GridFn(g, a), GridFn(g, b)
    lhs = quadrature(alpha * f + beta * h)
    rhs = alpha * quadrature(f) + beta * quadrature(h)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-6)


@given(st.integers(1, 5), st.floats(0, 2 * np.pi))
def test_derivative_of_primitive(freq, phase):
    g = Grid(10)
    f = g.fn(lambda x: np.cos(freq * np.pi * x + phase))
    back = derivative(primitive(f))
    assert np.max(np.abs(back.values - f.values)) < 50 * g.h**2 * (freq * np.pi) ** 2


@given(grid_values(4), grid_values(4), grid_values(4))
def test_l2_triangle_inequality(a, b, c):
    g = Grid(4)
    f, h, k = GridFn(g, a), GridFn(g, b), GridFn(g, c)
    assert l2_distance(f, k) <= l2_distance(f, h) + l2_distance(h, k) + 1e-12 * (
        1 + np.abs(a).max() + np.abs(b).max() + np.abs(c).max())


def test_csv_round_trip(tmp_path, grid10):
    f = grid10.fn(lambda x: np.exp(np.sin(7 * x)) / 3)
    write_csv(f, tmp_path / "f.csv")
    text = (tmp_path / "f.csv").read_text().splitlines()
    assert text[0] == "x,value"
    g = read_csv(tmp_path / "f.csv")
    assert g.grid == f.grid
    np.testing.assert_array_equal(g.values, f.values)


def test_interpolation_is_linear_between_nodes():
    g = Grid(3)
    f = g.fn(lambda x: 3 * x - 1)
    x = np.linspace(0, 1, 101)
    np.testing.assert_allclose(f(x), 3 * x - 1, atol=1e-14)

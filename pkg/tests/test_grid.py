import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zvonkinlab.grid import (SpaceTimeField, UniformGrid, cell_slope_bound, gradient, hessian, interpolate,
                             second_difference)


def test_spacing_and_times():
    g = UniformGrid(1, 0.0, 2.0, 8, 3.0, 7)
    assert g.h == pytest.approx(1.0)
    assert g.dt == pytest.approx(0.25)
    assert g.times[-1] == pytest.approx(2.0)
    np.testing.assert_allclose(g.axis(0), np.arange(-3.0, 4.0))
    assert g.points.shape == (7, 1)


@pytest.mark.parametrize("kwargs", [
    dict(t_end=0.0), dict(n_time=0), dict(n_space=1), dict(box_halfwidth=0.0), dict(dim=3),
])
def test_invalid_grids_rejected(kwargs):
    base = dict(dim=1, t_start=0.0, t_end=1.0, n_time=4, box_halfwidth=1.0, n_space=5)
    base.update(kwargs)
    with pytest.raises(ValueError):
        UniformGrid(**base)


def test_interior_mask_keeps_a_fifth_of_the_box():
    g = UniformGrid(2, 0.0, 1.0, 2, 5.0, 11)
    mask = g.interior_mask()
    assert np.all(np.abs(g.points[mask]) <= 4.0 + 1e-12)
    assert not np.any(np.abs(g.points[~mask]).max(axis=-1) <= 4.0)


def test_window_shares_steps():
    g = UniformGrid(1, 0.0, 1.0, 10, 1.0, 5)
    w = g.window(0.3, 0.7)
    assert w.n_time == 4 and w.dt == pytest.approx(g.dt)
    with pytest.raises(ValueError):
        g.window(0.0, 1.5)


def test_time_index_is_left_constant():
    g = UniformGrid(1, 0.0, 1.0, 4, 1.0, 5)
    assert g.time_index(0.0) == 0
    assert g.time_index(0.2499) == 0
    assert g.time_index(0.25) == 1
    assert g.time_index(1.0) == 4


def test_field_rejects_nonfinite_and_bad_shape():
    g = UniformGrid(1, 0.0, 1.0, 2, 1.0, 5)
    with pytest.raises(ValueError):
        SpaceTimeField(g, np.full((3, 5), np.nan))
    with pytest.raises(ValueError):
        SpaceTimeField(g, np.zeros((3, 4)))


def test_interpolation_is_exact_for_linear_functions_2d():
    g = UniformGrid(2, 0.0, 1.0, 1, 2.0, 9)
    f = SpaceTimeField.from_function(g, lambda t, x: 1.0 + 2.0 * x[..., 0] - 3.0 * x[..., 1])
    rng = np.random.default_rng(0)
    x = rng.uniform(-2, 2, size=(100, 2))
    np.testing.assert_allclose(f.evaluate(0.0, x), 1 + 2 * x[:, 0] - 3 * x[:, 1], atol=1e-12)


def test_interpolation_gradient_and_constant_extension():
    g = UniformGrid(1, 0.0, 1.0, 1, 1.0, 11)
    vals = g.axis(0) ** 2
    # h = 0.2: x = 0.1 is the midpoint of the nodes 0 and 0.2
    v, dv = interpolate(g, vals, np.array([[0.1], [5.0]]), with_gradient=True)
    assert v[0] == pytest.approx(0.5 * (0.0 + 0.04))
    assert dv[0, 0] == pytest.approx(0.04 / 0.2)
    assert v[1] == pytest.approx(1.0) and dv[1, 0] == 0.0


def test_interpolation_time_is_piecewise_constant():
    g = UniformGrid(1, 0.0, 1.0, 2, 1.0, 3)
    f = SpaceTimeField.from_function(g, lambda t, x: np.full(x.shape[:-1], t))
    assert f.evaluate(0.49, np.array([[0.0]]))[0] == 0.0
    assert f.evaluate(0.5, np.array([[0.0]]))[0] == 0.5


def test_gradient_and_hessian_of_quadratic():
    g = UniformGrid(2, 0.0, 1.0, 1, 1.0, 21)
    x, y = g.points[..., 0], g.points[..., 1]
    u = x**2 + 3 * x * y
    gr = gradient(u, g)
    inner = (slice(1, -1), slice(1, -1))
    np.testing.assert_allclose(gr[inner][..., 0], (2 * x + 3 * y)[inner], atol=1e-12)
    np.testing.assert_allclose(gr[inner][..., 1], (3 * x)[inner], atol=1e-12)
    H = hessian(u, g)
    inner2 = (slice(2, -2), slice(2, -2))
    np.testing.assert_allclose(H[inner2][..., 0, 0], 2.0, atol=1e-9)
    np.testing.assert_allclose(H[inner2][..., 0, 1], 3.0, atol=1e-9)
    np.testing.assert_allclose(second_difference(u, g, 1)[inner], 0.0, atol=1e-9)


@given(st.lists(st.floats(-5, 5), min_size=5, max_size=40))
def test_cell_slope_bound_dominates_interpolant_gradient(vals):
    vals = np.asarray(vals)
    g = UniformGrid(1, 0.0, 1.0, 1, 1.0, len(vals))
    bound = cell_slope_bound(vals, g)
    # the interpolant's slope on cell i is the edge difference, which touches nodes i and i+1
    slopes = np.abs(np.diff(vals)) / g.h
    assert np.all(slopes <= bound[:-1] + 1e-12) and np.all(slopes <= bound[1:] + 1e-12)


def test_field_arithmetic():
    g = UniformGrid(1, 0.0, 1.0, 2, 1.0, 5)
    a = SpaceTimeField.constant(g, 2.0)
    b = SpaceTimeField.constant(g, 3.0)
    np.testing.assert_allclose((a + b.scaled(2.0)).values, 8.0)
    other = SpaceTimeField.constant(UniformGrid(1, 0.0, 1.0, 2, 2.0, 5), 1.0)
    with pytest.raises(ValueError):
        a + other

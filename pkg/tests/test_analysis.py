import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zvonkinlab.analysis import (MixedNormParams, ball_average, check_exponents, lipschitz_maximal_check,
                                 lp_norm, maximal_function, mixed_norm, mollifier_weights, mollify,
                                 radius_ladder, random_trig_polynomial, sobolev_norm)
from zvonkinlab.grid import SpaceTimeField, UniformGrid

UNIT = UniformGrid(1, 0.0, 1.0, 200, 0.5, 401, center=0.5)


# ---------------------------------------------------------------- exponents


def test_check_exponents_examples():
    assert check_exponents(1, 4, 8, 1)
    assert not check_exponents(3, 6, 4, 1)
    assert check_exponents(3, 6, 4, 2)


@pytest.mark.parametrize("args", [(0, 4, 8, 1), (1, -1, 8, 1), (1, 4, 0, 1), (1, 4, 8, 3)])
def test_check_exponents_rejects_bad_input(args):
    with pytest.raises(ValueError):
        check_exponents(*args)


@pytest.mark.parametrize("p,q", [(1.0, 2.0), (2.0, np.inf)])
def test_mixed_norm_params_range(p, q):
    with pytest.raises(ValueError):
        MixedNormParams(p, q, 0.0, 1.0)
    with pytest.raises(ValueError):
        MixedNormParams(2.0, 2.0, 1.0, 1.0)


# ---------------------------------------------------------------- mixed norm


def test_mixed_norm_zero_and_one():
    params = MixedNormParams(2.0, 2.0, 0.0, 1.0)
    assert mixed_norm(SpaceTimeField.constant(UNIT, 0.0), params) == 0.0
    assert mixed_norm(SpaceTimeField.constant(UNIT, 1.0), params) == pytest.approx(1.0, abs=1e-12)


def test_mixed_norm_of_x_matches_closed_form():
    f = SpaceTimeField.from_function(UNIT, lambda t, x: x[..., 0])
    # trapezoid error for int x^2 on [0,1] is h^2/6
    assert mixed_norm(f, MixedNormParams(2.0, 2.0, 0.0, 1.0)) == pytest.approx(3**-0.5, abs=UNIT.h**2)


def test_mixed_norm_window_and_exponents():
    # f = t on [0,1] x [0,1]: (int_S^T t^q dt)^{1/q}
    f = SpaceTimeField.from_function(UNIT, lambda t, x: np.full(x.shape[:-1], t))
    val = mixed_norm(f, MixedNormParams(3.0, 4.0, 0.5, 1.0))
    assert val == pytest.approx(((1 - 0.5**5) / 5) ** 0.25, rel=1e-4)
    with pytest.raises(ValueError):
        mixed_norm(f, MixedNormParams(3.0, 4.0, 0.5, 2.0))


def test_mixed_norm_of_vector_field_uses_euclidean_magnitude():
    g = UniformGrid(1, 0.0, 1.0, 4, 0.5, 11, center=0.5)
    f = SpaceTimeField.constant(g, [3.0], rank="vector")
    assert mixed_norm(f, MixedNormParams(2.0, 2.0, 0.0, 1.0)) == pytest.approx(3.0)


fields = st.lists(st.floats(-10, 10), min_size=11, max_size=11)


@given(fields, st.floats(-1e3, 1e3).filter(lambda c: c == 0 or abs(c) > 1e-100))
def test_mixed_norm_absolute_homogeneity(vals, c):
    g = UniformGrid(1, 0.0, 1.0, 2, 1.0, 11)
    f = SpaceTimeField(g, np.tile(vals, (3, 1)))
    params = MixedNormParams(3.0, 5.0, 0.0, 1.0)
    base = mixed_norm(f, params)
    assert mixed_norm(f.scaled(c), params) == pytest.approx(abs(c) * base, rel=1e-12, abs=1e-300)


@given(fields, fields, st.floats(1.1, 8.0), st.floats(1.1, 8.0))
def test_mixed_norm_triangle_inequality(a, b, p, q):
    g = UniformGrid(1, 0.0, 1.0, 2, 1.0, 11)
    fa = SpaceTimeField(g, np.tile(a, (3, 1)))
    fb = SpaceTimeField(g, np.tile(b, (3, 1)) * np.array([[1.0], [0.5], [-1.0]]))
    params = MixedNormParams(p, q, 0.0, 1.0)
    lhs = mixed_norm(fa + fb, params)
    rhs = mixed_norm(fa, params) + mixed_norm(fb, params)
    assert lhs <= rhs * (1 + 1e-10) + 1e-300


# ---------------------------------------------------------------- Sobolev norm


def test_sobolev_norm_examples():
    c = 2.5
    g = UniformGrid(1, 0.0, 1.0, 2, 0.5, 201, center=0.5)
    const = SpaceTimeField.constant(g, c)
    assert sobolev_norm(const, 2, 2.0, 0.0) == pytest.approx(c * 1.0 ** 0.5)
    assert sobolev_norm(SpaceTimeField.constant(g, 0.0), 1, 2.0, 0.0) == 0.0
    lin = SpaceTimeField.from_function(g, lambda t, x: x[..., 0])
    assert sobolev_norm(lin, 1, 2.0, 0.0) == pytest.approx(3**-0.5 + 1.0, abs=g.h**2)
    with pytest.raises(ValueError):
        sobolev_norm(lin, 1, 2.0, 5.0)
    with pytest.raises(ValueError):
        sobolev_norm(lin, 3, 2.0, 0.0)


# ---------------------------------------------------------------- mollifier

MOLL_GRID = UniformGrid(1, 0.0, 1.0, 20, 2 * np.pi, 1257)


@pytest.mark.parametrize("n", [1, 2, 5, 20, 50])
def test_kernel_has_unit_mass(n):
    w, _, _ = mollifier_weights(MOLL_GRID, n)
    assert abs(w.sum() - 1.0) <= 1e-12


def test_kernel_radius_below_spacing_rejected():
    with pytest.raises(ValueError):
        mollify(SpaceTimeField.constant(MOLL_GRID, 1.0), 1.0 / (0.5 * MOLL_GRID.h))


def test_mollify_constant_is_identity():
    out = mollify(SpaceTimeField.constant(MOLL_GRID, 3.7), 10)
    np.testing.assert_allclose(out.values, 3.7, rtol=1e-13)


def test_mollified_sine_converges():
    f = SpaceTimeField.from_function(MOLL_GRID, lambda t, x: np.sin(x[..., 0]))
    inner = MOLL_GRID.interior_mask()
    errs = []
    for n in [2, 5, 11, 20, 50]:
        sm = mollify(f, n)
        errs.append(np.max(np.abs(sm.values[:, inner] - f.values[:, inner])))
    assert all(a > b for a, b in zip(errs, errs[1:]))
    assert errs[2] < 0.01  # 1/n < 0.1 from n = 11 on


@given(st.lists(st.floats(-5, 5), min_size=21, max_size=21), st.integers(1, 5))
def test_mollify_preserves_bounds(vals, n):
    g = UniformGrid(1, 0.0, 1.0, 4, 1.0, 21)
    rng = np.random.default_rng(len(vals))
    f = SpaceTimeField(g, np.asarray(vals)[None, :] * rng.uniform(0.5, 1.0, (5, 1)))
    out = mollify(f, n)
    lo, hi = f.values.min(), f.values.max()
    tol = 1e-12 * max(1.0, abs(lo), abs(hi))
    assert out.values.min() >= lo - tol and out.values.max() <= hi + tol


@given(st.floats(-10, 10))
def test_mollify_commutes_with_constants(c):
    g = UniformGrid(1, 0.0, 1.0, 4, 1.0, 21)
    f = SpaceTimeField.from_function(g, lambda t, x: np.cos(3 * x[..., 0]) + t)
    a = mollify(f + SpaceTimeField.constant(g, c), 4).values
    b = mollify(f, 4).values + c
    np.testing.assert_allclose(a, b, atol=1e-12 * (1 + abs(c)))


def test_flat_time_extension_vanishes_past_the_end():
    g = UniformGrid(1, 0.0, 1.0, 10, 1.0, 21)
    f = SpaceTimeField.constant(g, 1.0)
    flat = mollify(f, 2, time_extension="flat")
    assert flat.values[-1].max() < 1.0
    np.testing.assert_allclose(flat.values[0], 1.0)


# ---------------------------------------------------------------- maximal function

MAX_GRID = UniformGrid(1, 0.0, 1.0, 1, 6.0, 601)


def test_radius_ladder():
    r = radius_ladder(MAX_GRID)
    assert r[0] == pytest.approx(MAX_GRID.h)
    np.testing.assert_allclose(r[1:-1] / r[:-2], 1.25)
    assert r[-1] == pytest.approx(2 * MAX_GRID.box_halfwidth)
    assert radius_ladder(UniformGrid(2, 0.0, 1.0, 1, 1.0, 11))[-1] == pytest.approx(2 * np.sqrt(2))


def test_maximal_of_constant_is_constant_in_the_interior():
    m = maximal_function(np.full(MAX_GRID.spatial_shape, 2.0), MAX_GRID)
    # zero extension outside the box lowers averages only near the edges
    np.testing.assert_allclose(m[MAX_GRID.interior_mask(0.5)], 2.0)


def test_maximal_of_indicator():
    x = MAX_GRID.axis(0)
    phi = ((x >= -1) & (x <= 1)).astype(float)
    m = maximal_function(phi, MAX_GRID)
    assert m[np.argmin(np.abs(x))] == pytest.approx(1.0)
    # brute force: the average over [2-r, 2+r] is (r-1)/(2r) on 1 < r <= 3 and 1/r beyond
    dense = np.linspace(1.0, 12.0, 220001)
    avg = np.where(dense <= 3, (dense - 1) / (2 * dense), 1 / dense)
    exact = avg.max()
    assert exact == pytest.approx(1 / 3, abs=1e-12)
    # one ladder step below the optimum radius bounds the discretization gap
    resolution = exact - (3 / 1.25 - 1) / (2 * 3 / 1.25)
    val = m[np.argmin(np.abs(x - 2.0))]
    assert exact - resolution - MAX_GRID.h <= val <= exact + MAX_GRID.h


def test_maximal_dominates_cell_average():
    rng = np.random.default_rng(3)
    phi = np.abs(random_trig_polynomial(MAX_GRID, rng))
    m = maximal_function(phi, MAX_GRID)
    cell = ball_average(phi, MAX_GRID, MAX_GRID.h)
    inner = MAX_GRID.interior_mask()
    assert np.all(m[inner] >= cell[inner] - 1e-12)
    assert np.all(m >= phi)


def test_maximal_l2_bound_on_trig_battery():
    g = UniformGrid(1, 0.0, 1.0, 1, 6.0, 301)
    rng = np.random.default_rng(7)
    for _ in range(10):
        phi = random_trig_polynomial(g, rng)
        ratio = lp_norm(maximal_function(phi, g), g, 2) / lp_norm(phi, g, 2)
        assert ratio <= 5.0


def test_maximal_function_2d_centered_average():
    g = UniformGrid(2, 0.0, 1.0, 1, 3.0, 61)
    phi = (np.linalg.norm(g.points, axis=-1) <= 1.0).astype(float)
    m = maximal_function(phi, g)
    assert m[30, 30] == pytest.approx(1.0)


# ---------------------------------------------------------------- Lipschitz via maximal


def test_lipschitz_check_linear_is_one_half():
    x = MAX_GRID.axis(0)
    assert lipschitz_maximal_check(x, MAX_GRID) == pytest.approx(0.5, abs=1e-12)


def test_lipschitz_check_constant_is_zero():
    assert lipschitz_maximal_check(np.ones(MAX_GRID.spatial_shape), MAX_GRID) == 0.0


def test_lipschitz_check_trig_battery():
    rng = np.random.default_rng(11)
    worst = max(lipschitz_maximal_check(random_trig_polynomial(MAX_GRID, rng), MAX_GRID, 500, seed=i)
                for i in range(20))
    assert worst <= 1.0

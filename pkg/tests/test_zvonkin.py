import numpy as np
import pytest

from zvonkinlab.coefficients import CoefficientSet, regularize_drift
from zvonkinlab.grid import UniformGrid
from zvonkinlab.zvonkin import (GRADIENT_BOUND, MinimumWindowReached, SegmentRefusal, ZvonkinChain,
                                bilipschitz_check, build_segment, forward_map, holder_bounds, inverse_map,
                                partition)

C = 0.3
CONST_GRID = UniformGrid(1, 0.0, 1.0, 40, 20.0, 401)
CONST = CoefficientSet(1, lambda t, x: np.full_like(x, C), 1.0, 1.0, 1.0, tag="const")
SING_GRID = UniformGrid(1, 0.0, 1.0, 200, 4.0, 401)


def singular(beta):
    def b(t, x):
        r = np.abs(x[..., 0])
        with np.errstate(divide="ignore"):
            return (beta * (r <= 1) * r**-0.25)[..., None]
    return regularize_drift(CoefficientSet(1, b, 1.0, 1.0, 1.0, tag=f"sing{beta}"), SING_GRID)


@pytest.fixture(scope="module")
def const_segment():
    return build_segment(CONST, (0.0, 1.0), CONST_GRID)


@pytest.fixture(scope="module")
def singular_chain():
    return partition(singular(0.5), (0.0, 1.0), SING_GRID)


def test_holder_bounds():
    lo, hi = holder_bounds(1, 4.0, 8.0)
    assert lo == 0.0 and hi == pytest.approx(0.5 - 0.125 - 0.125)


def test_zero_drift_gives_identity():
    g = UniformGrid(1, 0.0, 1.0, 10, 5.0, 51)
    chain = partition(CoefficientSet(1, None, 1.0, 1.0, 1.0), (0.0, 1.0), g)
    assert len(chain.segments) == 1
    seg = chain.segments[0]
    assert seg.sup_grad == 0.0
    y = np.linspace(-3, 3, 7)[:, None]
    np.testing.assert_array_equal(forward_map(seg, 0.5, y), y)
    np.testing.assert_array_equal(inverse_map(seg, 0.5, y), y)
    np.testing.assert_allclose(seg.sigma_transformed.values, 1.0)


def test_constant_drift_closed_form(const_segment):
    seg = const_segment
    g = seg.grid
    # the zero boundary leaks in near the box edge; compare on a core region
    mask = np.abs(g.axis(0)) <= 10.0
    exact = C * (1.0 - g.times)[:, None]
    assert np.max(np.abs(seg.u.values[:, mask, 0] - exact)) < 1e-6
    assert seg.sup_grad < 1e-4  # exact value 0, up to boundary leakage at the ROI edge
    y = np.random.default_rng(0).uniform(-10, 10, (200, 1))
    for t in (0.0, 0.25, 0.5):
        x = inverse_map(seg, t, y)
        np.testing.assert_allclose(x, y - C * (1 - t), atol=1e-6)
        assert np.max(np.abs(forward_map(seg, t, x) - y)) <= 1e-10


def test_constant_drift_transformed_sigma_is_shifted_sigma():
    sig = lambda t, x: (1.5 + 0.2 * np.sin(x[..., 0]))[..., None, None]
    coeffs = CoefficientSet(1, lambda t, x: np.full_like(x, C), sig, 1.69, 2.89)
    seg = build_segment(coeffs, (0.0, 1.0), CONST_GRID)
    g = seg.grid
    mask = np.abs(g.axis(0)) <= 10.0
    for k in (0, 20, 39):
        y = g.points[mask]
        expected = sig(0, y - C * (1.0 - g.times[k]))[:, 0, 0]
        np.testing.assert_allclose(seg.sigma_transformed.values[k][mask][:, 0, 0], expected, atol=1e-8)


def test_sigma_singular_values_stay_in_propagated_band(singular_chain):
    for seg in singular_chain.segments:
        lo, hi = seg.sigma_singular_values
        assert 0.5 * 1.0 <= lo <= hi <= 1.5 * 1.0


def test_singular_drift_needs_several_segments(singular_chain):
    assert len(singular_chain.segments) >= 2
    assert all(s.sup_grad <= GRADIENT_BOUND for s in singular_chain.segments)
    refused = build_segment(singular(4.0), (0.0, 1.0), SING_GRID, with_sigma=False)
    assert isinstance(refused, SegmentRefusal) and refused.sup_grad > 0.5


def test_window_shrinkage_is_monotone(singular_chain):
    att = singular_chain.attempts
    for S, T, g, _ in att:
        for S2, T2, g2, _ in att:
            if (S2, T2) != (S, T) and S <= S2 and T2 <= T:
                assert g2 <= g + 1e-12


def test_chain_windows_are_contiguous(singular_chain):
    w = singular_chain.windows
    assert w[0][0] == 0.0 and w[-1][1] == pytest.approx(1.0)
    assert all(a[1] == pytest.approx(b[0]) for a, b in zip(w[:-1], w[1:]))
    ranges = singular_chain.step_ranges()
    assert ranges[0][0] == 0 and ranges[-1][1] == SING_GRID.n_time


def test_stronger_drift_needs_more_segments():
    g = UniformGrid(1, 0.0, 1.0, 64, 6.0, 241)
    base = lambda t, x: 0.15 * np.sin(2 * x)
    small = partition(CoefficientSet(1, base, 1.0, 1.0, 1.0), (0.0, 1.0), g, with_sigma=False)
    big = partition(CoefficientSet(1, lambda t, x: 10 * base(t, x), 1.0, 1.0, 1.0), (0.0, 1.0), g,
                    with_sigma=False)
    assert len(small.segments) == 1
    assert len(big.segments) > len(small.segments)


def test_minimum_window_reached():
    g = UniformGrid(1, 0.0, 1.0, 16, 4.0, 401)
    with pytest.raises(MinimumWindowReached) as info:
        partition(regularize_drift(CoefficientSet(1, lambda t, x: 40 * np.tanh(5 * x), 1.0, 1.0, 1.0), g),
                  (0.0, 1.0), g, with_sigma=False)
    assert info.value.sup_grad > 0.5
    assert info.value.window[1] - info.value.window[0] < 8 * g.dt + 1e-12


def test_phi_is_strictly_increasing(singular_chain):
    for seg in singular_chain.segments:
        g = seg.grid
        x = g.axis(0)[g.interior_mask()][:, None]
        for k in range(0, g.n_time + 1, 10):
            assert np.all(np.diff(seg.forward_at(k, x)[:, 0]) > 0)


def test_roundtrip_random_battery(singular_chain):
    rng = np.random.default_rng(1)
    for seg in singular_chain.segments:
        y = rng.uniform(-3, 3, (500, 1))
        t = seg.window[0] + rng.uniform(0, 1) * (seg.window[1] - seg.window[0])
        assert np.max(np.abs(forward_map(seg, t, inverse_map(seg, t, y)) - y)) <= 1e-9


def test_bilipschitz_sandwich(singular_chain):
    for i, seg in enumerate(singular_chain.segments):
        rep = bilipschitz_check(seg, 1000, seed=i)
        assert rep["violations"] == 0 and rep["gradient_violations"] == 0
        assert 0.5 <= rep["ratio_min"] <= rep["ratio_max"] <= 1.5
        assert rep["grad_phi_max"] <= 1.5 and rep["grad_psi_max"] <= 2.0


def test_two_dimensional_segment_roundtrip():
    g = UniformGrid(2, 0.0, 0.5, 20, 6.0, 61)
    coeffs = CoefficientSet(2, lambda t, x: np.stack([0.3 * np.sin(x[..., 1]), -0.3 * np.cos(x[..., 0])], -1),
                            1.0, 1.0, 1.0)
    chain = partition(coeffs, (0.0, 0.5), g)
    seg = chain.segments[0]
    y = np.random.default_rng(2).uniform(-3, 3, (200, 2))
    x = inverse_map(seg, 0.1, y)
    assert np.max(np.abs(forward_map(seg, 0.1, x) - y)) <= 1e-9
    assert bilipschitz_check(seg)["violations"] == 0


def test_time_outside_window_rejected(const_segment):
    with pytest.raises(ValueError):
        forward_map(const_segment, 1.5, np.zeros((1, 1)))


def test_chain_validation(const_segment):
    g = UniformGrid(1, 0.0, 2.0, 80, 20.0, 401)
    with pytest.raises(ValueError):
        ZvonkinChain(g, (const_segment,))
    with pytest.raises(ValueError):
        ZvonkinChain(CONST_GRID, ())


def test_manifest(singular_chain):
    m = singular_chain.manifest()
    assert m["kind"] == "zvonkin-chain"
    assert len(m["segments"]) == len(singular_chain.segments)
    assert m["gradient_bound"] == 0.5

import numpy as np
import pytest

from zvonkinlab.coefficients import CoefficientSet, EllipticityError, default_cap_scale, regularize_drift
from zvonkinlab.grid import SpaceTimeField, UniformGrid


def singular_drift(beta=0.5):
    def b(t, x):
        r = np.abs(x[..., 0])
        with np.errstate(divide="ignore"):
            return (beta * (r <= 1) * r**-0.25)[..., None]
    return b


def test_scalar_sigma_is_a_multiple_of_identity():
    c = CoefficientSet(2, None, 1.5, 2.25, 2.25)
    s = c.diffusion(0.0, np.zeros((4, 2)))
    np.testing.assert_allclose(s, np.broadcast_to(1.5 * np.eye(2), (4, 2, 2)))
    assert c.zero_drift
    np.testing.assert_allclose(c.drift(0.0, np.ones((3, 2))), 0.0)
    np.testing.assert_allclose(c.diffusion_jacobian(0.0, np.zeros((1, 2))), 0.0)


def test_ellipticity_bounds_checked_at_construction():
    with pytest.raises(EllipticityError):
        CoefficientSet(1, None, lambda t, x: (2 + np.sin(x[..., 0]))[..., None, None], 2.0, 9.0)
    with pytest.raises(ValueError):
        CoefficientSet(1, None, 1.0, 0.0, 1.0)
    lo, hi = CoefficientSet(1, None, lambda t, x: (2 + np.sin(x[..., 0]))[..., None, None],
                            1.0, 9.0).sampled_ellipticity()
    assert 1.0 <= lo <= hi <= 9.0


def test_generator_coefficients_2d():
    sig = np.array([[1.0, 0.5], [0.0, 1.0]])
    c = CoefficientSet(2, lambda t, x: np.stack([x[..., 1], -x[..., 0]], -1), lambda t, x: np.broadcast_to(
        sig, x.shape[:-1] + (2, 2)), 0.5, 2.0)
    a, b = c.generator_coefficients(0.0, np.array([[1.0, 2.0]]))
    np.testing.assert_allclose(a[0], sig @ sig.T)
    np.testing.assert_allclose(b[0], [2.0, -1.0])


def test_diffusion_jacobian_central_difference(smooth_sigma_coeffs):
    x = np.linspace(-3, 3, 13)[:, None]
    jac = smooth_sigma_coeffs.diffusion_jacobian(0.0, x)
    np.testing.assert_allclose(jac[:, 0, 0, 0], np.cos(x[:, 0]), atol=1e-8)


def test_field_valued_coefficients_interpolate():
    g = UniformGrid(1, 0.0, 1.0, 2, 2.0, 41)
    b = SpaceTimeField.from_function(g, lambda t, x: 3.0 * x, "vector")
    c = CoefficientSet(1, b, 1.0, 1.0, 1.0)
    np.testing.assert_allclose(c.drift(0.3, np.array([[0.25]])), [[0.75]])
    np.testing.assert_allclose(c.drift_jacobian_at(0.3, np.array([[0.25]])), [[[3.0]]])


def test_default_cap_scale_ignores_nonfinite():
    s = np.array([[1.0], [np.inf], [3.0], [0.0], [np.nan]])
    assert default_cap_scale(s) == pytest.approx(2.0)
    assert default_cap_scale(np.zeros((3, 1))) == 1.0


def test_cap_bounds_the_drift_and_keeps_small_values():
    g = UniformGrid(1, 0.0, 1.0, 4, 4.0, 401)
    c = CoefficientSet(1, singular_drift(), 1.0, 1.0, 1.0, tag="sing")
    capped = regularize_drift(c, g, "cap", cap_scale=0.5)
    vals = capped.b.values
    assert np.all(np.isfinite(vals))
    assert np.max(np.abs(vals)) <= 0.5 / np.sqrt(g.h) + 1e-12
    x = g.axis(0)
    far = (np.abs(x) > 0.5) & (np.abs(x) <= 1)
    np.testing.assert_allclose(vals[0, far, 0], 0.5 * np.abs(x[far]) ** -0.25)
    assert capped.tag.endswith("cap")


def test_mollified_drift_is_bounded_and_close_away_from_singularity():
    g = UniformGrid(1, 0.0, 1.0, 20, 4.0, 401)
    c = CoefficientSet(1, singular_drift(), 1.0, 1.0, 1.0)
    mol = regularize_drift(c, g)
    x = g.axis(0)
    sel = (np.abs(x) > 0.3) & (np.abs(x) < 0.8)
    np.testing.assert_allclose(mol.b.values[5, sel, 0], 0.5 * np.abs(x[sel]) ** -0.25, rtol=0.02)
    assert np.all(mol.b.values[:, np.abs(x) > 1.1] == 0.0)
    with pytest.raises(ValueError):
        regularize_drift(c, g, "smooth")


def test_regularize_zero_drift_is_identity():
    g = UniformGrid(1, 0.0, 1.0, 4, 4.0, 41)
    c = CoefficientSet(1, None, 1.0, 1.0, 1.0)
    assert regularize_drift(c, g) is c

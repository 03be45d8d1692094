"""Chart geometry against hand-derived values.

Oracles for the Hopf metric ``rho^-2 delta`` come from writing it as the
cylinder ``dt^2 + g_S3`` with ``t = log rho``; the sphere oracles from
``Ric = g / r^2`` in two dimensions.
"""

import math

import numpy as np
import pytest

from dbarflow import geometry as gc
from dbarflow.models import EuclideanModel, HopfSurfaceTarget, RoundSphereModel, ScaledGeometry
from dbarflow.geometry import DegenerateMetricError


@pytest.fixture
def hopf():
    return HopfSurfaceTarget(2.0)


def test_christoffel_hopf_at_unit_point(hopf, e4):
    G = gc.christoffel(hopf, e4[0])
    # conformal factor phi = -log rho^2, dphi = (-2, 0, 0, 0) at e1
    assert G[0, 0, 0] == pytest.approx(-1.0, abs=1e-14)
    assert G[1, 1, 0] == pytest.approx(-1.0, abs=1e-14)
    assert G[0, 1, 1] == pytest.approx(1.0, abs=1e-14)
    assert G[2, 1, 1] == pytest.approx(0.0, abs=1e-14)


def test_fundamental_form_scales_like_rho_minus_two(hopf, e4):
    w = gc.fundamental_form(hopf, 2.0 * e4[0])
    assert w[0, 1] == pytest.approx(0.25, abs=1e-15)
    assert w[1, 0] == pytest.approx(-0.25, abs=1e-15)
    assert w[2, 3] == pytest.approx(0.25, abs=1e-15)
    assert w[0, 2] == 0.0


def test_d_omega_hopf_component(hopf, e4):
    # d(rho^-2) ^ (dy12 + dy34) = -2 dy1 ^ dy3 ^ dy4 at e1
    dw = gc.d_omega(hopf, e4[0])
    assert dw[0, 2, 3] == pytest.approx(-2.0, abs=1e-13)
    assert dw[0, 1, 2] == pytest.approx(0.0, abs=1e-13)
    fd = gc.d_omega(hopf, e4[0], mode="fd")
    np.testing.assert_allclose(fd, dw, atol=1e-8)


def test_d_omega_fully_antisymmetric(hopf):
    p = np.array([0.3, -0.7, 1.1, 0.4])
    dw = gc.d_omega(hopf, p)
    for perm, sign in (((1, 0, 2), -1), ((0, 2, 1), -1), ((2, 1, 0), -1), ((1, 2, 0), 1)):
        np.testing.assert_allclose(np.transpose(dw, perm), sign * dw, atol=1e-13)


def test_hopf_ricci_cylinder(hopf, e4):
    Ric = gc.ricci(hopf, e4[0])
    assert Ric[0, 0] == pytest.approx(0.0, abs=1e-12)
    for k in (1, 2, 3):
        assert Ric[k, k] == pytest.approx(2.0, abs=1e-12)
    # off a unit point the tangential part scales with the metric
    p = 2.0 * e4[0]
    Ric2 = gc.ricci(hopf, p)
    assert Ric2[1, 1] == pytest.approx(0.5, abs=1e-12)
    for q in (e4[0], p, np.array([0.2, -1.3, 0.5, 0.8])):
        scal = np.einsum("ij,ij->", hopf.inverse_metric(q), gc.ricci(hopf, q))
        assert scal == pytest.approx(6.0, abs=1e-11)


@pytest.mark.parametrize("radius", [1.0, 2.5])
def test_sphere_ricci_is_metric_over_r2(radius):
    S = RoundSphereModel(radius)
    pts = np.array([[0.0, 0.0], [0.4, -1.1], [2.0, 0.3]])
    np.testing.assert_allclose(gc.ricci(S, pts), S.metric(pts) / radius ** 2, rtol=1e-12, atol=1e-14)


def test_riemann_symmetries_and_bianchi(hopf):
    p = np.array([0.6, -0.2, 0.9, 1.4])
    R = gc.riemann(hopf, p)
    g = hopf.metric(p)
    low = np.einsum("mi,ijkl->mjkl", g, R)
    np.testing.assert_allclose(low, -np.swapaxes(low, -1, -2), atol=1e-12)
    np.testing.assert_allclose(low, -np.swapaxes(low, 0, 1), atol=1e-12)
    np.testing.assert_allclose(low, np.transpose(low, (2, 3, 0, 1)), atol=1e-12)
    bianchi = R + np.einsum("iklj->ijkl", R) + np.einsum("iljk->ijkl", R)
    np.testing.assert_allclose(bianchi, 0.0, atol=1e-12)


def test_flat_models_have_no_curvature():
    E = EuclideanModel(4)
    p = np.array([1.0, 2.0, -3.0, 0.5])
    assert np.all(gc.riemann(E, p) == 0.0)
    assert np.all(gc.d_omega(E, p) == 0.0)


def _bumpy(p):
    x, y = p[..., 0], p[..., 1]
    psi = 0.4 * np.sin(x) + 0.3 * y * y
    d = np.stack([0.4 * np.cos(x), 0.6 * y], axis=-1)
    dd = np.zeros(p.shape + (2,))
    dd[..., 0, 0] = -0.4 * np.sin(x)
    dd[..., 1, 1] = 0.6
    return psi, d, dd


def test_surfaces_are_balanced():
    geom = ScaledGeometry(EuclideanModel(2), _bumpy)
    pts = np.array([[0.1, 0.2], [1.3, -0.8], [-2.0, 0.5]])
    np.testing.assert_allclose(gc.d_star_omega(geom, pts), 0.0, atol=1e-13)
    for p in pts:
        np.testing.assert_allclose(gc.d_star_omega_divergence(geom, p), 0.0, atol=1e-8)


def test_scaled_metric_jet_matches_fd():
    geom = ScaledGeometry(EuclideanModel(2), _bumpy)
    p = np.array([0.7, -0.4])
    dg, ddg = geom.metric_jet(p)
    np.testing.assert_allclose(dg, gc.fd_jacobian(geom.metric, p), atol=1e-9)
    np.testing.assert_allclose(ddg, gc.fd_jacobian(lambda q: geom.metric_jet(q)[0], p), atol=1e-8)


def test_hopf_codifferential_two_routes(hopf):
    p = np.array([0.5, 1.2, -0.3, 0.8])
    an = gc.d_star_omega(hopf, p)
    assert np.max(np.abs(an)) > 0.1  # the Hopf form is not co-closed
    np.testing.assert_allclose(an, gc.d_star_omega_divergence(hopf, p), atol=1e-7)


def test_fd_jacobian_is_exact_on_cubics():
    def f(p):
        return np.stack([p[..., 0] ** 3 - p[..., 1], p[..., 0] * p[..., 1] ** 2], axis=-1)

    p = np.array([0.8, -1.5])
    exact = np.array([[3 * 0.8 ** 2, -1.0], [1.5 ** 2, 2 * 0.8 * -1.5]])
    np.testing.assert_allclose(gc.fd_jacobian(f, p, step=1e-2, order=4), exact, atol=1e-10)


def test_degenerate_metric_rejected(hopf):
    with pytest.raises(DegenerateMetricError):
        hopf.metric(np.zeros(4))


def test_two_form_norm_equals_dimension(hopf):
    p = np.array([0.4, 0.1, -0.9, 0.3])
    w = hopf.fundamental_form(p)
    assert gc.two_form_inner(w, w, hopf.inverse_metric(p)) == pytest.approx(4.0, rel=1e-13)
    assert math.isclose(np.linalg.det(hopf.complex_structure(p)), 1.0)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dbarflow.discrete import MapField, VariationField, random_variation
from dbarflow.functionals import (
    cartan_check,
    decomposition_check,
    energy,
    energy_densities,
    first_variation_check,
    first_variation_residual,
    jacobi_qform,
    second_variation_qform,
    tension,
    tension_a,
)
from dbarflow.geometry import two_form_inner
from dbarflow.hopf import FrameState, family_map, gram_schmidt
from dbarflow.models import FlatTorusModel, HopfSurfaceTarget, RoundSphereModel
from dbarflow.rng import SplitMix64
from dbarflow.verify import identity_map, make_target, sample_map

TARGETS = ["hopf_surface", "round_sphere", "flat_torus", "euclidean"]

finite = st.floats(-3.0, 3.0, allow_nan=False, allow_infinity=False)


def _frame_from(raw):
    a, b = raw[:4], raw[4:]
    if np.linalg.norm(a) < 0.1 or np.linalg.norm(b - (a @ b) / (a @ a) * a) < 0.1:
        return None
    return gram_schmidt(a, b)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, 8, elements=finite), st.sampled_from([1.5, 2.0, 7.0]))
def test_family_energies_closed_form(raw, alpha):
    fr = _frame_from(raw)
    if fr is None:
        return
    state = FrameState(*fr, alpha)
    f = family_map(state, (16, 16))
    rep = energy(f, method="analytic")
    V = 2 * math.pi * math.log(alpha)
    assert rep.K == pytest.approx(-state.c * V, abs=1e-10 * V)
    assert rep.E_plus == pytest.approx((1 - state.c) * V, abs=1e-10 * V)
    assert rep.E == pytest.approx(V, rel=1e-12)
    assert rep.E_plus_direct == pytest.approx(rep.E_plus, abs=1e-10 * V)


@settings(max_examples=50, deadline=None)
@given(
    arrays(np.float64, (4, 2), elements=finite),
    arrays(np.float64, 4, elements=finite).filter(lambda p: np.linalg.norm(p) > 0.1),
)
def test_pointwise_decomposition_algebra(Tf, y):
    # random linear maps from a flat surface into a Hopf tangent space
    T = HopfSurfaceTarget(2.0)
    ginv = np.eye(2)
    J_M = np.array([[0.0, -1.0], [1.0, 0.0]])
    h = T.metric(y)
    d = energy_densities(Tf, ginv, J_M, h, T.complex_structure(y))
    scale = 1.0 + d["sq"]
    assert abs(d["orth"]) <= 1e-12 * scale
    assert abs(0.25 * d["plus"] - 0.5 * d["sq"] - 0.5 * d["cross"]) <= 1e-12 * scale
    omega_M = J_M.T @ np.eye(2)
    pull = Tf.T @ T.fundamental_form(y) @ Tf
    assert abs(d["cross"] + two_form_inner(omega_M, pull, ginv)) <= 1e-12 * scale
    assert d["plus"] >= -1e-12 * scale and d["minus"] >= -1e-12 * scale


@pytest.mark.parametrize("name", TARGETS)
def test_decomposition_on_sample_maps(name):
    f = sample_map(make_target(name), 24, SplitMix64(11))
    d = decomposition_check(f)
    s = 1.0 + d["sup_plus"] ** 2 + d["sup_minus"] ** 2
    assert d["orthogonality"] / s < 1e-12
    assert d["norm_identity"] / s < 1e-12
    assert d["form_identity"] / s < 1e-12
    assert d["type_plus"] < 1e-13 and d["type_minus"] < 1e-13
    rep = energy(f)
    assert rep.E_plus == pytest.approx(rep.E_plus_direct, abs=1e-10 * (1 + rep.E))
    assert rep.E_minus == pytest.approx(rep.E_minus_direct, abs=1e-10 * (1 + rep.E))


def test_identity_is_exact_critical_point():
    T = FlatTorusModel(((1.0, 0.0), (0.3, 1.2)))
    f = identity_map(T, 16)
    tf = tension(f)
    assert np.max(np.abs(tf.tau_plus)) < 1e-12
    assert energy(f).E_plus == pytest.approx(0.0, abs=1e-12)


def test_holomorphic_family_tension_is_discretization_error():
    e = np.eye(4)
    sups = []
    for n in (32, 64):
        tf = tension(family_map(FrameState(e[0], e[1], 2.0), (n, n)))
        sups.append(tf.norms["tau_plus_sup"])
    assert sups[1] < 1e-2
    assert sups[0] / sups[1] == pytest.approx(4.0, rel=0.05)


def test_correction_field_vanishes_for_kahler_targets():
    f = sample_map(make_target("round_sphere"), 16, SplitMix64(1))
    tf = tension(f)
    # d(omega) of a surface vanishes up to rounding of the cyclic sum
    assert np.max(np.abs(tf.A)) < 1e-13 * np.max(np.abs(tf.tau))
    np.testing.assert_array_equal(tension_a(f, 0.0), tf.tau)


def test_tension_a_interpolates():
    f = sample_map(make_target("hopf_surface"), 16, SplitMix64(2))
    tf = tension(f)
    np.testing.assert_allclose(tension_a(f, 0.5), tf.tau + 0.5 * tf.A, rtol=1e-13, atol=1e-13)
    np.testing.assert_allclose(tension_a(f, 1.0), tf.tau_plus, rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("name", TARGETS)
def test_first_variation_grid_convergence(name):
    T = make_target(name)
    res = []
    for n in (32, 64):
        rng = SplitMix64(3)
        f = sample_map(T, n, rng)
        v = random_variation(f, rng, amplitude=0.3)
        res.append(first_variation_check(f, v, 1e-4))
    assert res[0] / res[1] == pytest.approx(4.0, rel=0.1)


def test_first_variation_zero_field():
    f = sample_map(make_target("hopf_surface"), 16, SplitMix64(4))
    assert first_variation_residual(f, np.zeros(f.values.shape), 1e-3) == 0.0


def test_cartan_rigid_translation_flat_target():
    f = sample_map(make_target("flat_torus"), 32, SplitMix64(5))
    v = np.broadcast_to([0.3, -0.2], f.values.shape)
    assert cartan_check(f, v, 1e-4) < 1e-9


def test_cartan_converges_on_hopf():
    e = np.eye(4)
    out = []
    for n in (32, 64):
        f = family_map(FrameState(e[0], e[2], 2.0), (n, n))
        v = random_variation(f, SplitMix64(0), modes=1, amplitude=0.1)
        out.append(cartan_check(f, v, 1e-4))
    assert out[0] / out[1] == pytest.approx(4.0, rel=0.15)


def _equator(n):
    S = RoundSphereModel(1.0)
    src = FlatTorusModel().as_source()
    th = 2 * np.pi * np.arange(n) / n
    vals = np.broadcast_to(np.stack([np.cos(th), np.sin(th)], -1), (n, n, 2))
    return MapField(vals, src, S)


def test_second_variation_two_routes_on_equator():
    # the equator is harmonic, so the Jacobi form is the second variation
    gaps = []
    for n in (32, 64):
        f = _equator(n)
        v = random_variation(f, SplitMix64(0), amplitude=0.2)
        q1, q2 = second_variation_qform(f, v, 1e-3), jacobi_qform(f, v)
        gaps.append(abs(q1 - q2) / abs(q2))
    assert gaps[1] < 2e-3
    assert gaps[0] / gaps[1] > 3.0


def test_second_variation_constant_field_is_zero():
    f = identity_map(FlatTorusModel(), 16)
    c = VariationField(np.broadcast_to([0.3, -0.7], f.values.shape), f)
    assert abs(second_variation_qform(f, c, 0.5)) < 1e-12
    assert jacobi_qform(f, c) == 0.0

import math
import warnings

import numpy as np
import pytest
from sklearn.base import clone

from dbarflow.discrete import GridSpec, MapField
from dbarflow.flow import (
    DbarHeatFlow,
    FlowConfig,
    FlowTrace,
    IntegratorError,
    auto_dt,
    energy_bound_monitor,
    rescale_diagnostic,
    run,
    step,
)
from dbarflow.models import ConfigError, FlatTorusModel, RoundSphereModel, hopf_torus_source
from dbarflow.rng import SplitMix64
from dbarflow.verify import identity_map, make_target, sample_map

from conftest import SQUARE_ALPHA


def test_config_validation():
    for kwargs, key in (
        ({"dt": -1.0}, "dt"),
        ({"dt": "fast"}, "dt"),
        ({"a": 1.5}, "a"),
        ({"scheme": "leapfrog"}, "scheme"),
        ({"c_cfl": 0.5}, "c_cfl"),
        ({"order": 3}, "order"),
        ({"report_every": 0}, "report_every"),
    ):
        with pytest.raises(ConfigError) as info:
            FlowConfig(**kwargs)
        assert info.value.field == key


def test_identity_is_exact_fixed_point():
    f = identity_map(FlatTorusModel(((1.0, 0.0), (0.3, 1.2))), 16)
    g = step(f, FlowConfig(dt=1e-3))
    np.testing.assert_allclose(g.values, f.values, atol=1e-14)
    res = run(f, FlowConfig(t_max=1.0, stop_tau_tol=1e-8))
    assert res.status == "converged"
    assert len(res.trace) == 1


def test_euler_is_linear_in_dt():
    f = sample_map(make_target("hopf_surface"), 16, SplitMix64(1))
    cfg = FlowConfig()
    a = step(f, cfg, dt=1e-5).values - f.values
    b = step(f, cfg, dt=2e-5).values - f.values
    np.testing.assert_allclose(b, 2 * a, rtol=1e-9, atol=1e-15)


def test_rk4_agrees_with_euler_to_second_order():
    f = sample_map(make_target("round_sphere"), 16, SplitMix64(2), amplitude=0.1)
    gaps = []
    for dt in (1e-4, 5e-5):
        e = step(f, FlowConfig(scheme="euler"), dt=dt).values
        r = step(f, FlowConfig(scheme="rk4"), dt=dt).values
        gaps.append(np.max(np.abs(e - r)))
    assert gaps[0] / gaps[1] == pytest.approx(4.0, rel=0.05)


def test_auto_dt_formula():
    f = sample_map(make_target("euclidean"), 16, SplitMix64(3))
    cfg = FlowConfig(c_cfl=0.1)
    d = 1.0 / 16
    dt = auto_dt(f, cfg)
    from dbarflow.functionals import tension
    from dbarflow.flow import tf_norm_sq

    sup_sq = float(np.max(tf_norm_sq(f, tension(f).Tf)))
    assert dt == pytest.approx(min(0.1 * d * d / (1 + sup_sq), 0.25 * d * d), rel=1e-12)


@pytest.mark.parametrize("a", [1.0, 0.9, 0.0])
def test_flow_decreases_its_energy(a):
    f = sample_map(make_target("hopf_surface", alpha=SQUARE_ALPHA), 24, SplitMix64(4))
    res = run(f, FlowConfig(t_max=0.05, a=a, report_every=1))
    Ea = res.trace.column("E_a")
    assert res.status == "t_max"
    assert np.all(np.diff(Ea) <= 1e-8)
    assert Ea[-1] < Ea[0]


def test_energy_identity_improves_under_refinement():
    T = make_target("hopf_surface", alpha=SQUARE_ALPHA)
    out, t_max = [], None
    for n in (16, 32):
        f = sample_map(T, n, SplitMix64(4))
        t_max = t_max or 10 * auto_dt(f, FlowConfig())
        tr = run(f, FlowConfig(t_max=t_max, report_every=1)).trace
        t, E, tp = tr.column("t"), tr.column("E_plus"), tr.column("tau_plus_norm") ** 2
        out.append(np.max(np.abs(np.diff(E) / np.diff(t) + 0.5 * (tp[1:] + tp[:-1]))))
    assert out[0] / out[1] > 3.5


def test_run_lands_on_t_max_and_trace_is_increasing():
    f = sample_map(make_target("euclidean"), 16, SplitMix64(5))
    res = run(f, FlowConfig(t_max=1e-3, report_every=7))
    t = res.trace.column("t")
    assert t[-1] == 1e-3
    assert np.all(np.diff(t) > 0)
    tr = FlowTrace()
    tr.append({"t": 1.0})
    with pytest.raises(ValueError):
        tr.append({"t": 1.0})


def test_nan_state_raises_with_node():
    f = sample_map(make_target("euclidean"), 16, SplitMix64(6))
    vel = np.zeros(f.values.shape)
    vel[3, 5, 1] = np.nan
    with pytest.raises(IntegratorError) as info:
        step(f, FlowConfig(dt=1e-3), velocity=vel)
    assert info.value.node == (3, 5)


def test_puncture_hit_is_reported_as_error():
    T = make_target("hopf_surface")
    f = sample_map(T, 16, SplitMix64(7))
    # a step that lands one node on the origin
    vel = np.zeros(f.values.shape)
    vel[2, 2] = -f.values[2, 2] / 1e-3
    with pytest.raises(ValueError):
        step(f, FlowConfig(dt=1e-3), velocity=vel)


def _bubble(n, lam):
    src = hopf_torus_source(SQUARE_ALPHA)
    x = GridSpec(n, n, src.periods).nodes()
    p = x[n // 3, n // 2]
    # near each zero of sin the map is a rescaled chart identity of the sphere
    return MapField(np.sin(x - p) / lam, src, RoundSphereModel(1.0)), x, p


def test_blowup_detected_and_rescaled():
    lam = 0.5
    f, x, p = _bubble(128, lam)
    res = run(f, FlowConfig(t_max=1.0, blowup_threshold=0.9 * 2 * math.sqrt(2) / lam))
    assert res.status == "blowup"
    assert res.trace.blowup
    wins = rescale_diagnostic(res.trace, res.snapshots)
    assert len(wins) == len(res.snapshots) >= 1
    for w in wins:
        c = x[w.center]
        exact = np.sin(c + w.scale * w.x - p) / lam
        assert np.max(np.abs(w.values - exact)) <= 1e-4 * np.max(np.abs(exact))
        assert w.sup_gradient() == pytest.approx(1.0, rel=2e-3)


def test_no_blowup_no_rescale():
    f = sample_map(make_target("round_sphere"), 16, SplitMix64(8), amplitude=0.1)
    res = run(f, FlowConfig(t_max=1e-4))
    assert res.status == "t_max"
    assert rescale_diagnostic(res.trace, res.snapshots) == []


def test_rescale_window_shrinks_with_warning():
    f, _, _ = _bubble(32, 8.0)
    res = run(f, FlowConfig(t_max=1.0, blowup_threshold=0.1))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        wins = rescale_diagnostic(res.trace, res.snapshots, window=50.0)
    assert any("shrunk" in str(w.message) for w in caught)
    assert wins[0].x.max() * wins[0].scale <= math.pi + 1e-12


def test_energy_monitor():
    t = np.linspace(0, 2, 21)
    v = energy_bound_monitor((t, 3.0 * np.exp(0.7 * t)))
    assert v.rate == pytest.approx(0.7, rel=1e-10)
    assert v.intercept == pytest.approx(math.log(3.0), rel=1e-10)
    assert not v.anomaly
    v = energy_bound_monitor((t, np.exp(2.0 * t * t)))
    assert v.anomaly
    v = energy_bound_monitor((t, np.exp(-2.0 * t * t + 8.0 * t)))
    assert not v.anomaly  # bending down is not an anomaly


def test_estimator_api():
    est = DbarHeatFlow(t_max=1e-3, report_every=5)
    assert clone(est).get_params() == est.get_params()
    f = sample_map(make_target("flat_torus"), 16, SplitMix64(9))
    est.fit(f)
    assert est.status_ == "t_max"
    np.testing.assert_array_equal(est.transform(f).values, est.map_.values)
    with pytest.raises(TypeError):
        est.fit(np.zeros((16, 16, 2)))

"""Invariant suites run by ``dbarflow verify`` and reused by the tests.

Every check returns a :class:`Check` row; a suite passes when all of its
rows do.  Random inputs come from :class:`~dbarflow.rng.SplitMix64` so the
pass set is reproducible for a given seed.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from . import geometry as gc
from .discrete import GridSpec, MapField, TwistData, derivative, integrate, random_variation, read_field, write_field
from .functionals import decomposition_check, energy
from .geometry import ChartGeometry
from .hopf import FrameState, family_map, gram_schmidt
from .models import (
    EuclideanModel,
    FlatTorusModel,
    HopfSurfaceTarget,
    RoundSphereModel,
    SignFlipModel,
)
from .rng import SplitMix64

__all__ = ["Check", "make_target", "identity_map", "sample_map", "sample_points", "run_suites", "SUITES"]


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    target: str
    value: float
    tolerance: float

    @property
    def passed(self):
        return bool(self.value <= self.tolerance)


def make_target(name, alpha=2.0, radius=1.0, lattice=(1.0, 0.0, 0.0, 1.0), dim=4):
    if name == "hopf_surface":
        return HopfSurfaceTarget(alpha)
    if name == "hopf_signflip":
        return SignFlipModel(alpha)
    if name == "round_sphere":
        return RoundSphereModel(radius)
    if name == "flat_torus":
        return FlatTorusModel(np.reshape(lattice, (2, 2)))
    if name == "euclidean":
        return EuclideanModel(dim)
    raise ValueError(f"unknown target {name!r}")


def identity_map(torus, n, source=None):
    """The identity of a flat torus, from lattice coordinates to Cartesian ones."""
    source = source or torus.as_source()
    nodes = GridSpec(n, n, source.periods).nodes()
    values = nodes @ torus.periods
    return MapField(values, source, torus, TwistData(*torus.identity_map_twist()))


def sample_map(target, n, rng, amplitude=None):
    """A smooth seeded map of an ``n x n`` torus grid into ``target``."""
    if isinstance(target, HopfSurfaceTarget):
        raw = np.asarray(rng.normal(size=(2, 4)))
        u, v = gram_schmidt(raw[0], raw[1])
        base = family_map(FrameState(u, v, target.alpha), (n, n), target=target)
        amp = 0.1 if amplitude is None else amplitude
    elif isinstance(target, FlatTorusModel):
        base = identity_map(target, n)
        amp = 0.05 if amplitude is None else amplitude
    else:
        source = FlatTorusModel().as_source()
        base = MapField(np.zeros((n, n, target.dim)), source, target)
        amp = 0.5 if amplitude is None else amplitude
    v = random_variation(base, rng, modes=2, amplitude=amp)
    return base.with_values(base.values + v.values)


def sample_points(target, count, rng):
    """Seeded chart points away from punctures and chart edges."""
    p = np.asarray(rng.normal(size=(count, target.dim)))
    if isinstance(target, HopfSurfaceTarget):
        p = p / np.linalg.norm(p, axis=-1, keepdims=True) * (0.5 + np.asarray(rng.uniform(size=(count, 1))))
    return p


def _rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def geom_core_suite(target, pts, rng):
    name = target.name
    n = target.dim
    out = []
    J = target.complex_structure(pts)
    g = target.metric(pts)
    j2 = float(np.max(np.abs(J @ J + np.eye(n))))
    out.append(Check("geom_core", "J_squared_is_minus_one", name, j2, 1e-12))
    compat = np.swapaxes(J, -1, -2) @ g @ J - g
    compat_rel = _rel(compat, np.zeros_like(g)) / max(1.0, np.max(np.abs(g)))
    out.append(Check("geom_core", "metric_compatible", name, compat_rel, 1e-12))
    om = target.fundamental_form(pts)
    out.append(Check("geom_core", "omega_antisymmetric", name, float(np.max(np.abs(om + np.swapaxes(om, -1, -2)))), 1e-12))
    dg, _ = target.metric_jet(pts)
    dg_fd = np.stack([gc.fd_jacobian(target.metric, p, step=1e-4) for p in pts])
    out.append(Check("geom_core", "metric_jet_vs_fd", name, _rel(dg, dg_fd), 1e-7))
    X = np.asarray(rng.normal(size=pts.shape))
    Y = np.asarray(rng.normal(size=pts.shape))
    fast = target.christoffel_contract(pts, X, Y)
    slow = ChartGeometry.christoffel_contract(target, pts, X, Y)
    out.append(Check("geom_core", "christoffel_contract_vs_tensor", name, _rel(fast, slow), 1e-10))
    fast = target.d_omega_contract(pts, X, Y)
    slow = ChartGeometry.d_omega_contract(target, pts, X, Y)
    out.append(Check("geom_core", "d_omega_contract_vs_tensor", name, _rel(fast, slow), 1e-10))
    an = gc.d_omega(target, pts)
    fd = np.stack([gc.d_omega(target, p, mode="fd") for p in pts])
    out.append(Check("geom_core", "d_omega_analytic_vs_fd", name, _rel(an, fd), 1e-7))
    an = gc.d_star_omega(target, pts)
    fd = np.stack([gc.d_star_omega_divergence(target, p) for p in pts])
    out.append(Check("geom_core", "d_star_omega_two_routes", name, _rel(an, fd), 1e-6))
    return out


def functionals_suite(target, n, rng):
    name = target.name
    f = sample_map(target, n, rng)
    d = decomposition_check(f)
    scale = max(1.0, d["sup_plus"] ** 2 + d["sup_minus"] ** 2)
    out = [
        Check("functionals", "decomposition_orthogonal", name, d["orthogonality"] / scale, 1e-10),
        Check("functionals", "decomposition_norm_identity", name, d["norm_identity"] / scale, 1e-10),
        Check("functionals", "decomposition_form_identity", name, d["form_identity"] / scale, 1e-10),
        Check("functionals", "decomposition_type_plus", name, d["type_plus"], 1e-12),
        Check("functionals", "decomposition_type_minus", name, d["type_minus"], 1e-12),
    ]
    rep = energy(f)
    out.append(
        Check("functionals", "E_plus_two_routes", name, abs(rep.E_plus - rep.E_plus_direct) / max(1.0, rep.E), 1e-10)
    )
    out.append(
        Check("functionals", "E_minus_two_routes", name, abs(rep.E_minus - rep.E_minus_direct) / max(1.0, rep.E), 1e-10)
    )
    return out


def discrete_map_suite(target, n, rng):
    name = target.name
    f = sample_map(target, n, rng)
    out = []
    # a full wrap along each axis equals the deck action of the twist
    for axis, count in ((0, f.grid.n_s), (1, f.grid.n_theta)):
        wrapped = f.shifted(axis, count)
        k = f.twist.along(axis)
        expect = f.target.deck(f.values, k) if len(k) else f.values
        out.append(Check("discrete_map", f"deck_wrap_axis{axis}", name, _rel(wrapped, expect), 1e-12))
    dens = np.asarray(rng.uniform(size=f.grid.shape))
    a = integrate(dens, f.source, f.grid)
    # the shipped sources are flat, so a rolled density has the same integral;
    # exactly rounded summation makes that hold bit for bit
    b = integrate(np.roll(dens, (3, 5), axis=(0, 1)), f.source, f.grid)
    c = integrate(np.ascontiguousarray(dens[::-1, ::-1]), f.source, f.grid)
    out.append(Check("discrete_map", "quadrature_order_independent", name, abs(a - b) + abs(a - c), 0.0))
    buf = io.StringIO()
    write_field(f, buf)
    buf.seek(0)
    g, _ = read_field(buf, f.source, f.target)
    out.append(Check("discrete_map", "field_dump_roundtrip", name, float(np.max(np.abs(g.values - f.values))), 0.0))
    if isinstance(target, FlatTorusModel):
        ident = identity_map(target, n)
        Tf = derivative(ident)
        L = target.periods.T
        err = _rel(Tf, np.broadcast_to(L, Tf.shape))
        out.append(Check("discrete_map", "linear_map_derivative_exact", name, err, 1e-12))
    return out


SUITES = {"geom_core": geom_core_suite, "functionals": functionals_suite, "discrete_map": discrete_map_suite}


def run_suites(suites, targets, seed=0, n=32, points=16, alpha=2.0, radius=1.0, lattice=(1.0, 0.0, 0.0, 1.0)):
    """Run the named suites on every target; returns a list of :class:`Check`."""
    rows = []
    for tname in targets:
        target = make_target(tname, alpha=alpha, radius=radius, lattice=lattice)
        for suite in suites:
            # each (suite, target) pair gets its own stream so the order of
            # suites in the config does not change the inputs
            rng = SplitMix64(seed * 1000003 + _tag(suite + ":" + tname))
            if suite == "geom_core":
                rows += geom_core_suite(target, sample_points(target, points, rng), rng)
            else:
                rows += SUITES[suite](target, n, rng)
    return rows


def _tag(text):
    # small stable string hash (Python's hash() is salted per process)
    h = 1469598103934665603
    for ch in text.encode():
        h = ((h ^ ch) * 1099511628211) & ((1 << 64) - 1)
    return h & ((1 << 32) - 1)

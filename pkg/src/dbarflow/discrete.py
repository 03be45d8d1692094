"""Discretized maps from a periodic source grid into a target chart.

Twisted periodicity lives in the accessor: when a stencil reaches across the
seam of the fundamental domain, the fetched value is pushed through the
target's deck action.  No ghost cells are stored.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .geometry import ChartDomainError
from .models import RoundSphereModel, TorusSource

__all__ = [
    "GridSpec",
    "TwistData",
    "MapField",
    "VariationField",
    "IncompatibleHomotopyError",
    "shifted",
    "derivative",
    "second_derivative",
    "pullback_two_form",
    "exterior_derivative_1form",
    "integrate",
    "homotopy_path",
    "random_variation",
    "write_field",
    "read_field",
]


class IncompatibleHomotopyError(ValueError):
    """Endpoints of a homotopy are in different twist classes or antipodal."""


@dataclass(frozen=True)
class GridSpec:
    n_s: int
    n_theta: int
    periods: tuple

    def __post_init__(self):
        if self.n_s < 8 or self.n_theta < 8:
            raise ValueError(f"grid sizes must be >= 8, got {self.n_s}x{self.n_theta}")

    @property
    def shape(self):
        return (self.n_s, self.n_theta)

    @property
    def spacing(self):
        return (self.periods[0] / self.n_s, self.periods[1] / self.n_theta)

    def nodes(self):
        """Node coordinates, shape ``(n_s, n_theta, 2)``."""
        hs, ht = self.spacing
        s = np.arange(self.n_s) * hs
        t = np.arange(self.n_theta) * ht
        S, T = np.meshgrid(s, t, indexing="ij")
        return np.stack([S, T], axis=-1)


@dataclass(frozen=True)
class TwistData:
    """Deck-group elements applied when wrapping each source period.

    Each entry is a tuple of integers of length ``target.deck_rank``: one
    integer for the Hopf target (``f(s + log alpha) = alpha^k f(s)``), a pair
    of lattice coefficients for a flat-torus target, empty otherwise.
    """

    s: tuple = ()
    theta: tuple = ()

    @classmethod
    def trivial(cls, rank):
        return cls((0,) * rank, (0,) * rank)

    def along(self, axis):
        return self.s if axis == 0 else self.theta

    def is_trivial(self):
        return not any(self.s) and not any(self.theta)


def _scaled(k, m):
    return tuple(m * x for x in k)


def shifted(values, axis, offset, k, action):
    """Values at ``index + offset`` along ``axis`` with twisted wraparound.

    ``action(values, k)`` applies the deck element ``k``; wrapped entries get
    ``k`` (forward) or ``-k`` (backward) applied.
    """
    out = np.roll(values, -offset, axis=axis)
    if offset == 0 or not any(k):
        return out
    n = values.shape[axis]
    sl = [slice(None)] * values.ndim
    if offset > 0:
        sl[axis] = slice(n - offset, n)
        out[tuple(sl)] = action(out[tuple(sl)], _scaled(k, 1))
    else:
        sl[axis] = slice(0, -offset)
        out[tuple(sl)] = action(out[tuple(sl)], _scaled(k, -1))
    return out


_D1 = {2: ((1, 0.5), (-1, -0.5)), 4: ((1, 2 / 3), (-1, -2 / 3), (2, -1 / 12), (-2, 1 / 12))}
_D2 = {2: ((1, 1.0), (0, -2.0), (-1, 1.0)), 4: ((2, -1 / 12), (1, 4 / 3), (0, -5 / 2), (-1, 4 / 3), (-2, -1 / 12))}


class MapField:
    """Snapshot of a map ``f`` on the source grid, values in target-chart coordinates.

    ``jet`` optionally supplies the exact derivative at given source
    coordinates (``(..., 2) -> (..., n, 2)``); it is only used when a caller
    asks for ``method="analytic"``.
    """

    def __init__(self, values, source, target, twist=None, jet=None, check=True):
        values = np.array(values, dtype=float)
        if values.ndim != 3 or values.shape[-1] != target.dim:
            raise ValueError(f"values must have shape (n_s, n_theta, {target.dim}), got {values.shape}")
        if not isinstance(source, TorusSource):
            raise TypeError("source must be a TorusSource")
        self.values = values
        self.values.setflags(write=False)
        self.source = source
        self.target = target
        self.grid = GridSpec(values.shape[0], values.shape[1], source.periods)
        self.twist = twist if twist is not None else TwistData.trivial(target.deck_rank)
        if len(self.twist.s) != target.deck_rank or len(self.twist.theta) != target.deck_rank:
            raise ValueError(f"twist data must have rank {target.deck_rank} for target {target.name}")
        self.jet = jet
        if check:
            target.check_positions(values)

    def with_values(self, values, check=True):
        return MapField(values, self.source, self.target, self.twist, check=check)

    def shifted(self, axis, offset):
        return shifted(self.values, axis, offset, self.twist.along(axis), self.target.deck)

    def nodes(self):
        return self.grid.nodes()

    def perturbed(self, v, eps):
        """``f + eps v`` as a straight line in chart/covering coordinates."""
        return self.with_values(self.values + eps * np.asarray(getattr(v, "values", v)))


class VariationField:
    """Tangent vectors along a :class:`MapField`, in target-chart components."""

    def __init__(self, values, base):
        values = np.asarray(values, dtype=float)
        if values.shape != base.values.shape:
            raise ValueError("variation field must match the grid shape of its base map")
        self.values = values
        self.base = base

    def shifted(self, axis, offset):
        return shifted(self.values, axis, offset, self.base.twist.along(axis), self.base.target.deck_push)


def _first(field, order):
    hs, ht = field.base.grid.spacing if isinstance(field, VariationField) else field.grid.spacing
    out = []
    for axis, h in ((0, hs), (1, ht)):
        acc = 0.0
        for offset, w in _D1[order]:
            acc = acc + w * field.shifted(axis, offset)
        out.append(acc / h)
    return np.stack(out, axis=-1)


def derivative(f, order=2, method="fd"):
    """``Tf^i_alpha`` on the grid, shape ``(n_s, n_theta, n, 2)``.

    Centered differences of the given order with deck-twisted wraparound, or
    the map's analytic jet when ``method="analytic"``.
    """
    if method == "analytic":
        if f.jet is None:
            raise ValueError("map has no analytic jet")
        return np.asarray(f.jet(f.nodes()))
    if method != "fd":
        raise ValueError(f"unknown method {method!r}")
    return _first(f, order)


def second_derivative(f, order=2):
    """``f^i_{alpha beta}``, shape ``(n_s, n_theta, n, 2, 2)``."""
    hs, ht = f.grid.spacing
    k0, k1 = f.twist.s, f.twist.theta
    deck = f.target.deck
    diag = []
    for axis, h in ((0, hs), (1, ht)):
        acc = 0.0
        for offset, w in _D2[order]:
            acc = acc + w * f.shifted(axis, offset)
        diag.append(acc / (h * h))
    mixed = 0.0
    for a, wa in _D1[order]:
        row = shifted(f.values, 0, a, k0, deck)
        for b, wb in _D1[order]:
            mixed = mixed + wa * wb * shifted(row, 1, b, k1, deck)
    mixed = mixed / (hs * ht)
    out = np.empty(f.values.shape + (2, 2))
    out[..., 0, 0] = diag[0]
    out[..., 1, 1] = diag[1]
    out[..., 0, 1] = mixed
    out[..., 1, 0] = mixed
    return out


def pullback_two_form(f, omega=None, Tf=None, order=2):
    """``(f*w)_{ab} = f^i_a f^j_b w_ij(f)``; ``omega`` defaults to the target's form."""
    if Tf is None:
        Tf = derivative(f, order=order)
    w = f.target.fundamental_form(f.values) if omega is None else omega(f.values)
    return np.swapaxes(Tf, -1, -2) @ w @ Tf


def exterior_derivative_1form(beta, grid, order=2):
    """``(d beta)_{01} = d_0 beta_1 - d_1 beta_0`` for a periodic 1-form on the grid."""
    hs, ht = grid.spacing
    d = []
    for axis, h in ((0, hs), (1, ht)):
        acc = 0.0
        for offset, w in _D1[order]:
            acc = acc + w * np.roll(beta, -offset, axis=axis)
        d.append(acc / h)
    return d[0][..., 1] - d[1][..., 0]


def integrate(density, source, grid=None):
    """Integral of a nodal density over the source torus.

    Midpoint/trapezoid rule on the uniform periodic grid, weighted by the
    source volume density.  Compensated (exactly rounded) summation, so the
    result does not depend on node ordering.  Non-finite input gives NaN.
    """
    density = np.asarray(density, dtype=float)
    if grid is None:
        grid = GridSpec(density.shape[0], density.shape[1], source.periods)
    hs, ht = grid.spacing
    cache = source.__dict__.setdefault("_volume_cache", {})
    if grid.shape not in cache:
        cache[grid.shape] = np.broadcast_to(source.geom.volume_density(grid.nodes()), grid.shape).copy()
    vol = np.broadcast_to(cache[grid.shape], density.shape)
    weighted = density * vol
    if not np.all(np.isfinite(weighted)):
        return float("nan")
    return math.fsum(weighted.ravel()) * hs * ht


def homotopy_path(f0, f1, t):
    """Point ``t`` in ``[0, 1]`` on a homotopy from ``f0`` to ``f1``.

    Straight line in chart/covering coordinates, except for the round sphere
    where the interpolation is done in ``R^3`` and renormalized.
    """
    if f0.values.shape != f1.values.shape or f0.target is not f1.target:
        raise IncompatibleHomotopyError("endpoints live on different grids or targets")
    if f0.twist != f1.twist:
        raise IncompatibleHomotopyError(f"twist classes differ: {f0.twist} vs {f1.twist}")
    if t == 0:
        return f0.with_values(f0.values)
    if t == 1:
        return f1.with_values(f1.values)
    target = f0.target
    if isinstance(target, RoundSphereModel):
        p0, p1 = target.to_sphere(f0.values), target.to_sphere(f1.values)
        r = target.radius
        if np.any(np.einsum("...i,...i->...", p0, p1) <= -(1.0 - 1e-12) * r * r):
            raise IncompatibleHomotopyError("antipodal values; normalized interpolation undefined")
        q = (1.0 - t) * p0 + t * p1
        q = r * q / np.linalg.norm(q, axis=-1, keepdims=True)
        try:
            return f0.with_values(target.from_sphere(q))
        except ChartDomainError as exc:
            raise IncompatibleHomotopyError(str(exc)) from exc
    return f0.with_values((1.0 - t) * f0.values + t * f1.values)


def random_variation(f, rng, modes=2, amplitude=1.0):
    """Smooth deck-equivariant random variation field along ``f``.

    A random trigonometric polynomial (frequencies up to ``modes``) in each
    component, multiplied by the target's covariance scale so the field is
    equivariant.  ``rng`` needs ``normal(size=...)``.
    """
    grid = f.grid
    nodes = grid.nodes()
    x = 2 * np.pi * nodes[..., 0] / grid.periods[0]
    y = 2 * np.pi * nodes[..., 1] / grid.periods[1]
    n = f.target.dim
    out = np.zeros(f.values.shape)
    for comp in range(n):
        for a in range(-modes, modes + 1):
            for b in range(0, modes + 1):
                c = np.asarray(rng.normal(size=2), dtype=float)
                w = 1.0 / (1.0 + a * a + b * b)
                out[..., comp] += w * (c[0] * np.cos(a * x + b * y) + c[1] * np.sin(a * x + b * y))
    out *= amplitude * f.target.covariance_scale(f.values)[..., None]
    return VariationField(out, f)


# -- field dumps -------------------------------------------------------------


def write_field(f, path_or_buf, extra=None):
    """Dump a map as CSV: ``# key = value`` header lines, then one row per node."""
    lines = [
        f"# source = {f.source.name}",
        f"# target = {f.target.name}",
        f"# alpha = {f.source.alpha if f.source.alpha is not None else getattr(f.target, 'alpha', '')}",
        f"# n_s = {f.grid.n_s}",
        f"# n_theta = {f.grid.n_theta}",
        f"# twist_s = {' '.join(str(k) for k in f.twist.s)}",
        f"# twist_theta = {' '.join(str(k) for k in f.twist.theta)}",
    ]
    for key, value in (extra or {}).items():
        lines.append(f"# {key} = {value}")
    n = f.target.dim
    lines.append(",".join(["i", "j", "s", "theta"] + [f"y{c + 1}" for c in range(n)]))
    nodes = f.nodes()
    for i in range(f.grid.n_s):
        for j in range(f.grid.n_theta):
            row = [str(i), str(j), repr(float(nodes[i, j, 0])), repr(float(nodes[i, j, 1]))]
            row += [repr(float(v)) for v in f.values[i, j]]
            lines.append(",".join(row))
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w", newline="\n") as fh:
            fh.write(text)


def read_field(path_or_buf, source, target):
    """Inverse of :func:`write_field`; models are supplied by the caller."""
    if hasattr(path_or_buf, "read"):
        text = path_or_buf.read()
    else:
        with open(path_or_buf) as fh:
            text = fh.read()
    meta = {}
    rows = []
    for line in io.StringIO(text):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            meta[key.strip()] = value.strip()
        elif line.startswith("i,"):
            continue
        else:
            rows.append([float(x) for x in line.split(",")])
    n_s, n_t = int(meta["n_s"]), int(meta["n_theta"])
    data = np.array(rows)
    values = np.empty((n_s, n_t, target.dim))
    values[data[:, 0].astype(int), data[:, 1].astype(int)] = data[:, 4:]
    twist = TwistData(
        tuple(int(k) for k in meta.get("twist_s", "").split()),
        tuple(int(k) for k in meta.get("twist_theta", "").split()),
    )
    return MapField(values, source, target, twist), meta

"""Concrete almost Hermitian models.

Targets carry their covering-space deck action; quotient points are never
materialized.  Sources are flat two-tori given on a chart whose coordinates
run along the two periods.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import ChartDomainError, ChartGeometry, DegenerateMetricError, standard_complex_structure

__all__ = [
    "ConfigError",
    "PunctureProximityError",
    "ConformallyFlatModel",
    "EuclideanModel",
    "HopfSurfaceTarget",
    "RoundSphereModel",
    "ConstantModel",
    "FlatTorusModel",
    "ScaledGeometry",
    "SignFlipModel",
    "TorusSource",
    "hopf_torus_source",
    "build_model",
    "random_unitary",
]

RHO_MIN = 1e-8


class ConfigError(ValueError):
    """Invalid model or run parameter; ``field`` names the offending key."""

    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class PunctureProximityError(ValueError):
    """A map value came within ``RHO_MIN`` of the puncture of ``R^4 \\ {0}``."""


class _Target:
    """Deck-group plumbing shared by the target models (trivial group by default)."""

    deck_rank = 0

    def deck(self, values, k):
        """Apply the deck transformation indexed by the integer tuple ``k``."""
        return values

    def deck_push(self, vectors, k):
        """Differential of :meth:`deck` applied to tangent vectors."""
        return vectors

    def covariance_scale(self, values):
        """Scalar field ``s`` with ``s(deck(y, k)) * v = deck_push(s(y) * v, k)``."""
        return np.ones(np.shape(values)[:-1])


class ConformallyFlatModel(_Target, ChartGeometry):
    """``g = exp(phi) * delta`` with the standard constant ``J``.

    Subclasses provide :meth:`log_factor` returning ``phi``, its gradient and
    its Hessian (``None`` when called with ``hessian=False``).  Closed-form
    Christoffel and ``dw`` contractions are provided for speed; they agree
    with the generic tensor assembly.
    """

    def __init__(self, dim):
        self.dim = dim
        self._J = standard_complex_structure(dim)

    def log_factor(self, p, hessian=True):
        raise NotImplementedError

    def metric(self, p):
        phi, _, _ = self.log_factor(p, hessian=False)
        return np.exp(phi)[..., None, None] * np.eye(self.dim)

    def metric_jet(self, p):
        phi, dphi, ddphi = self.log_factor(p)
        ef = np.exp(phi)
        eye = np.eye(self.dim)
        dg = ef[..., None, None, None] * eye[:, :, None] * dphi[..., None, None, :]
        hess = ddphi + dphi[..., :, None] * dphi[..., None, :]
        ddg = ef[..., None, None, None, None] * eye[:, :, None, None] * hess[..., None, None, :, :]
        return dg, ddg

    def complex_structure(self, p):
        shape = np.shape(p)[:-1]
        return np.broadcast_to(self._J, shape + self._J.shape)

    def complex_structure_jet(self, p):
        return np.zeros(np.shape(p)[:-1] + (self.dim,) * 3)

    def inverse_metric(self, p):
        phi, _, _ = self.log_factor(p, hessian=False)
        return np.exp(-phi)[..., None, None] * np.eye(self.dim)

    def christoffel_contract(self, p, X, Y):
        _, dphi, _ = self.log_factor(p, hessian=False)
        xd = np.einsum("...i,...i->...", X, dphi)
        yd = np.einsum("...i,...i->...", Y, dphi)
        xy = np.einsum("...i,...i->...", X, Y)
        return 0.5 * (X * yd[..., None] + Y * xd[..., None] - dphi * xy[..., None])

    def d_omega_contract(self, p, X, Y):
        # dw = exp(phi) dphi ^ w0 with w0 the constant standard form
        phi, dphi, _ = self.log_factor(p, hessian=False)
        w0 = self._J.T
        w0XY = np.einsum("...j,jk,...k->...", X, w0, Y)
        dX = np.einsum("...i,...i->...", dphi, X)
        dY = np.einsum("...i,...i->...", dphi, Y)
        w0Y_ = np.einsum("...j,jl->...l", Y, w0)  # w0(Y, .)
        w0_X = np.einsum("lj,...j->...l", w0, X)  # w0(., X)
        out = dphi * w0XY[..., None] + dX[..., None] * w0Y_ + dY[..., None] * w0_X
        return np.exp(phi)[..., None] * out


class EuclideanModel(ConformallyFlatModel):
    """Flat ``R^dim`` with the standard complex structure (Kähler)."""

    def __init__(self, dim=4):
        super().__init__(dim)
        self.name = f"euclidean{dim}"

    def log_factor(self, p, hessian=True):
        p = np.asarray(p, dtype=float)
        shape = p.shape[:-1]
        n = self.dim
        return np.zeros(shape), np.zeros(shape + (n,)), np.zeros(shape + (n, n)) if hessian else None


class HopfSurfaceTarget(ConformallyFlatModel):
    """Hopf surface ``(C^2 \\ 0) / <y -> alpha y>`` on its covering space.

    The metric is ``h = rho^-2 delta`` with ``rho = |y|``, so
    ``w_N = rho^-2 (dy1^dy2 + dy3^dy4)``.
    """

    deck_rank = 1

    def __init__(self, alpha):
        if not alpha > 1.0:
            raise ConfigError("alpha", f"deck scale must exceed 1, got {alpha}")
        super().__init__(4)
        self.alpha = float(alpha)
        self.name = "hopf_surface"

    def log_factor(self, p, hessian=True):
        p = np.asarray(p, dtype=float)
        r2 = np.einsum("...i,...i->...", p, p)
        if np.any(~(r2 > 0.0)):
            raise DegenerateMetricError("hopf metric is singular at the origin")
        phi = -np.log(r2)
        dphi = -2.0 * p / r2[..., None]
        if not hessian:
            return phi, dphi, None
        ddphi = -2.0 * np.eye(4) / r2[..., None, None] + 4.0 * p[..., :, None] * p[..., None, :] / (
            r2[..., None, None] ** 2
        )
        return phi, dphi, ddphi

    def check_positions(self, p):
        super().check_positions(p)
        rho = np.linalg.norm(p, axis=-1)
        if np.any(rho <= RHO_MIN):
            idx = np.unravel_index(int(np.argmin(rho)), rho.shape)
            raise PunctureProximityError(f"map value within {RHO_MIN} of the puncture at node {idx}")

    def deck(self, values, k):
        return values * self.alpha ** k[0]

    def deck_push(self, vectors, k):
        return vectors * self.alpha ** k[0]

    def covariance_scale(self, values):
        return np.linalg.norm(values, axis=-1)


class RoundSphereModel(ConformallyFlatModel):
    """Round sphere of the given radius in a stereographic chart.

    ``g = 4 r^4 / (r^2 + |x|^2)^2 delta``.  The second chart is the inversion
    ``x -> r^2 x / |x|^2``, an isometry of this metric; see :meth:`to_other_chart`.
    """

    def __init__(self, radius=1.0):
        if not radius > 0.0:
            raise ConfigError("radius", f"must be positive, got {radius}")
        super().__init__(2)
        self.radius = float(radius)
        self.name = "round_sphere"

    def log_factor(self, p, hessian=True):
        p = np.asarray(p, dtype=float)
        r2 = self.radius ** 2
        q = r2 + np.einsum("...i,...i->...", p, p)
        phi = math.log(4.0 * r2 * r2) - 2.0 * np.log(q)
        dphi = -4.0 * p / q[..., None]
        if not hessian:
            return phi, dphi, None
        ddphi = -4.0 * np.eye(2) / q[..., None, None] + 8.0 * p[..., :, None] * p[..., None, :] / (
            q[..., None, None] ** 2
        )
        return phi, dphi, ddphi

    def to_other_chart(self, p):
        p = np.asarray(p, dtype=float)
        n2 = np.einsum("...i,...i->...", p, p)
        return self.radius ** 2 * p / n2[..., None]

    def to_sphere(self, p):
        """Embed chart points into the sphere of radius ``r`` in ``R^3``."""
        p = np.asarray(p, dtype=float)
        r = self.radius
        n2 = np.einsum("...i,...i->...", p, p)
        q = r * r + n2
        xyz = np.concatenate([2 * r * r * p / q[..., None], (r * (n2 - r * r) / q)[..., None]], axis=-1)
        return xyz

    def from_sphere(self, xyz):
        xyz = np.asarray(xyz, dtype=float)
        r = self.radius
        denom = r - xyz[..., 2]
        if np.any(denom <= 1e-12 * r):
            raise ChartDomainError("point at the north pole is outside the south chart")
        return r * xyz[..., :2] / denom[..., None]


class ConstantModel(_Target, ChartGeometry):
    """Constant metric and complex structure (flat, Kähler)."""

    def __init__(self, metric, J, name="constant"):
        self._g = np.asarray(metric, dtype=float)
        self._J = np.asarray(J, dtype=float)
        self.dim = self._g.shape[0]
        self.name = name
        if np.linalg.eigvalsh(self._g).min() <= 0.0:
            raise ConfigError("metric", "must be positive definite")

    def metric(self, p):
        return np.broadcast_to(self._g, np.shape(p)[:-1] + self._g.shape)

    def metric_jet(self, p):
        shape = np.shape(p)[:-1]
        n = self.dim
        return np.zeros(shape + (n,) * 3), np.zeros(shape + (n,) * 4)

    def complex_structure(self, p):
        return np.broadcast_to(self._J, np.shape(p)[:-1] + self._J.shape)

    def complex_structure_jet(self, p):
        return np.zeros(np.shape(p)[:-1] + (self.dim,) * 3)

    def christoffel_contract(self, p, X, Y):
        return np.zeros(np.broadcast_shapes(np.shape(X), np.shape(Y)))

    def d_omega_contract(self, p, X, Y):
        return np.zeros(np.broadcast_shapes(np.shape(X), np.shape(Y)))


class FlatTorusModel(ConstantModel):
    """Flat torus ``R^2 / (Z p1 + Z p2)`` with the +90 degree rotation as ``J``.

    As a target the chart is Cartesian ``R^2`` and the deck group is the
    lattice.  :meth:`as_source` gives the same torus in lattice coordinates.
    """

    deck_rank = 2

    def __init__(self, periods=((1.0, 0.0), (0.0, 1.0))):
        P = np.asarray(periods, dtype=float)
        if P.shape != (2, 2):
            raise ConfigError("lattice", "need two period vectors in R^2")
        if abs(np.linalg.det(P)) < 1e-12:
            raise ConfigError("lattice", "period vectors are degenerate")
        super().__init__(np.eye(2), standard_complex_structure(2), name="flat_torus")
        self.periods = P  # rows are p1, p2

    def deck(self, values, k):
        shift = k[0] * self.periods[0] + k[1] * self.periods[1]
        return values + shift

    def as_source(self):
        L = self.periods.T  # columns are p1, p2
        G = L.T @ L
        J = np.linalg.inv(L) @ standard_complex_structure(2) @ L
        geom = ConstantModel(G, J, name="flat_torus")
        return TorusSource(geom, (1.0, 1.0), name="flat_torus", lattice=self.periods)

    def identity_map_twist(self):
        return (1, 0), (0, 1)


class ScaledGeometry(ChartGeometry):
    """``exp(psi) * g`` for a base geometry, same ``J``.

    ``log_factor`` returns ``(psi, grad psi, hess psi)`` at positions.
    """

    def __init__(self, base, log_factor, name=None):
        self.base = base
        self.dim = base.dim
        self._psi = log_factor
        self.name = name or f"scaled_{base.name}"

    def metric(self, p):
        psi, _, _ = self._psi(p)
        return np.exp(psi)[..., None, None] * self.base.metric(p)

    def metric_jet(self, p):
        psi, dpsi, ddpsi = self._psi(p)
        ef = np.exp(psi)
        g = self.base.metric(p)
        dg, ddg = self.base.metric_jet(p)
        new_dg = ef[..., None, None, None] * (dg + g[..., None] * dpsi[..., None, None, :])
        hess = ddpsi + dpsi[..., :, None] * dpsi[..., None, :]
        new_ddg = ef[..., None, None, None, None] * (
            ddg
            + dg[..., None] * dpsi[..., None, None, None, :]
            + np.swapaxes(dg[..., None] * dpsi[..., None, None, None, :], -1, -2)
            + g[..., None, None] * hess[..., None, None, :, :]
        )
        return new_dg, new_ddg

    def complex_structure(self, p):
        return self.base.complex_structure(p)

    def complex_structure_jet(self, p):
        return self.base.complex_structure_jet(p)


class SignFlipModel(HopfSurfaceTarget):
    """Negative control: Hopf target whose ``J`` has one entry sign-flipped.

    ``J e_2 = +e_1`` breaks ``J^2 = -1`` and metric compatibility, so the
    algebraic identities of the energy decomposition fail.  Not a geometry.
    """

    def __init__(self, alpha):
        super().__init__(alpha)
        self._J = self._J.copy()
        self._J[0, 1] = 1.0
        self.name = "hopf_signflip"

    def christoffel_contract(self, p, X, Y):
        return ChartGeometry.christoffel_contract(self, p, X, Y)

    def d_omega_contract(self, p, X, Y):
        return ChartGeometry.d_omega_contract(self, p, X, Y)


@dataclass
class TorusSource:
    """A two-torus source: a 2-dimensional chart geometry plus its periods."""

    geom: ChartGeometry
    periods: tuple
    name: str = "torus"
    alpha: float | None = None
    lattice: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.periods = tuple(float(x) for x in self.periods)
        if self.geom.dim != 2:
            raise ConfigError("source", "sources must be two-dimensional")
        if min(self.periods) <= 0.0:
            raise ConfigError("periods", "must be positive")


def hopf_torus_source(alpha):
    """The torus ``C* / <z -> alpha z>`` in log coordinates ``(s, theta)``.

    Flat metric ``ds^2 + dtheta^2``, ``J d_s = d_theta``; volume ``2 pi log alpha``.
    """
    if not alpha > 1.0:
        raise ConfigError("alpha", f"deck scale must exceed 1, got {alpha}")
    geom = ConstantModel(np.eye(2), standard_complex_structure(2), name="hopf_torus")
    return TorusSource(geom, (math.log(alpha), 2.0 * math.pi), name="hopf_torus", alpha=float(alpha))


def random_unitary(rng):
    """Random element of U(2) acting on ``R^4 = C^2`` (commutes with standard ``J``).

    ``rng`` needs a ``normal(size)`` method.
    """
    z = np.asarray(rng.normal(size=(2, 2))) + 1j * np.asarray(rng.normal(size=(2, 2)))
    q, r = np.linalg.qr(z)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    U = np.zeros((4, 4))
    for a in range(2):
        for b in range(2):
            re, im = q[a, b].real, q[a, b].imag
            # complex entry acting on (x, y) pairs with y = J x
            U[2 * a : 2 * a + 2, 2 * b : 2 * b + 2] = [[re, -im], [im, re]]
    return U


def build_model(spec):
    """Build a model from ``{"model": name, ...parameters}``.

    Returns the geometry object (a :class:`TorusSource` for ``hopf_torus``).
    """
    spec = dict(spec)
    name = spec.pop("model", None)
    if name == "hopf_surface":
        return HopfSurfaceTarget(_param(spec, "alpha", float))
    if name == "hopf_signflip":
        return SignFlipModel(_param(spec, "alpha", float))
    if name == "hopf_torus":
        return hopf_torus_source(_param(spec, "alpha", float))
    if name == "flat_torus":
        lattice = spec.get("lattice", ((1.0, 0.0), (0.0, 1.0)))
        return FlatTorusModel(lattice)
    if name == "round_sphere":
        return RoundSphereModel(_param(spec, "radius", float, 1.0))
    if name == "euclidean":
        dim = _param(spec, "dim", int, 4)
        if dim <= 0 or dim % 2:
            raise ConfigError("dim", "must be a positive even integer")
        return EuclideanModel(dim)
    raise ConfigError("model", f"unknown model {name!r}")


def _param(spec, key, kind, default=None):
    if key not in spec:
        if default is None:
            raise ConfigError(key, "missing")
        return default
    try:
        return kind(spec[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(key, f"cannot parse {spec[key]!r}") from exc

"""Linear tori in the Hopf surface and the flow restricted to them.

A frame ``(u, v)`` of orthonormal vectors in ``R^4`` gives the map
``x -> x^1 u + x^2 v`` of ``C*`` into ``C^2 \\ 0``; it is equivariant under
``z -> alpha z`` and so descends to a torus in the Hopf surface.  In log
coordinates ``(s, theta)`` the lift is ``e^s (cos theta u + sin theta v)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .discrete import GridSpec, MapField, TwistData
from .functionals import correction_field
from .models import HopfSurfaceTarget, hopf_torus_source
from .validation import check_alpha, check_frames

__all__ = [
    "FrameState",
    "FrameTrajectory",
    "FrameFlow",
    "family_map",
    "family_jet",
    "holomorphy_parameter",
    "frame_vector_field",
    "frame_flow",
    "gram_schmidt",
    "random_frames",
    "project_to_family",
]

_J4 = np.array([[0.0, -1.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, -1.0], [0.0, 0.0, 1.0, 0.0]])


@dataclass(frozen=True)
class FrameState:
    u: np.ndarray
    v: np.ndarray
    alpha: float = 2.0

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        check_frames(np.stack([u, v]), tol=1e-12)
        check_alpha(self.alpha)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @classmethod
    def from_vectors(cls, a, b, alpha=2.0):
        u, v = gram_schmidt(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
        return cls(u, v, alpha)

    @property
    def c(self):
        return float(holomorphy_parameter(self.u, self.v))

    @property
    def volume(self):
        return 2.0 * math.pi * math.log(self.alpha)


def gram_schmidt(a, b):
    """Orthonormalize the pair ``(a, b)`` along the last axis."""
    u = a / np.linalg.norm(a, axis=-1, keepdims=True)
    w = b - np.sum(u * b, axis=-1, keepdims=True) * u
    v = w / np.linalg.norm(w, axis=-1, keepdims=True)
    return u, v


def random_frames(rng, count):
    """``count`` frames from Gaussian 4-vectors followed by Gram-Schmidt."""
    raw = np.asarray(rng.normal(size=(count, 2, 4)), dtype=float)
    return np.stack(gram_schmidt(raw[:, 0], raw[:, 1]), axis=1)


def holomorphy_parameter(u, v):
    """``c = <J u, v> = u1 v2 - u2 v1 + u3 v4 - u4 v3``."""
    return np.einsum("ij,...j,...i->...", _J4, u, v)


def family_jet(u, v):
    """Exact ``Tf`` of the lift, as a function of source coordinates."""

    def jet(nodes):
        s, t = nodes[..., 0:1], nodes[..., 1:2]
        es = np.exp(s)
        f = es * (np.cos(t) * u + np.sin(t) * v)
        f_t = es * (-np.sin(t) * u + np.cos(t) * v)
        return np.stack([f, f_t], axis=-1)

    return jet


def family_map(fr, grid, source=None, target=None):
    """Sample the equivariant lift of the frame on the log-coordinate grid.

    ``grid`` is a :class:`GridSpec` or an ``(n_s, n_theta)`` pair.  The
    returned map has twist ``(1, 0)`` and carries the exact derivative as
    its analytic jet.
    """
    source = source or hopf_torus_source(fr.alpha)
    target = target or HopfSurfaceTarget(fr.alpha)
    shape = grid.shape if isinstance(grid, GridSpec) else tuple(grid)
    nodes = GridSpec(shape[0], shape[1], source.periods).nodes()
    s, t = nodes[..., 0:1], nodes[..., 1:2]
    values = np.exp(s) * (np.cos(t) * fr.u + np.sin(t) * fr.v)
    return MapField(values, source, target, TwistData((1,), (0,)), jet=family_jet(fr.u, fr.v))


def project_to_family(f):
    """Least-squares frame ``(u, v)`` with ``f ~ e^s (cos theta u + sin theta v)``.

    Returns ``(u, v, residual)``; the raw fit is Gram-Schmidt orthonormalized
    and ``residual`` is the relative RMS misfit of the raw fit.
    """
    nodes = f.nodes()
    s, t = nodes[..., 0], nodes[..., 1]
    q = f.values * np.exp(-s)[..., None]
    basis = np.stack([np.cos(t), np.sin(t)], axis=-1).reshape(-1, 2)
    coef, *_ = np.linalg.lstsq(basis, q.reshape(-1, q.shape[-1]), rcond=None)
    fit = basis @ coef
    resid = np.sqrt(np.mean((fit - q.reshape(fit.shape)) ** 2)) / np.sqrt(np.mean(q ** 2))
    u, v = gram_schmidt(coef[0], coef[1])
    return u, v, float(resid)


def frame_vector_field(u, v, target=None, source=None, tol=1e-8):
    """Velocity ``(du, dv)`` of the restricted flow at the frame(s) ``(u, v)``.

    ``A`` of the lift is evaluated with the coordinate formula at the probes
    ``x = (1, 0)`` and ``x = (0, 1)`` (``s = 0``, ``theta = 0, pi/2``), where
    the lift and its derivative are ``(u; u, v)`` and ``(v; v, -u)``.
    Because ``A`` is linear in ``x`` these are exactly ``du`` and ``dv``.
    The result is projected onto the tangent space of the Stiefel manifold;
    that projection must not move it by more than ``tol``.
    """
    if isinstance(u, FrameState):
        target = target or HopfSurfaceTarget(u.alpha)
        u, v = u.u, u.v
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    target = target or HopfSurfaceTarget(2.0)
    source = source or hopf_torus_source(target.alpha)
    y = np.stack([u, v], axis=-2)
    Tf = np.stack([np.stack([u, v], axis=-1), np.stack([v, -u], axis=-1)], axis=-3)
    probes = np.array([[0.0, 0.0], [0.0, 0.5 * math.pi]])
    ginv = np.linalg.inv(source.geom.metric(probes))
    omega = source.geom.fundamental_form(probes)
    shape = y.shape[:-1]
    A = correction_field(
        target,
        y,
        Tf,
        np.broadcast_to(ginv, shape + (2, 2)),
        np.broadcast_to(omega, shape + (2, 2)),
    )
    du, dv = A[..., 0, :], A[..., 1, :]
    X = np.stack([u, v], axis=-1)
    Z = np.stack([du, dv], axis=-1)
    XtZ = np.einsum("...ia,...ib->...ab", X, Z)
    P = Z - np.einsum("...ia,...ab->...ib", X, 0.5 * (XtZ + np.swapaxes(XtZ, -1, -2)))
    moved = np.max(np.abs(P - Z)) if P.size else 0.0
    if moved > tol * (1.0 + np.max(np.abs(Z))):
        raise RuntimeError(f"frame velocity is not tangent to the Stiefel manifold (moved {moved:.3e})")
    return P[..., 0], P[..., 1]


@dataclass
class FrameTrajectory:
    t: np.ndarray
    u: np.ndarray
    v: np.ndarray
    c: np.ndarray
    E_plus: np.ndarray
    classification: np.ndarray
    convergence_time: np.ndarray
    max_drift: float


def _classify(c, tol):
    out = np.full(np.shape(c), "non-converged", dtype=object)
    out[np.abs(c - 1.0) < tol] = "holomorphic"
    out[np.abs(c + 1.0) < tol] = "anti-holomorphic"
    return out


def frame_flow(u0, v0, dt, t_max, alpha=2.0, tol=1e-6, record_every=1):
    """Integrate the restricted flow with RK4 and a Gram-Schmidt retraction.

    ``u0, v0`` may carry leading batch dimensions.  Classification is by
    ``|c -+ 1| < tol`` at ``t_max``; ``convergence_time`` is the first
    recorded time after which that holds for good (NaN if never).
    """
    target = HopfSurfaceTarget(alpha)
    source = hopf_torus_source(alpha)
    V = 2.0 * math.pi * math.log(alpha)
    u, v = gram_schmidt(np.asarray(u0, dtype=float), np.asarray(v0, dtype=float))
    n_steps = int(round(t_max / dt))

    def rhs(a, b):
        return frame_vector_field(a, b, target, source)

    ts, us, vs = [0.0], [u.copy()], [v.copy()]
    drift = 0.0
    for step in range(1, n_steps + 1):
        k1 = rhs(u, v)
        k2 = rhs(u + 0.5 * dt * k1[0], v + 0.5 * dt * k1[1])
        k3 = rhs(u + 0.5 * dt * k2[0], v + 0.5 * dt * k2[1])
        k4 = rhs(u + dt * k3[0], v + dt * k3[1])
        u_new = u + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        v_new = v + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        gram = np.stack(
            [
                np.sum(u_new * u_new, -1) - 1.0,
                np.sum(v_new * v_new, -1) - 1.0,
                np.sum(u_new * v_new, -1),
            ]
        )
        drift = max(drift, float(np.max(np.abs(gram))) if gram.size else 0.0)
        u, v = gram_schmidt(u_new, v_new)
        if step % record_every == 0 or step == n_steps:
            ts.append(step * dt)
            us.append(u.copy())
            vs.append(v.copy())
    t = np.array(ts)
    U, Vv = np.array(us), np.array(vs)
    c = holomorphy_parameter(U, Vv)
    cls = _classify(c[-1], tol)
    conv = np.full(np.shape(c[-1]), np.nan)
    for target_c in (1.0, -1.0):
        ok = np.abs(c - target_c) < tol
        # first index from which ok stays true to the end
        tail = np.flip(np.logical_and.accumulate(np.flip(ok, 0), axis=0), 0)
        first = np.where(tail.any(0), tail.argmax(0), -1)
        conv = np.where(first >= 0, t[np.maximum(first, 0)], conv)
    return FrameTrajectory(
        t=t, u=U, v=Vv, c=c, E_plus=(1.0 - c) * V, classification=cls, convergence_time=conv, max_drift=drift
    )


class FrameFlow(BaseEstimator):
    """Estimator wrapper around :func:`frame_flow` for batches of frames.

    ``fit(X)`` takes frames of shape ``(n, 2, 4)`` (or ``(n, 8)``) and
    integrates them all at once.  ``predict`` returns ``+1`` for holomorphic
    limits, ``-1`` for anti-holomorphic ones and ``0`` when not converged.
    """

    def __init__(self, alpha=2.0, dt=0.01, t_max=50.0, tol=1e-6, record_every=1):
        self.alpha = alpha
        self.dt = dt
        self.t_max = t_max
        self.tol = tol
        self.record_every = record_every

    def fit(self, X, y=None):
        check_alpha(self.alpha)
        X = check_frames(X)
        self.trajectory_ = frame_flow(
            X[:, 0], X[:, 1], self.dt, self.t_max, self.alpha, self.tol, self.record_every
        )
        self.c_final_ = self.trajectory_.c[-1]
        self.labels_ = _labels(self.trajectory_.classification)
        return self

    def predict(self, X):
        return _labels(FrameFlow(**self.get_params()).fit(X).trajectory_.classification)

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_


def _labels(cls):
    return np.array([{"holomorphic": 1, "anti-holomorphic": -1}.get(c, 0) for c in cls], dtype=int)

"""Energies, Euler-Lagrange fields and identity checks for maps of tori.

Conventions: ``Tf`` has shape ``(..., n, 2)`` (target index, source index);
all pointwise norms are taken with the source metric ``g`` and the target
metric ``h`` evaluated at ``f``.  Two-forms pair as real tensors, so
``|w_M|^2 = 2`` on a surface.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .discrete import (
    VariationField,
    derivative,
    exterior_derivative_1form,
    integrate,
    pullback_two_form,
    second_derivative,
)
from .geometry import two_form_inner

__all__ = [
    "EnergyReport",
    "TensionField",
    "source_data",
    "energy",
    "energy_densities",
    "decomposition_check",
    "tension",
    "correction_field",
    "tension_a",
    "first_variation_check",
    "first_variation_residual",
    "cartan_check",
    "second_variation_qform",
    "jacobi_qform",
    "norm_sq",
]

TRACE_COLUMNS = ("t", "E", "K", "E_plus", "E_minus", "E_a", "sup_dTf", "tau_norm", "tau_plus_norm")


@dataclass
class EnergyReport:
    """Energies of one map snapshot.

    ``E_plus`` is assembled as ``E + K``; ``E_plus_direct`` is the
    independent quadrature of ``|Tf + J Tf J|^2 / 4``.
    """

    E: float
    K: float
    E_plus: float
    E_minus: float
    E_a: float
    sup_dTf: float
    a: float = 1.0
    E_plus_direct: float = float("nan")
    E_minus_direct: float = float("nan")

    def as_dict(self):
        return asdict(self)


@dataclass
class TensionField:
    tau: np.ndarray
    A: np.ndarray
    tau_plus: np.ndarray
    norms: dict
    Tf: np.ndarray = None


def source_data(source, grid):
    """Static source-side tensors at the grid nodes (cached on the source)."""
    cache = source.__dict__.setdefault("_node_cache", {})
    key = grid.shape
    if key not in cache:
        nodes = grid.nodes()
        geom = source.geom
        g = np.broadcast_to(geom.metric(nodes), grid.shape + (2, 2)).copy()
        ginv = np.linalg.inv(g)
        J = np.broadcast_to(geom.complex_structure(nodes), grid.shape + (2, 2)).copy()
        omega = np.einsum("...ki,...kj->...ij", J, g)
        gamma = np.broadcast_to(geom.christoffel(nodes), grid.shape + (2, 2, 2)).copy()
        trace_gamma = np.einsum("...ab,...gab->...g", ginv, gamma)
        flat = bool(np.all(trace_gamma == 0.0))
        W = np.einsum("...ac,...bd,...ab->...cd", ginv, ginv, omega)
        cache[key] = dict(g=g, ginv=ginv, J=J, omega=omega, W=W, trace_gamma=trace_gamma, flat=flat)
    return cache[key]


def norm_sq(X, Y, h):
    """``h_ij X^i Y^j`` for vector fields of shape ``(..., n)``."""
    return np.sum(X * (h @ Y[..., None])[..., 0], axis=-1)


def _tf_inner(A, B, ginv, h):
    M = np.swapaxes(A, -1, -2) @ (h @ B)
    return np.sum(M * ginv, axis=(-2, -1))


def energy_densities(Tf, ginv, J_M, h, J_N):
    """Pointwise ``|Tf|^2``, ``<Tf, J Tf J>``, ``|Tf + J Tf J|^2`` and ``|Tf - J Tf J|^2``."""
    JTJ = J_N @ Tf @ J_M
    plus = Tf + JTJ
    minus = Tf - JTJ
    return dict(
        sq=_tf_inner(Tf, Tf, ginv, h),
        cross=_tf_inner(Tf, JTJ, ginv, h),
        plus=_tf_inner(plus, plus, ginv, h),
        minus=_tf_inner(minus, minus, ginv, h),
        orth=_tf_inner(plus, minus, ginv, h),
    )


def energy(f, a=1.0, order=2, method="fd", Tf=None):
    """:class:`EnergyReport` for ``f``; ``a`` selects ``E_a = E + a K``."""
    if Tf is None:
        Tf = derivative(f, order=order, method=method)
    src = source_data(f.source, f.grid)
    h = f.target.metric(f.values)
    J_N = f.target.complex_structure(f.values)
    dens = energy_densities(Tf, src["ginv"], src["J"], h, J_N)
    pull = np.swapaxes(Tf, -1, -2) @ f.target.fundamental_form(f.values) @ Tf
    k_dens = -0.5 * two_form_inner(src["omega"], pull, src["ginv"])
    E = 0.5 * integrate(dens["sq"], f.source, f.grid)
    K = integrate(k_dens, f.source, f.grid)
    return EnergyReport(
        E=E,
        K=K,
        E_plus=E + K,
        E_minus=E - K,
        E_a=E + a * K,
        sup_dTf=float(np.sqrt(np.max(dens["sq"]))),
        a=a,
        E_plus_direct=0.25 * integrate(dens["plus"], f.source, f.grid),
        E_minus_direct=0.25 * integrate(dens["minus"], f.source, f.grid),
    )


def decomposition_check(f, order=2, method="fd"):
    """Residuals of the orthogonal decomposition of ``Tf`` and the norm identities.

    Returns the maxima over nodes of ``|<Tf + JTfJ, Tf - JTfJ>|``,
    ``| |Tf+JTfJ|^2/4 - |Tf|^2/2 - <Tf, JTfJ>/2 |`` and
    ``|<Tf, JTfJ> + <w_M, f*w_N>|``, the type residuals
    ``|J P J - P|`` and ``|J M J + M|`` of ``P = Tf + JTfJ`` and
    ``M = Tf - JTfJ`` (relative to ``sup|Tf|``; both vanish exactly when
    ``J^2 = -1`` on source and target), plus the sup norms of ``P`` and ``M``.
    """
    Tf = derivative(f, order=order, method=method)
    src = source_data(f.source, f.grid)
    h = f.target.metric(f.values)
    J_N = f.target.complex_structure(f.values)
    d = energy_densities(Tf, src["ginv"], src["J"], h, J_N)
    pull = np.swapaxes(Tf, -1, -2) @ f.target.fundamental_form(f.values) @ Tf
    J_M = src["J"]
    P = Tf + J_N @ Tf @ J_M
    M = Tf - J_N @ Tf @ J_M
    tf_scale = max(float(np.max(np.abs(Tf))), np.finfo(float).tiny)
    return dict(
        type_plus=float(np.max(np.abs(J_N @ P @ J_M - P))) / tf_scale,
        type_minus=float(np.max(np.abs(J_N @ M @ J_M + M))) / tf_scale,
        orthogonality=float(np.max(np.abs(d["orth"]))),
        norm_identity=float(np.max(np.abs(0.25 * d["plus"] - 0.5 * d["sq"] - 0.5 * d["cross"]))),
        form_identity=float(np.max(np.abs(d["cross"] + two_form_inner(src["omega"], pull, src["ginv"])))),
        sup_plus=float(np.sqrt(np.max(d["plus"]))),
        sup_minus=float(np.sqrt(np.max(d["minus"]))),
    )


def correction_field(target, y, Tf, ginv, omega_M, hinv=None, d_star_omega_M=None, W=None):
    """The first-order correction ``A`` at points ``y`` with derivatives ``Tf``.

    ``2A^i = (d*w_M)_a f^j_b w_lj g^ab h^li
    + w_ab f^j_c f^k_d (dw_N)_ljk g^ac g^bd h^li``.
    The first term is skipped when ``d_star_omega_M`` is ``None`` (surfaces).
    ``W`` (the form with both indices raised) may be passed precomputed.
    """
    if hinv is None:
        hinv = target.inverse_metric(y)
    if W is None:
        W = np.swapaxes(ginv, -1, -2) @ omega_M @ ginv
    m = Tf.shape[-1]
    cov = 0.0
    for c in range(m):
        for d in range(c + 1, m):
            w = W[..., c, d] - W[..., d, c]
            if np.any(w != 0.0):
                cov = cov + w[..., None] * target.d_omega_contract(y, Tf[..., c], Tf[..., d])
    if d_star_omega_M is not None:
        omega_N = target.fundamental_form(y)
        raised = (d_star_omega_M[..., None, :] @ ginv)[..., 0, :]
        cov = cov + (omega_N @ (Tf @ raised[..., None]))[..., 0]
    cov = cov + np.zeros(y.shape)
    return 0.5 * (np.swapaxes(hinv, -1, -2) @ cov[..., None])[..., 0]


def _harmonic_part(f, Tf, f2, src):
    ginv = src["ginv"]
    tau = np.sum(ginv[..., None, :, :] * f2, axis=(-2, -1))
    if not src["flat"]:
        tau = tau - (Tf @ src["trace_gamma"][..., None])[..., 0]
    y = f.values
    for a in range(2):
        for b in range(a, 2):
            w = ginv[..., a, b] * (1.0 if a == b else 2.0)
            if np.any(w != 0.0):
                tau = tau + w[..., None] * f.target.christoffel_contract(y, Tf[..., a], Tf[..., b])
    return tau


def tension(f, order=2, with_norms=True):
    """:class:`TensionField` with ``tau``, ``A`` and ``tau_plus = tau + A``."""
    Tf = derivative(f, order=order)
    f2 = second_derivative(f, order=order)
    src = source_data(f.source, f.grid)
    tau = _harmonic_part(f, Tf, f2, src)
    hinv = f.target.inverse_metric(f.values)
    A = correction_field(f.target, f.values, Tf, src["ginv"], src["omega"], hinv=hinv, W=src["W"])
    tau_plus = tau + A
    norms = {}
    if with_norms:
        h = f.target.metric(f.values)
        for name, vec in (("tau", tau), ("A", A), ("tau_plus", tau_plus)):
            sq = norm_sq(vec, vec, h)
            norms[name + "_L2"] = float(np.sqrt(max(integrate(sq, f.source, f.grid), 0.0)))
            norms[name + "_sup"] = float(np.sqrt(np.max(sq)))
    return TensionField(tau=tau, A=A, tau_plus=tau_plus, norms=norms, Tf=Tf)


def tension_a(f, a, order=2):
    """``tau_a = tau + a A``, the negative gradient of ``E_a``."""
    tf = tension(f, order=order, with_norms=False)
    return tf.tau + a * tf.A


def _values(v):
    return np.asarray(getattr(v, "values", v))


def first_variation_residual(f, v, eps, order=2):
    """Signed ``(E+(f + eps v) - E+(f - eps v)) / 2 eps + int <tau_plus, v>``."""
    vv = _values(v)
    if not np.any(vv):
        return 0.0
    Ep = energy(f.perturbed(vv, eps), order=order).E_plus
    Em = energy(f.perturbed(vv, -eps), order=order).E_plus
    tp = tension(f, order=order, with_norms=False).tau_plus
    pairing = integrate(norm_sq(tp, vv, f.target.metric(f.values)), f.source, f.grid)
    return (Ep - Em) / (2.0 * eps) + pairing


def first_variation_check(f, v, eps, order=2):
    """Absolute value of :func:`first_variation_residual`."""
    return abs(first_variation_residual(f, v, eps, order=order))


def cartan_check(f, v, eps, order=2):
    """Max-node residual of ``d/dt f*w = d f*(i_v w) + f*(i_v dw)`` at ``t = 0``.

    The left side is the centered time difference of the pulled-back target
    form along ``f + t v``; the right side is assembled from ``v`` directly.
    """
    vv = _values(v)
    if not np.any(vv):
        return 0.0
    lhs = (
        pullback_two_form(f.perturbed(vv, eps), order=order)[..., 0, 1]
        - pullback_two_form(f.perturbed(vv, -eps), order=order)[..., 0, 1]
    ) / (2.0 * eps)
    Tf = derivative(f, order=order)
    w = f.target.fundamental_form(f.values)
    # (f* i_v w)_a = f^i_a v^j w_ji
    beta = np.einsum("...ia,...j,...ji->...a", Tf, vv, w)
    exact = exterior_derivative_1form(beta, f.grid, order=order)
    interior = np.einsum("...l,...l->...", vv, f.target.d_omega_contract(f.values, Tf[..., 0], Tf[..., 1]))
    return float(np.max(np.abs(lhs - exact - interior)))


def second_variation_qform(f, v, eps, order=2):
    """Centered second difference of ``E+`` along ``f + t v`` at ``t = 0``."""
    vv = _values(v)
    E0 = energy(f, order=order).E_plus
    Ep = energy(f.perturbed(vv, eps), order=order).E_plus
    Em = energy(f.perturbed(vv, -eps), order=order).E_plus
    return (Ep - 2.0 * E0 + Em) / (eps * eps)


def jacobi_qform(f, v, order=2):
    """``int |Dv|^2 - g^ab <R(v, f_a) f_b, v>``: the second variation for Kähler targets.

    Independent of :func:`second_variation_qform`; valid at critical points
    of a surface source (where the ``d*w_M`` brace terms vanish).
    """
    if not isinstance(v, VariationField):
        v = VariationField(v, f)
    Tf = derivative(f, order=order)
    dv = derivative(v, order=order)
    y = f.values
    src = source_data(f.source, f.grid)
    cov = dv + np.stack([f.target.christoffel_contract(y, Tf[..., a], v.values) for a in range(2)], axis=-1)
    h = f.target.metric(y)
    grad_sq = _tf_inner(cov, cov, src["ginv"], h)
    R = f.target.riemann(y)
    curv = np.einsum("...ijkl,...jb,...k,...la,...ab,...im,...m->...", R, Tf, v.values, Tf, src["ginv"], h, v.values)
    return integrate(grad_sq - curv, f.source, f.grid)

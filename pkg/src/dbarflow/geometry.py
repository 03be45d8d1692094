"""Chart-based almost Hermitian geometry.

A geometry is a set of closed-form component functions on a single coordinate
chart: the metric ``g_ij``, the almost complex structure ``J^i_j`` and their
partial derivatives.  Everything else (Christoffel symbols, curvature, the
fundamental two-form and its exterior derivative and codifferential) is
assembled here from those components.

Index layout is fixed for the whole package.  For a batch of positions ``p``
of shape ``(..., n)``:

========================  =====================  ==========================
quantity                  shape                  meaning
========================  =====================  ==========================
``metric``                ``(..., n, n)``        ``g[i, j] = g_ij``
``metric_jet``            ``(..., n, n, n)``     ``dg[i, j, k] = d_k g_ij``
                          ``(..., n, n, n, n)``  ``ddg[i, j, k, l]``
``complex_structure``     ``(..., n, n)``        ``J[i, j] = J^i_j``
``complex_structure_jet`` ``(..., n, n, n)``     ``dJ[i, j, k] = d_k J^i_j``
``christoffel``           ``(..., n, n, n)``     ``G[i, j, k] = Gamma^i_jk``
``riemann``               ``(..., n, n, n, n)``  ``R[i, j, k, l] = R^i_jkl``
``fundamental_form``      ``(..., n, n)``        ``w[i, j] = g(J e_i, e_j)``
``d_omega``               ``(..., n, n, n)``     cyclic sum of ``w_ij,k``
========================  =====================  ==========================

``R(d_k, d_l) d_j = R^i_jkl d_i`` with ``R(X, Y) = [D_X, D_Y] - D_[X,Y]``, and
``Ric_jl = R^i_jil``.  Two-forms are paired as real tensors,
``<a, b> = a_ab b_cd g^ac g^bd`` (no 1/2 factor), so ``|w|^2 = dim``.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ChartGeometry",
    "DegenerateMetricError",
    "ChartDomainError",
    "christoffel",
    "fundamental_form",
    "d_omega",
    "d_star_omega",
    "riemann",
    "ricci",
    "two_form_inner",
    "standard_complex_structure",
    "fd_jacobian",
]


class DegenerateMetricError(ValueError):
    """Raised when the metric is singular or not positive definite at a point."""


class ChartDomainError(ValueError):
    """Raised when a position lies outside the domain of a chart."""


def standard_complex_structure(dim):
    """Return the constant ``J`` with ``J e_1 = e_2, J e_3 = e_4, ...``."""
    if dim % 2:
        raise ValueError(f"almost complex structures need even dimension, got {dim}")
    J = np.zeros((dim, dim))
    for k in range(0, dim, 2):
        J[k + 1, k] = 1.0
        J[k, k + 1] = -1.0
    return J


_FD_WEIGHTS = {
    2: ((1, 0.5), (-1, -0.5)),
    4: ((1, 2.0 / 3.0), (-1, -2.0 / 3.0), (2, -1.0 / 12.0), (-2, 1.0 / 12.0)),
}


def fd_jacobian(func, p, step=1e-4, order=4):
    """Centered finite-difference derivative of ``func`` at positions ``p``.

    ``func`` maps ``(..., n)`` to ``(..., *shape)``; the result has shape
    ``(..., *shape, n)`` with the differentiation index last.  The step is
    ``step * max(1, |p|)`` so it tracks the local coordinate scale.
    """
    p = np.asarray(p, dtype=float)
    n = p.shape[-1]
    scale = np.maximum(1.0, np.linalg.norm(p, axis=-1))[..., None]
    h = step * scale
    cols = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        acc = 0.0
        for offset, weight in _FD_WEIGHTS[order]:
            acc = acc + weight * np.asarray(func(p + offset * h * e))
        hk = h[..., 0].reshape(h.shape[:-1] + (1,) * (np.ndim(acc) - h.ndim + 1))
        cols.append(acc / hk)
    return np.stack(cols, axis=-1)


def _inv(g):
    det = np.linalg.det(g)
    if not np.all(np.isfinite(g)) or np.any(~(det > 0.0)):
        raise DegenerateMetricError("metric is singular or not positive definite")
    return np.linalg.inv(g)


class ChartGeometry:
    """An almost Hermitian structure ``(g, J)`` on one coordinate chart.

    Subclasses implement :meth:`metric`, :meth:`metric_jet`,
    :meth:`complex_structure` and :meth:`complex_structure_jet`.  The derived
    quantities below are generic; models may override the ``*_contract``
    shortcuts with closed forms, which the test-suite checks against the
    generic versions.
    """

    dim = None
    name = "chart"

    def metric(self, p):
        raise NotImplementedError

    def metric_jet(self, p):
        raise NotImplementedError

    def complex_structure(self, p):
        raise NotImplementedError

    def complex_structure_jet(self, p):
        raise NotImplementedError

    def check_positions(self, p):
        """Raise :class:`ChartDomainError` if any position is outside the chart."""
        p = np.asarray(p)
        if p.shape[-1] != self.dim:
            raise ChartDomainError(f"{self.name}: expected {self.dim} coordinates, got {p.shape[-1]}")
        if not np.all(np.isfinite(p)):
            raise ChartDomainError(f"{self.name}: non-finite position")

    # -- metric derived ----------------------------------------------------

    def inverse_metric(self, p):
        return _inv(self.metric(p))

    def volume_density(self, p):
        return np.sqrt(np.linalg.det(self.metric(p)))

    def christoffel(self, p):
        ginv = self.inverse_metric(p)
        dg, _ = self.metric_jet(p)
        # first kind: G_ljk = (g_lj,k + g_lk,j - g_jk,l) / 2
        first = 0.5 * (dg + np.swapaxes(dg, -1, -2) - np.moveaxis(dg, -1, -3))
        return np.einsum("...il,...ljk->...ijk", ginv, first)

    def christoffel_contract(self, p, X, Y):
        """``Gamma^i_jk X^j Y^k`` for vectors ``X, Y`` of shape ``(..., n)``."""
        return np.einsum("...ijk,...j,...k->...i", self.christoffel(p), X, Y)

    def christoffel_jet(self, p):
        """``d_m Gamma^i_jk`` with ``m`` as the last index."""
        ginv = self.inverse_metric(p)
        dg, ddg = self.metric_jet(p)
        first = 0.5 * (dg + np.swapaxes(dg, -1, -2) - np.moveaxis(dg, -1, -3))
        # d_m of the first-kind symbols, index order [l, j, k, m]
        dfirst = 0.5 * (
            ddg
            + np.einsum("...ljkm->...lkjm", ddg)
            - np.einsum("...jklm->...ljkm", ddg)
        )
        dginv = -np.einsum("...ia,...abm,...bl->...ilm", ginv, dg, ginv)
        return np.einsum("...ilm,...ljk->...ijkm", dginv, first) + np.einsum(
            "...il,...ljkm->...ijkm", ginv, dfirst
        )

    def riemann(self, p):
        G = self.christoffel(p)
        dG = self.christoffel_jet(p)
        # R^i_jkl = d_k G^i_lj - d_l G^i_kj + G^i_km G^m_lj - G^i_lm G^m_kj
        term = np.einsum("...iljk->...ijkl", dG)
        quad = np.einsum("...ikm,...mlj->...ijkl", G, G)
        return term - np.swapaxes(term, -1, -2) + quad - np.swapaxes(quad, -1, -2)

    def ricci(self, p):
        return np.einsum("...ijil->...jl", self.riemann(p))

    # -- complex structure derived -----------------------------------------

    def fundamental_form(self, p):
        return np.einsum("...ki,...kj->...ij", self.complex_structure(p), self.metric(p))

    def omega_jet(self, p):
        """``d_k w_ij`` with ``k`` last."""
        g = self.metric(p)
        dg, _ = self.metric_jet(p)
        J = self.complex_structure(p)
        dJ = self.complex_structure_jet(p)
        return np.einsum("...mik,...mj->...ijk", dJ, g) + np.einsum("...mi,...mjk->...ijk", J, dg)

    def d_omega(self, p):
        dw = self.omega_jet(p)
        # (dw)_ijk = w_ij,k + w_ki,j + w_jk,i
        return dw + np.einsum("...kij->...ijk", dw) + np.einsum("...jki->...ijk", dw)

    def d_omega_contract(self, p, X, Y):
        """``(dw)_ljk X^j Y^k`` as a covector in ``l``."""
        return np.einsum("...ljk,...j,...k->...l", self.d_omega(p), X, Y)

    def d_star_omega(self, p):
        """Codifferential ``(d*w)_j = -g^ab (D_a w)_bj``."""
        ginv = self.inverse_metric(p)
        G = self.christoffel(p)
        w = self.fundamental_form(p)
        dw = self.omega_jet(p)  # [b, j, a]
        cov = (
            np.einsum("...bja->...abj", dw)
            - np.einsum("...cab,...cj->...abj", G, w)
            - np.einsum("...caj,...bc->...abj", G, w)
        )
        return -np.einsum("...ab,...abj->...j", ginv, cov)


# Function-style aliases; these are the names the rest of the package uses.


def christoffel(geom, p):
    return geom.christoffel(p)


def fundamental_form(geom, p):
    return geom.fundamental_form(p)


def d_omega(geom, p, mode="analytic", step=1e-4, order=4):
    """Exterior derivative of the fundamental form.

    ``mode="fd"`` differentiates point evaluations of ``w`` with centered
    differences of the given ``order`` instead of using the analytic jets.
    """
    if mode == "analytic":
        return geom.d_omega(p)
    if mode != "fd":
        raise ValueError(f"unknown mode {mode!r}")
    dw = fd_jacobian(geom.fundamental_form, p, step=step, order=order)
    return dw + np.einsum("...kij->...ijk", dw) + np.einsum("...jki->...ijk", dw)


def d_star_omega(geom, p):
    return geom.d_star_omega(p)


def d_star_omega_divergence(geom, p, step=1e-3, order=4):
    """Independent route for ``d*w``: ``-g_bj |g|^-1/2 d_a(|g|^1/2 w^ab)``.

    Uses only point evaluations of ``g`` and ``J`` and finite differences, no
    jets and no Christoffel symbols.
    """

    def density(q):
        ginv = np.linalg.inv(geom.metric(q))
        w = geom.fundamental_form(q)
        vol = np.sqrt(np.linalg.det(geom.metric(q)))
        return vol[..., None, None] * np.einsum("...ac,...bd,...cd->...ab", ginv, ginv, w)

    p = np.asarray(p, dtype=float)
    div = np.einsum("...aba->...b", fd_jacobian(density, p, step=step, order=order))
    vol = geom.volume_density(p)
    return -np.einsum("...bj,...b->...j", geom.metric(p), div) / vol[..., None]


def riemann(geom, p):
    return geom.riemann(p)


def ricci(geom, p):
    return geom.ricci(p)


def two_form_inner(a, b, ginv):
    """Real-tensor pairing ``a_ab b_cd g^ac g^bd`` of two-forms."""
    return np.einsum("...ab,...cd,...ac,...bd->...", a, b, ginv, ginv)

"""First nonzero Laplace eigenvalue of a round sphere on two overlapping charts.

Each stereographic chart carries a uniform grid on a square.  Nodes inside
the disk ``|x| <= overlap * r`` are owned; the remaining stencil neighbours
are ghosts whose values are cubic (4 x 4 Lagrange) interpolants of the other
chart, reached through the inversion ``x -> r^2 x / |x|^2``.  Eliminating the
ghosts leaves a sparse operator on the owned nodes whose constants are an
exact null space.  Its smallest nonzero eigenvalue is found by shifted
inverse iteration, deflating the constants with the left null vector.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from sklearn.base import BaseEstimator

from .models import ConfigError, RoundSphereModel

__all__ = ["EigensolverError", "TwoChartLaplacian", "inverse_iteration", "SphereSpectrum"]


class EigensolverError(RuntimeError):
    pass


def _cubic_weights(t):
    """Lagrange weights on nodes -1, 0, 1, 2 for offset ``t`` in [0, 1)."""
    return np.array(
        [
            -t * (t - 1.0) * (t - 2.0) / 6.0,
            (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
            -(t + 1.0) * t * (t - 2.0) / 2.0,
            (t + 1.0) * t * (t - 1.0) / 6.0,
        ]
    )


class TwoChartLaplacian:
    """Discrete ``-Delta_g`` on the sphere of radius ``radius``.

    Parameters
    ----------
    radius : float
    n : int
        Grid points per side of each chart's square ``[-half, half]^2``.
    overlap : float
        Owned disk radius in units of ``radius``; must exceed 1 so the two
        charts overlap.
    """

    def __init__(self, radius=1.0, n=97, overlap=1.25):
        if not radius > 0:
            raise ConfigError("radius", f"must be positive, got {radius}")
        if int(n) != n or n < 9:
            raise ConfigError("n", f"need at least 9 nodes per side, got {n}")
        if not 1.0 < overlap < 2.0:
            raise ConfigError("overlap", f"must lie in (1, 2), got {overlap}")
        self.model = RoundSphereModel(radius)
        self.radius = float(radius)
        self.n = int(n)
        self.overlap = float(overlap)
        self.half = 1.5 * overlap * radius
        self.h = 2.0 * self.half / (n - 1)
        if overlap * radius + self.h > self.half:
            raise ConfigError("n", "grid too coarse for the requested overlap")
        self._build()

    def _index_xy(self, x):
        return (x + self.half) / self.h

    def _build(self):
        n, h, r = self.n, self.h, self.radius
        ax = np.linspace(-self.half, self.half, n)
        X = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1)
        own = np.linalg.norm(X, axis=-1) <= self.overlap * r
        self.coords = X
        self.owned = own
        # unknowns: owned nodes of chart 0 then chart 1 (identical layouts)
        local = -np.ones((n, n), dtype=int)
        local[own] = np.arange(int(own.sum()))
        m = int(own.sum())
        self.n_owned = m
        self._local = local

        g = self.model
        ginv = g.inverse_metric(X)
        gamma = g.christoffel(X)
        trace_gamma = np.einsum("...ab,...kab->...k", ginv, gamma)

        rows, cols, vals = [], [], []

        def ref(chart, i, j):
            """Linear combination of unknowns giving the value at node (i, j) of ``chart``."""
            if own[i, j]:
                return [(chart * m + local[i, j], 1.0)]
            # ghost: interpolate the other chart at the inverted point
            y = g.to_other_chart(X[i, j])
            fi, fj = self._index_xy(y)
            i0, j0 = int(math.floor(fi)), int(math.floor(fj))
            wi, wj = _cubic_weights(fi - i0), _cubic_weights(fj - j0)
            other = 1 - chart
            out = []
            for a in range(4):
                for b in range(4):
                    ii, jj = i0 - 1 + a, j0 - 1 + b
                    if not own[ii, jj]:
                        raise EigensolverError("interpolation stencil leaves the owned disk")
                    out.append((other * m + local[ii, jj], wi[a] * wj[b]))
            return out

        idx = np.argwhere(own)
        for chart in (0, 1):
            for i, j in idx:
                row = chart * m + local[i, j]
                gi = ginv[i, j]
                tg = trace_gamma[i, j]
                # -(g^ab d_ab u - g^ab Gamma^k_ab d_k u), centred differences
                terms = {
                    (0, 0): -2.0 * (gi[0, 0] + gi[1, 1]) / h ** 2,
                    (1, 0): gi[0, 0] / h ** 2 - tg[0] / (2 * h),
                    (-1, 0): gi[0, 0] / h ** 2 + tg[0] / (2 * h),
                    (0, 1): gi[1, 1] / h ** 2 - tg[1] / (2 * h),
                    (0, -1): gi[1, 1] / h ** 2 + tg[1] / (2 * h),
                }
                if gi[0, 1] != 0.0:
                    c = 2.0 * gi[0, 1] / (4 * h ** 2)
                    terms.update({(1, 1): c, (-1, -1): c, (1, -1): -c, (-1, 1): -c})
                for (di, dj), w in terms.items():
                    for col, wt in ref(chart, i + di, j + dj):
                        rows.append(row)
                        cols.append(col)
                        vals.append(-w * wt)
        self.matrix = sp.csc_matrix((vals, (rows, cols)), shape=(2 * m, 2 * m))
        self.matrix.sum_duplicates()

    def apply(self, u):
        return self.matrix @ u


def inverse_iteration(M, shift=1.0, max_iter=500, tol=1e-12, null_right=None, block=4, seed=0):
    """Smallest nonzero eigenvalue of ``M`` whose null space is ``null_right``.

    Block inverse iteration with ``(M + shift I)`` and a Rayleigh-Ritz step,
    so a nearly degenerate cluster (the three first spherical harmonics)
    does not stall convergence.  After every solve the component along the
    null vector is removed with the oblique projector built from the left
    null vector, itself obtained by inverse iteration on the transpose.
    Returns ``(eigenvalue, eigenvector, iterations, residual)``.
    """
    N = M.shape[0]
    lu = splu((M + shift * sp.identity(N, format="csc")).tocsc())
    rng = np.random.default_rng(seed)
    if null_right is None:
        null_right = np.ones(N)
    left = np.ones(N)
    for _ in range(50):
        left = lu.solve(left, trans="T")
        left /= np.linalg.norm(left)
    denom = left @ null_right

    def deflate(X):
        return X - np.outer(null_right, (left @ X) / denom)

    Q, _ = np.linalg.qr(deflate(rng.standard_normal((N, block))))
    lam_old = math.inf
    for it in range(1, max_iter + 1):
        Q, _ = np.linalg.qr(deflate(lu.solve(Q)))
        ritz, vecs = np.linalg.eig(Q.T @ (M @ Q))
        k = int(np.argmin(ritz.real))
        lam = float(ritz[k].real)
        if abs(lam - lam_old) <= tol * max(1.0, abs(lam)):
            x = Q @ vecs[:, k].real
            x /= np.linalg.norm(x)
            resid = np.linalg.norm(M @ x - lam * x)
            return lam, x, it, float(resid)
        lam_old = lam
    raise EigensolverError(f"inverse iteration did not converge in {max_iter} iterations")


class SphereSpectrum(BaseEstimator):
    """Estimate the first nonzero eigenvalue of the round sphere.

    ``fit()`` ignores its arguments (the "data" is the geometry itself) and
    sets ``eigenvalue_``, ``eigenvector_``, ``n_iter_`` and ``residual_``.
    """

    def __init__(self, radius=1.0, n=97, overlap=1.25, shift=1.0, max_iter=500, tol=1e-12):
        self.radius = radius
        self.n = n
        self.overlap = overlap
        self.shift = shift
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X=None, y=None):
        op = TwoChartLaplacian(self.radius, self.n, self.overlap)
        lam, vec, it, res = inverse_iteration(
            op.matrix, shift=self.shift / self.radius ** 2, max_iter=self.max_iter, tol=self.tol
        )
        self.operator_ = op
        self.eigenvalue_ = lam
        self.eigenvector_ = vec
        self.n_iter_ = it
        self.residual_ = res
        return self

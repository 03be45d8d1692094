"""Explicit time integration of ``df/dt = tau_a(f)`` with monitors.

``a = 1`` is the dbar-harmonic heat flow (gradient flow of ``E_plus``),
``a = 0`` the harmonic map heat flow.  Steps are straight moves in the
target chart (or covering space); twist data never changes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.ndimage import map_coordinates
from sklearn.base import BaseEstimator

from .discrete import MapField, integrate
from .functionals import _tf_inner, energy, norm_sq, source_data, tension
from .models import ConfigError

__all__ = [
    "FlowConfig",
    "FlowTrace",
    "FlowResult",
    "Snapshot",
    "WindowField",
    "IntegratorError",
    "auto_dt",
    "step",
    "run",
    "rescale_diagnostic",
    "energy_bound_monitor",
    "DbarHeatFlow",
]

TRACE_FIELDS = (
    "t",
    "E",
    "K",
    "E_plus",
    "E_minus",
    "E_a",
    "sup_dTf",
    "tau_norm",
    "tau_plus_norm",
    "tau_plus_sup",
    "blowup",
    "argmax_i",
    "argmax_j",
)


class IntegratorError(RuntimeError):
    """Non-finite state; ``node`` is the first offending grid index."""

    def __init__(self, message, node=None):
        super().__init__(message if node is None else f"{message} at node {node}")
        self.node = node


@dataclass
class FlowConfig:
    dt: object = "auto"
    t_max: float = 1.0
    a: float = 1.0
    scheme: str = "euler"
    stop_tau_tol: float = 0.0
    blowup_threshold: float = 1e3
    report_every: int = 10
    c_cfl: float = 0.2
    order: int = 2
    max_steps: int = 10_000_000

    def __post_init__(self):
        self.validate()

    def validate(self):
        if isinstance(self.dt, str):
            if self.dt != "auto":
                raise ConfigError("dt", f"must be a positive number or 'auto', got {self.dt!r}")
        elif not (isinstance(self.dt, (int, float)) and math.isfinite(self.dt) and self.dt > 0):
            raise ConfigError("dt", f"must be a positive number or 'auto', got {self.dt!r}")
        if not (math.isfinite(self.t_max) and self.t_max >= 0):
            raise ConfigError("t_max", f"must be a non-negative number, got {self.t_max!r}")
        if not -1.0 <= self.a <= 1.0:
            raise ConfigError("a", f"must lie in [-1, 1], got {self.a!r}")
        if self.scheme not in ("euler", "rk4"):
            raise ConfigError("scheme", f"must be 'euler' or 'rk4', got {self.scheme!r}")
        if not self.stop_tau_tol >= 0:
            raise ConfigError("stop_tau_tol", "must be non-negative")
        if not self.blowup_threshold > 0:
            raise ConfigError("blowup_threshold", "must be positive")
        if int(self.report_every) != self.report_every or self.report_every < 1:
            raise ConfigError("report_every", "must be a positive integer")
        if not 0 < self.c_cfl <= 0.25:
            raise ConfigError("c_cfl", "must lie in (0, 0.25]")
        if self.order not in (2, 4):
            raise ConfigError("order", "must be 2 or 4")
        return self


def grid_scale(f):
    """``Delta``: the smallest grid spacing measured in the source metric."""
    src = source_data(f.source, f.grid)
    if "grid_scale" not in src:
        lam = np.linalg.eigvalsh(src["g"]).min()
        src["grid_scale"] = min(f.grid.spacing) * math.sqrt(lam)
    return src["grid_scale"]


def tf_norm_sq(f, Tf):
    src = source_data(f.source, f.grid)
    return _tf_inner(Tf, Tf, src["ginv"], f.target.metric(f.values))


def auto_dt(f, cfg, Tf=None, sup_sq=None):
    """``c_cfl Delta^2 / (1 + sup|Tf|^2)``, capped at ``0.25 Delta^2``."""
    d2 = grid_scale(f) ** 2
    if sup_sq is None:
        if Tf is None:
            Tf = tension(f, order=cfg.order, with_norms=False).Tf
        sup_sq = float(np.max(tf_norm_sq(f, Tf)))
    return min(cfg.c_cfl * d2 / (1.0 + sup_sq), 0.25 * d2)


def _velocity(f, a, order):
    tf = tension(f, order=order, with_norms=False)
    return tf.tau + a * tf.A, tf


def _checked(f, values):
    bad = ~np.all(np.isfinite(values), axis=-1)
    if np.any(bad):
        node = tuple(int(i) for i in np.argwhere(bad)[0])
        raise IntegratorError("non-finite map value", node)
    return f.with_values(values)


def step(f, cfg, dt=None, velocity=None):
    """One explicit step.  ``dt`` defaults to the configured or auto value."""
    if dt is None:
        dt = auto_dt(f, cfg) if cfg.dt == "auto" else float(cfg.dt)
    if velocity is None:
        velocity, _ = _velocity(f, cfg.a, cfg.order)
    if cfg.scheme == "euler":
        return _checked(f, f.values + dt * velocity)
    k1 = velocity
    f2 = _checked(f, f.values + 0.5 * dt * k1)
    k2, _ = _velocity(f2, cfg.a, cfg.order)
    f3 = _checked(f, f.values + 0.5 * dt * k2)
    k3, _ = _velocity(f3, cfg.a, cfg.order)
    f4 = _checked(f, f.values + dt * k3)
    k4, _ = _velocity(f4, cfg.a, cfg.order)
    return _checked(f, f.values + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


@dataclass
class FlowTrace:
    """Append-only table of report rows (see ``TRACE_FIELDS``)."""

    rows: list = field(default_factory=list)

    def append(self, row):
        if self.rows and not row["t"] > self.rows[-1]["t"]:
            raise ValueError("trace times must increase strictly")
        self.rows.append(row)

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)

    def __len__(self):
        return len(self.rows)

    @property
    def blowup(self):
        return bool(self.rows) and bool(self.rows[-1]["blowup"])


@dataclass(frozen=True)
class Snapshot:
    t: float
    field: MapField
    sup_dTf: float
    argmax: tuple


@dataclass
class FlowResult:
    trace: FlowTrace
    field: MapField
    status: str
    snapshots: list
    error: Exception | None = None


def _report(f, t, cfg, tf, sq, blowup):
    rep = energy(f, a=cfg.a, order=cfg.order, Tf=tf.Tf)
    h = f.target.metric(f.values)
    tp = norm_sq(tf.tau_plus, tf.tau_plus, h)
    ta = norm_sq(tf.tau, tf.tau, h)
    idx = np.unravel_index(int(np.argmax(sq)), sq.shape)
    return {
        "t": float(t),
        "E": rep.E,
        "K": rep.K,
        "E_plus": rep.E_plus,
        "E_minus": rep.E_minus,
        "E_a": rep.E_a,
        "sup_dTf": float(math.sqrt(sq[idx])),
        "tau_norm": math.sqrt(max(_integrate(ta, f), 0.0)),
        "tau_plus_norm": math.sqrt(max(_integrate(tp, f), 0.0)),
        "tau_plus_sup": float(math.sqrt(np.max(tp))),
        "blowup": int(bool(blowup)),
        "argmax_i": int(idx[0]),
        "argmax_j": int(idx[1]),
    }


def _integrate(density, f):
    return integrate(density, f.source, f.grid)


def run(f0, cfg, keep_snapshots=True, callback=None):
    """Iterate :func:`step` until ``t_max``, ``stop_tau_tol`` or blow-up.

    Returns a :class:`FlowResult` with status ``converged``, ``t_max``,
    ``blowup`` or ``error``.  On an integrator error the partial trace is
    returned with the exception attached.  Snapshots are kept at the start
    and whenever ``sup|Tf|`` has doubled since the last one kept.
    """
    cfg.validate()
    trace = FlowTrace()
    snapshots = []
    f, t, n = f0, 0.0, 0
    status, err = "t_max", None
    while True:
        try:
            vel, tf = _velocity(f, cfg.a, cfg.order)
        except (IntegratorError, ValueError) as exc:
            status, err = "error", exc
            break
        sq = tf_norm_sq(f, tf.Tf)
        sup = float(math.sqrt(np.max(sq)))
        vel_sup = math.inf
        if cfg.stop_tau_tol > 0:
            vel_sup = float(math.sqrt(np.max(norm_sq(vel, vel, f.target.metric(f.values)))))
        blow = sup > cfg.blowup_threshold
        if keep_snapshots and (not snapshots or sup >= 2.0 * snapshots[-1].sup_dTf or blow):
            idx = np.unravel_index(int(np.argmax(sq)), sq.shape)
            snapshots.append(Snapshot(t, f, sup, (int(idx[0]), int(idx[1]))))
        done = blow or vel_sup < cfg.stop_tau_tol or t >= cfg.t_max or n >= cfg.max_steps
        if n % cfg.report_every == 0 or done:
            trace.append(_report(f, t, cfg, tf, sq, blow))
            if callback is not None:
                callback(t, f, trace.rows[-1])
        if blow:
            status = "blowup"
            break
        if vel_sup < cfg.stop_tau_tol:
            status = "converged"
            break
        if t >= cfg.t_max or n >= cfg.max_steps:
            break
        dt = auto_dt(f, cfg, sup_sq=sup * sup) if cfg.dt == "auto" else float(cfg.dt)
        dt = min(dt, cfg.t_max - t)
        try:
            f = step(f, cfg, dt=dt, velocity=vel)
        except (IntegratorError, ValueError) as exc:
            status, err = "error", exc
            break
        t_next = t + dt
        # land exactly on t_max rather than a rounding hair below it
        t = cfg.t_max if cfg.t_max - t_next < 1e-12 * max(1.0, cfg.t_max) else t_next
        n += 1
    return FlowResult(trace=trace, field=f, status=status, snapshots=snapshots, error=err)


@dataclass
class WindowField:
    """A rescaled map sampled on the square window ``[-L, L]^2``.

    ``x`` holds the window coordinates (shape ``(m, m, 2)``) and ``metric``
    the constant source metric at the centre, used to measure derivatives.
    """

    x: np.ndarray
    values: np.ndarray
    target: object
    metric: np.ndarray
    scale: float
    center: tuple
    t: float

    def derivative(self):
        h = self.x[1, 0, 0] - self.x[0, 0, 0]
        d0 = np.gradient(self.values, h, axis=0, edge_order=2)
        d1 = np.gradient(self.values, h, axis=1, edge_order=2)
        return np.stack([d0, d1], axis=-1)

    def sup_gradient(self):
        Tu = self.derivative()
        ginv = np.linalg.inv(self.metric)
        sq = _tf_inner(Tu, Tu, np.broadcast_to(ginv, Tu.shape[:2] + (2, 2)), self.target.metric(self.values))
        return float(math.sqrt(np.max(sq)))


def _tiled(f):
    """Values on the 3 x 3 block of fundamental domains around the grid."""
    ns, nt = f.grid.shape
    rows = []
    for i in (-1, 0, 1):
        row = []
        for j in (-1, 0, 1):
            k = tuple(i * a + j * b for a, b in zip(f.twist.s, f.twist.theta))
            row.append(f.target.deck(f.values, k) if k else f.values)
        rows.append(np.concatenate(row, axis=1))
    return np.concatenate(rows, axis=0)


def rescale_diagnostic(trace, snapshots, window=2.0, size=41, order=3):
    """Parabolic rescalings ``x -> f(p + r x, t)`` around the snapshot maxima.

    ``r = 1 / sup|Tf|`` at each snapshot.  Source coordinates are used as
    normal coordinates, which is exact for the flat sources shipped here.
    Returns an empty list unless the trace is flagged as a blow-up.
    """
    if not trace.blowup:
        return []
    out = []
    for snap in snapshots:
        f = snap.field
        ns, nt = f.grid.shape
        hs, ht = f.grid.spacing
        r = 1.0 / snap.sup_dTf
        L = float(window)
        half = 0.5 * min(f.source.periods)
        if r * L > half:
            warnings.warn(f"rescale window shrunk from {L} to {half / r} to fit the fundamental domain")
            L = half / r
        u = np.linspace(-L, L, size)
        x = np.stack(np.meshgrid(u, u, indexing="ij"), axis=-1)
        i0, j0 = snap.argmax
        # fractional indices into the 3 x 3 tiling (offset by one block)
        fi = ns + i0 + r * x[..., 0] / hs
        fj = nt + j0 + r * x[..., 1] / ht
        tiled = _tiled(f)
        vals = np.stack(
            [map_coordinates(tiled[..., c], [fi, fj], order=order, mode="nearest") for c in range(f.target.dim)],
            axis=-1,
        )
        center = f.grid.nodes()[i0, j0]
        g = f.source.geom.metric(center)
        out.append(WindowField(x, vals, f.target, g, r, (i0, j0), snap.t))
    return out


@dataclass
class MonitorVerdict:
    rate: float
    intercept: float
    residual: float
    anomaly: bool


def energy_bound_monitor(trace, band=0.05, column="E"):
    """Fit ``log E(t)`` by a line; the slope is the empirical growth rate.

    ``anomaly`` is raised when the RMS residual exceeds ``band`` and the
    residual curvature is upward (faster than exponential growth).
    """
    t = trace.column("t") if isinstance(trace, FlowTrace) else np.asarray(trace[0], dtype=float)
    E = trace.column(column) if isinstance(trace, FlowTrace) else np.asarray(trace[1], dtype=float)
    if len(t) < 2:
        return MonitorVerdict(0.0, float(np.log(E[0])) if len(E) else float("nan"), 0.0, False)
    y = np.log(np.maximum(E, np.finfo(float).tiny))
    slope, icpt = np.polyfit(t, y, 1)
    res = y - (slope * t + icpt)
    rms = float(np.sqrt(np.mean(res ** 2)))
    curv = np.polyfit(t, y, 2)[0] if len(t) >= 3 else 0.0
    return MonitorVerdict(float(slope), float(icpt), rms, bool(rms > band and curv > 0))


class DbarHeatFlow(BaseEstimator):
    """Estimator front end for :func:`run`.

    ``fit(f0)`` integrates from the initial map; ``transform(f0)`` returns
    the final map of a fresh run.  Fitted attributes: ``trace_``, ``map_``,
    ``status_``, ``snapshots_``.
    """

    def __init__(
        self,
        dt="auto",
        t_max=1.0,
        a=1.0,
        scheme="euler",
        stop_tau_tol=0.0,
        blowup_threshold=1e3,
        report_every=10,
        c_cfl=0.2,
        order=2,
    ):
        self.dt = dt
        self.t_max = t_max
        self.a = a
        self.scheme = scheme
        self.stop_tau_tol = stop_tau_tol
        self.blowup_threshold = blowup_threshold
        self.report_every = report_every
        self.c_cfl = c_cfl
        self.order = order

    def config(self):
        names = {f.name for f in fields(FlowConfig)}
        return FlowConfig(**{k: v for k, v in self.get_params().items() if k in names})

    def fit(self, f0, y=None):
        if not isinstance(f0, MapField):
            raise TypeError("fit expects a MapField")
        res = run(f0, self.config())
        self.trace_ = res.trace
        self.map_ = res.field
        self.status_ = res.status
        self.snapshots_ = res.snapshots
        self.error_ = res.error
        return self

    def transform(self, f0):
        return run(f0, self.config(), keep_snapshots=False).field

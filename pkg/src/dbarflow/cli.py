"""Command line entry point: ``dbarflow {flow,frames,verify,spectrum,basin}``.

Exit codes: 0 success, 2 configuration error, 3 numerical abort,
4 verification failure, 5 blow-up detected (flow only).
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys

import numpy as np

from . import __version__
from .config import load_config
from .discrete import read_field, write_field
from .flow import TRACE_FIELDS, FlowConfig, run
from .hopf import FrameState, family_map, frame_flow, gram_schmidt
from .models import ConfigError, FlatTorusModel, PunctureProximityError, hopf_torus_source, random_unitary
from .rng import SplitMix64
from .spectrum import EigensolverError, SphereSpectrum
from .verify import identity_map, make_target, run_suites

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY, EXIT_BLOWUP = 0, 2, 3, 4, 5


def provenance(cfg):
    lines = [f"dbarflow {__version__}", f"command = {cfg.command}", f"seed = {cfg.seed}"]
    return lines + cfg.echo()


def write_csv(path, header, columns, rows):
    """CSV with ``# ``-prefixed provenance lines; floats are written with ``repr``."""
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


class _Out:
    def __init__(self, quiet):
        self.quiet = quiet

    def __call__(self, msg):
        if not self.quiet:
            print(msg)


# -- model assembly ------------------------------------------------------------


def _target(cfg):
    m = cfg["model"]
    return make_target(m["target"], alpha=m["alpha"], radius=m["radius"], lattice=m["lattice"], dim=m["dim"])


def _source(cfg, target):
    m = cfg["model"]
    if m["source"] == "hopf_torus":
        return hopf_torus_source(m["alpha"])
    torus = target if isinstance(target, FlatTorusModel) else FlatTorusModel(np.reshape(m["lattice"], (2, 2)))
    return torus.as_source()


def initial_field(cfg):
    ini = cfg["initial"]
    target = _target(cfg)
    source = _source(cfg, target)
    shape = (cfg["grid"]["n_s"], cfg["grid"]["n_theta"])
    kind = ini["kind"]
    if kind in ("frame", "random_frame"):
        if not hasattr(target, "alpha") or cfg["model"]["source"] != "hopf_torus":
            raise ConfigError("kind", "frame initial data needs source = hopf_torus and a Hopf target")
        if kind == "frame":
            u, v = np.array(ini["u"]), np.array(ini["v"])
            nu, nv = np.linalg.norm(u), np.linalg.norm(v)
            if nu == 0 or nv == 0 or abs(u @ v) > 1e-12 * nu * nv:
                raise ConfigError("u", "initial frame vectors must be nonzero and orthogonal")
            u, v = u / nu, v / nv
        else:
            raw = np.asarray(SplitMix64(cfg.seed).normal(size=(2, 4)))
            u, v = gram_schmidt(raw[0], raw[1])
        return family_map(FrameState(u, v, target.alpha), shape, source=source, target=target)
    if kind == "identity":
        if not isinstance(target, FlatTorusModel):
            raise ConfigError("kind", "identity initial data needs target = flat_torus")
        if shape[0] != shape[1]:
            raise ConfigError("n_theta", "identity initial data needs a square grid")
        return identity_map(target, shape[0], source=source)
    try:
        f, _ = read_field(ini["path"], source, target)
    except OSError as exc:
        raise ConfigError("path", f"cannot read {ini['path']}: {exc.strerror}") from None
    except (KeyError, ValueError) as exc:
        raise ConfigError("path", f"malformed field dump: {exc}") from None
    return f


# -- commands --------------------------------------------------------------------


def cmd_flow(cfg, outdir, say):
    fl = cfg["flow"]
    fc = FlowConfig(
        dt=fl["dt"],
        t_max=fl["t_max"],
        a=fl["a"],
        scheme=fl["scheme"],
        stop_tau_tol=fl["stop_tau_tol"],
        blowup_threshold=fl["blowup_threshold"],
        report_every=fl["report_every"],
        c_cfl=fl["c_cfl"],
        order=fl["order"],
    )
    try:
        f0 = initial_field(cfg)
    except PunctureProximityError as exc:
        say(f"error: {exc}")
        return EXIT_NUMERIC
    res = run(f0, fc, keep_snapshots=fl["snapshots"])
    head = provenance(cfg) + [f"status = {res.status}"]
    rows = [[r[c] for c in TRACE_FIELDS] for r in res.trace.rows]
    write_csv(os.path.join(outdir, "trace.csv"), head, TRACE_FIELDS, rows)
    with open(os.path.join(outdir, "final_field.csv"), "w", newline="\n") as fh:
        for line in head:
            fh.write(f"# provenance: {line}\n")
        write_field(res.field, fh)
    if res.status == "blowup" and fl["snapshots"]:
        for k, snap in enumerate(res.snapshots):
            with open(os.path.join(outdir, f"snapshot_{k:03d}.csv"), "w", newline="\n") as fh:
                write_field(snap.field, fh, extra={"t": repr(snap.t), "sup_dTf": repr(snap.sup_dTf)})
    last = res.trace.rows[-1] if res.trace.rows else None
    if last is not None:
        say(
            f"status={res.status} t={last['t']!r} E_plus={last['E_plus']!r} "
            f"tau_plus_L2={last['tau_plus_norm']!r} tau_plus_sup={last['tau_plus_sup']!r}"
        )
    if res.status == "error":
        say(f"error: {res.error}")
        return EXIT_NUMERIC
    if res.status == "blowup":
        return EXIT_BLOWUP
    return EXIT_OK


TRAJ_COLUMNS = ("t", "u1", "u2", "u3", "u4", "v1", "v2", "v3", "v4", "c", "E_plus")


def cmd_frames(cfg, outdir, say):
    fr = cfg["frames"]
    alpha = cfg["model"]["alpha"]
    if fr["u"] and fr["v"]:
        u, v = gram_schmidt(np.array(fr["u"]), np.array(fr["v"]))
    else:
        raw = np.asarray(SplitMix64(cfg.seed).normal(size=(2, 4)))
        u, v = gram_schmidt(raw[0], raw[1])
    traj = frame_flow(u, v, fr["dt"], fr["t_max"], alpha=alpha, tol=fr["tol"], record_every=fr["record_every"])
    rows = [
        [traj.t[k], *traj.u[k], *traj.v[k], traj.c[k], traj.E_plus[k]] for k in range(len(traj.t))
    ]
    label = str(np.asarray(traj.classification).item())
    head = provenance(cfg) + [f"classification = {label}"]
    write_csv(os.path.join(outdir, "trajectory.csv"), head, TRAJ_COLUMNS, rows)
    say(f"c0={float(traj.c[0])!r} c_final={float(traj.c[-1])!r} classification={label}")
    return EXIT_OK


def _basin_frames(cfg):
    b = cfg["basin"]
    rng = SplitMix64(cfg.seed)
    e = np.eye(4)
    out = []
    for _ in range(b["count"]):
        if b["init"] == "random":
            raw = np.asarray(rng.normal(size=(2, 4)))
            u, v = gram_schmidt(raw[0], raw[1])
        else:
            U = random_unitary(rng)
            sign = 1.0 if b["init"] == "holomorphic" else -1.0
            u, v = U @ e[0], sign * (U @ e[1])
        out.append((u, v))
    return np.array([p[0] for p in out]), np.array([p[1] for p in out])


BASIN_COLUMNS = ("index", "c0", "classification", "convergence_time", "c_final")


def cmd_basin(cfg, outdir, say):
    b = cfg["basin"]
    U, V = _basin_frames(cfg)
    traj = frame_flow(U, V, b["dt"], b["t_max"], alpha=cfg["model"]["alpha"], tol=b["tol"], record_every=1)
    rows = []
    for k in range(len(U)):
        ct = traj.convergence_time[k]
        rows.append([k, traj.c[0, k], traj.classification[k], ct if math.isfinite(ct) else "nan", traj.c[-1, k]])
    write_csv(os.path.join(outdir, "basin.csv"), provenance(cfg), BASIN_COLUMNS, rows)
    counts = {c: int(np.sum(traj.classification == c)) for c in ("holomorphic", "anti-holomorphic", "non-converged")}
    say(" ".join(f"{k}={v}" for k, v in counts.items()))
    return EXIT_OK


SPECTRUM_COLUMNS = ("radius", "n", "eigenvalue", "eigenvalue_times_r2", "iterations", "residual", "within_tolerance")


def cmd_spectrum(cfg, outdir, say):
    s = cfg["spectrum"]
    rows = []
    ok = True
    for r in s["radius"]:
        finest = max(s["n"])
        for n in s["n"]:
            est = SphereSpectrum(radius=r, n=n, overlap=s["overlap"]).fit()
            lam = est.eigenvalue_
            good = abs(lam * r * r - 2.0) <= 2.0 * s["tolerance"]
            if n == finest:
                ok = ok and good
            rows.append([r, n, lam, lam * r * r, est.n_iter_, est.residual_, int(good)])
            say(f"radius={r!r} n={n} lambda1={lam!r} lambda1*r^2={lam * r * r!r}")
    write_csv(os.path.join(outdir, "spectrum.csv"), provenance(cfg), SPECTRUM_COLUMNS, rows)
    return EXIT_OK if ok else EXIT_VERIFY


VERIFY_COLUMNS = ("suite", "check", "target", "value", "tolerance", "passed")


def cmd_verify(cfg, outdir, say):
    ve, m = cfg["verify"], cfg["model"]
    rows = run_suites(
        ve["suites"],
        ve["targets"],
        seed=cfg.seed,
        n=ve["n"],
        points=ve["points"],
        alpha=m["alpha"],
        radius=m["radius"],
        lattice=m["lattice"],
    )
    table = [[r.suite, r.name, r.target, r.value, r.tolerance, "PASS" if r.passed else "FAIL"] for r in rows]
    write_csv(os.path.join(outdir, "verify.csv"), provenance(cfg), VERIFY_COLUMNS, table)
    for r in rows:
        mark = "PASS" if r.passed else "FAIL"
        say(f"{mark}  {r.suite:<13} {r.name:<34} {r.target:<14} {r.value:.3e} <= {r.tolerance:.0e}")
    failed = [r for r in rows if not r.passed]
    suites_failed = sorted({r.suite for r in failed})
    summary = f"{len(rows) - len(failed)}/{len(rows)} checks passed"
    if failed:
        summary += f"; failing suites: {', '.join(suites_failed)}"
    say(summary)
    return EXIT_VERIFY if failed else EXIT_OK


COMMANDS = {"flow": cmd_flow, "frames": cmd_frames, "basin": cmd_basin, "spectrum": cmd_spectrum, "verify": cmd_verify}


def build_parser():
    p = argparse.ArgumentParser(prog="dbarflow", description=__doc__.splitlines()[0])
    p.add_argument("command", nargs="?", choices=sorted(COMMANDS), help="overrides [run] command")
    p.add_argument("--config", required=True, help="INI configuration file")
    p.add_argument("--output", default="./out", help="output directory (default ./out)")
    p.add_argument("--seed", type=int, default=None, help="overrides [run] seed")
    p.add_argument("--quiet", action="store_true", help="suppress the summary output")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    say = _Out(args.quiet)
    try:
        cfg = load_config(args.config, seed=args.seed, command=args.command)
        os.makedirs(args.output, exist_ok=True)
        return COMMANDS[cfg.command](cfg, args.output, say)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EigensolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

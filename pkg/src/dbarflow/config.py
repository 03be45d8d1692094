"""INI-style run configuration with a closed schema.

Sections and keys are fixed; anything unknown is rejected with a
:class:`~dbarflow.models.ConfigError` naming the offending key.  Lists are
whitespace separated.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

from .models import ConfigError

COMMANDS = ("flow", "frames", "verify", "spectrum", "basin")


def _str(x):
    return x.strip()


def _float(x):
    return float(x)


def _int(x):
    v = float(x)
    if v != int(v):
        raise ValueError(x)
    return int(v)


def _floats(x):
    return tuple(float(t) for t in x.split())


def _ints(x):
    return tuple(_int(t) for t in x.split())


def _words(x):
    return tuple(x.split())


def _dt(x):
    x = x.strip()
    return "auto" if x == "auto" else float(x)


def _bool(x):
    v = x.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(x)


# section -> key -> (parser, default)
SCHEMA = {
    "run": {"command": (_str, None), "seed": (_int, 0)},
    "model": {
        "source": (_str, "hopf_torus"),
        "target": (_str, "hopf_surface"),
        "alpha": (_float, 2.0),
        "radius": (_float, 1.0),
        "lattice": (_floats, (1.0, 0.0, 0.0, 1.0)),
        "dim": (_int, 4),
    },
    "grid": {"n_s": (_int, 64), "n_theta": (_int, 64)},
    "initial": {
        "kind": (_str, "frame"),
        "u": (_floats, (1.0, 0.0, 0.0, 0.0)),
        "v": (_floats, (0.0, 1.0, 0.0, 0.0)),
        "path": (_str, ""),
    },
    "flow": {
        "dt": (_dt, "auto"),
        "t_max": (_float, 1.0),
        "a": (_float, 1.0),
        "scheme": (_str, "euler"),
        "stop_tau_tol": (_float, 0.0),
        "blowup_threshold": (_float, 1e3),
        "report_every": (_int, 10),
        "c_cfl": (_float, 0.2),
        "order": (_int, 2),
        "snapshots": (_bool, True),
    },
    "frames": {
        "u": (_floats, ()),
        "v": (_floats, ()),
        "dt": (_float, 0.01),
        "t_max": (_float, 50.0),
        "tol": (_float, 1e-6),
        "record_every": (_int, 10),
    },
    "basin": {
        "count": (_int, 100),
        "init": (_str, "random"),
        "dt": (_float, 0.01),
        "t_max": (_float, 50.0),
        "tol": (_float, 1e-6),
    },
    "spectrum": {
        "radius": (_floats, (1.0,)),
        "n": (_ints, (33, 65, 129)),
        "overlap": (_float, 1.25),
        "tolerance": (_float, 0.02),
    },
    "verify": {
        "suites": (_words, ("geom_core", "functionals", "discrete_map")),
        "targets": (_words, ("hopf_surface", "round_sphere", "flat_torus", "euclidean")),
        "n": (_int, 32),
        "points": (_int, 16),
    },
}


@dataclass
class RunConfig:
    """Resolved configuration: ``values[section][key]`` with defaults filled in."""

    values: dict
    given: set = field(default_factory=set)

    def __getitem__(self, section):
        return self.values[section]

    @property
    def command(self):
        return self.values["run"]["command"]

    @property
    def seed(self):
        return self.values["run"]["seed"]

    def echo(self):
        """Provenance lines ``[section] key = value`` in schema order."""
        lines = []
        for sec, keys in SCHEMA.items():
            for key in keys:
                val = self.values[sec][key]
                if isinstance(val, tuple):
                    val = " ".join(repr(v) if isinstance(v, float) else str(v) for v in val)
                elif isinstance(val, float):
                    val = repr(val)
                lines.append(f"[{sec}] {key} = {val}")
        return lines


def parse_config(text, seed=None, command=None):
    """Parse config text.

    ``seed`` overrides ``[run] seed``; ``command`` fills in ``[run] command``
    and must agree with it when both are given.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", f"malformed file: {exc}") from None
    values = {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}
    given = set()
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(sec, f"unknown section [{sec}]")
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(key, f"unknown key {key!r} in section [{sec}]")
            parser = SCHEMA[sec][key][0]
            try:
                values[sec][key] = parser(raw)
            except (TypeError, ValueError):
                raise ConfigError(key, f"cannot parse {raw!r} in section [{sec}]") from None
            given.add((sec, key))
    if seed is not None:
        values["run"]["seed"] = int(seed)
    if command is not None:
        if ("run", "command") in given and values["run"]["command"] != command:
            raise ConfigError("command", f"config says {values['run']['command']!r} but {command!r} was requested")
        values["run"]["command"] = command
    cfg = RunConfig(values, given)
    validate(cfg)
    return cfg


def load_config(path, seed=None, command=None):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, seed=seed, command=command)


def _positive(value, key):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ConfigError(key, f"must be positive, got {value!r}")


def validate(cfg):
    """Check every referenced field before any computation starts."""
    v = cfg.values
    if v["run"]["command"] not in COMMANDS:
        raise ConfigError("command", f"must be one of {', '.join(COMMANDS)}, got {v['run']['command']!r}")
    if v["run"]["seed"] < 0:
        raise ConfigError("seed", "must be non-negative")
    m = v["model"]
    if not (math.isfinite(m["alpha"]) and m["alpha"] > 1.0):
        raise ConfigError("alpha", f"must be a finite real > 1, got {m['alpha']!r}")
    _positive(m["radius"], "radius")
    if len(m["lattice"]) != 4:
        raise ConfigError("lattice", "needs four numbers p1x p1y p2x p2y")
    if m["target"] not in ("hopf_surface", "hopf_signflip", "round_sphere", "flat_torus", "euclidean"):
        raise ConfigError("target", f"unknown target {m['target']!r}")
    if m["source"] not in ("hopf_torus", "flat_torus"):
        raise ConfigError("source", f"unknown source {m['source']!r}")
    for key in ("n_s", "n_theta"):
        if v["grid"][key] < 8:
            raise ConfigError(key, "grid needs at least 8 nodes per direction")
    ini = v["initial"]
    if ini["kind"] not in ("frame", "identity", "field", "random_frame"):
        raise ConfigError("kind", f"unknown initial kind {ini['kind']!r}")
    for key in ("u", "v"):
        if len(ini[key]) != 4:
            raise ConfigError(key, "frame vectors need four components")
    if ini["kind"] == "field" and not ini["path"]:
        raise ConfigError("path", "required when kind = field")
    fl = v["flow"]
    if fl["dt"] != "auto":
        _positive(fl["dt"], "dt")
    if not fl["t_max"] >= 0:
        raise ConfigError("t_max", "must be non-negative")
    if not -1.0 <= fl["a"] <= 1.0:
        raise ConfigError("a", "must lie in [-1, 1]")
    if fl["scheme"] not in ("euler", "rk4"):
        raise ConfigError("scheme", "must be euler or rk4")
    if fl["stop_tau_tol"] < 0:
        raise ConfigError("stop_tau_tol", "must be non-negative")
    _positive(fl["blowup_threshold"], "blowup_threshold")
    if fl["report_every"] < 1:
        raise ConfigError("report_every", "must be a positive integer")
    if not 0 < fl["c_cfl"] <= 0.25:
        raise ConfigError("c_cfl", "must lie in (0, 0.25]")
    if fl["order"] not in (2, 4):
        raise ConfigError("order", "must be 2 or 4")
    fr = v["frames"]
    for key in ("u", "v"):
        if len(fr[key]) not in (0, 4):
            raise ConfigError(key, "frame vectors need four components")
    for key in ("dt", "t_max", "tol"):
        _positive(fr[key], key)
    if fr["record_every"] < 1:
        raise ConfigError("record_every", "must be a positive integer")
    b = v["basin"]
    if b["count"] < 1:
        raise ConfigError("count", "must be at least 1")
    if b["init"] not in ("random", "holomorphic", "antiholomorphic"):
        raise ConfigError("init", f"unknown basin init {b['init']!r}")
    for key in ("dt", "t_max", "tol"):
        _positive(b[key], key)
    s = v["spectrum"]
    if not s["radius"] or not s["n"]:
        raise ConfigError("n", "need at least one radius and one resolution")
    for r in s["radius"]:
        _positive(r, "radius")
    if any(n < 9 for n in s["n"]):
        raise ConfigError("n", "resolutions must be at least 9")
    if not 1.0 < s["overlap"] < 2.0:
        raise ConfigError("overlap", "must lie in (1, 2)")
    _positive(s["tolerance"], "tolerance")
    ve = v["verify"]
    for suite in ve["suites"]:
        if suite not in ("geom_core", "functionals", "discrete_map"):
            raise ConfigError("suites", f"unknown suite {suite!r}")
    for t in ve["targets"]:
        if t not in ("hopf_surface", "hopf_signflip", "round_sphere", "flat_torus", "euclidean"):
            raise ConfigError("targets", f"unknown target {t!r}")
    if ve["n"] < 8:
        raise ConfigError("n", "verify grid needs at least 8 nodes")
    if ve["points"] < 1:
        raise ConfigError("points", "must be at least 1")
    return cfg

import csv
from pathlib import Path

import pytest

from dbarflow.cli import main
from dbarflow.config import parse_config
from dbarflow.models import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _rows(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _header(path):
    with open(path) as fh:
        return [ln for ln in fh if ln.startswith("#")]


def test_unknown_key_names_the_key(tmp_path, capsys):
    cfg = _write(tmp_path, "[run]\ncommand = frames\n[frames]\nstep_size = 0.1\n")
    assert main(["--config", cfg, "--output", str(tmp_path / "o")]) == 2
    assert "step_size" in capsys.readouterr().err


def test_unknown_section(tmp_path, capsys):
    cfg = _write(tmp_path, "[run]\ncommand = frames\n[solver]\nx = 1\n")
    assert main(["--config", cfg, "--output", str(tmp_path / "o")]) == 2
    assert "solver" in capsys.readouterr().err


def test_bad_alpha_rejected_before_work(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["--config", str(CONFIGS / "bad_alpha.ini"), "--output", str(out)]) == 2
    assert "alpha" in capsys.readouterr().err
    assert not out.exists()


def test_missing_config_file(tmp_path):
    assert main(["--config", str(tmp_path / "nope.ini"), "--output", str(tmp_path)]) == 2


def test_command_mismatch():
    with pytest.raises(ConfigError, match="command"):
        parse_config("[run]\ncommand = flow\n", command="basin")


def test_frames_deterministic_with_provenance(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["--config", str(CONFIGS / "frames.ini"), "--output", str(out), "--quiet"]) == 0
    ta, tb = (a / "trajectory.csv").read_bytes(), (b / "trajectory.csv").read_bytes()
    assert ta == tb
    head = _header(a / "trajectory.csv")
    assert any("seed = 0" in h for h in head)
    assert any("[frames] dt = 0.01" in h for h in head)
    rows = _rows(a / "trajectory.csv")
    assert float(rows[-1]["c"]) == pytest.approx(1.0, abs=1e-6)


def test_seed_override_changes_random_frames(tmp_path):
    cfg = _write(tmp_path, "[run]\ncommand = frames\n[frames]\nt_max = 0.1\n")
    main(["--config", cfg, "--output", str(tmp_path / "s1"), "--seed", "1", "--quiet"])
    main(["--config", cfg, "--output", str(tmp_path / "s2"), "--seed", "2", "--quiet"])
    r1 = _rows(tmp_path / "s1" / "trajectory.csv")
    r2 = _rows(tmp_path / "s2" / "trajectory.csv")
    assert r1[0]["u1"] != r2[0]["u1"]


def test_flow_identity_converges(tmp_path):
    out = tmp_path / "o"
    assert main(["--config", str(CONFIGS / "flow_identity.ini"), "--output", str(out), "--quiet"]) == 0
    rows = _rows(out / "trace.csv")
    assert any("status = converged" in h for h in _header(out / "trace.csv"))
    assert abs(float(rows[-1]["E_plus"])) < 1e-12
    assert (out / "final_field.csv").exists()


def test_flow_blowup_exit_code_and_snapshots(tmp_path):
    text = (CONFIGS / "flow_identity.ini").read_text().replace("stop_tau_tol = 1e-8", "blowup_threshold = 0.5")
    out = tmp_path / "o"
    assert main(["--config", _write(tmp_path, text), "--output", str(out), "--quiet"]) == 5
    assert list(out.glob("snapshot_*.csv"))
    assert _rows(out / "trace.csv")[-1]["blowup"] == "1"


def test_flow_restart_from_field(tmp_path):
    text = "[run]\ncommand = flow\n[model]\nalpha = 3.0\n[grid]\nn_s = 16\nn_theta = 16\n"
    text += "[initial]\nkind = random_frame\n[flow]\nt_max = 0.001\nreport_every = 1\n"
    out = tmp_path / "first"
    assert main(["--config", _write(tmp_path, text), "--output", str(out), "--quiet"]) == 0
    second = text.replace("kind = random_frame", f"kind = field\npath = {out / 'final_field.csv'}")
    out2 = tmp_path / "second"
    assert main(["--config", _write(tmp_path, second, "b.ini"), "--output", str(out2), "--quiet"]) == 0
    e_end = float(_rows(out / "trace.csv")[-1]["E_plus"])
    e_start = float(_rows(out2 / "trace.csv")[0]["E_plus"])
    assert e_start == e_end


def test_flow_missing_field_file(tmp_path):
    text = "[run]\ncommand = flow\n[initial]\nkind = field\npath = /no/such/file.csv\n"
    assert main(["--config", _write(tmp_path, text), "--output", str(tmp_path / "o")]) == 2


def test_basin_holomorphic_init_converges_at_once(tmp_path):
    text = "[run]\ncommand = basin\n[basin]\ncount = 4\ninit = holomorphic\nt_max = 0.1\n"
    out = tmp_path / "o"
    assert main(["--config", _write(tmp_path, text), "--output", str(out), "--quiet"]) == 0
    rows = _rows(out / "basin.csv")
    assert [r["classification"] for r in rows] == ["holomorphic"] * 4
    assert all(float(r["convergence_time"]) == 0.0 for r in rows)


def test_basin_antiholomorphic_init(tmp_path):
    text = "[run]\ncommand = basin\n[basin]\ncount = 3\ninit = antiholomorphic\nt_max = 0.1\n"
    out = tmp_path / "o"
    assert main(["--config", _write(tmp_path, text), "--output", str(out), "--quiet"]) == 0
    assert {r["classification"] for r in _rows(out / "basin.csv")} == {"anti-holomorphic"}


@pytest.mark.parametrize("seed", range(5))
def test_verify_passes_on_shipped_models(tmp_path, seed):
    out = tmp_path / "o"
    code = main(["--config", str(CONFIGS / "verify.ini"), "--output", str(out), "--seed", str(seed), "--quiet"])
    rows = _rows(out / "verify.csv")
    failed = [r for r in rows if r["passed"] != "PASS"]
    assert code == 0, failed
    assert {r["suite"] for r in rows} == {"geom_core", "functionals", "discrete_map"}


def test_verify_signflip_fails(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["--config", str(CONFIGS / "verify_signflip.ini"), "--output", str(out)]) == 4
    failed = {r["check"] for r in _rows(out / "verify.csv") if r["passed"] == "FAIL"}
    assert {"J_squared_is_minus_one", "decomposition_type_plus"} <= failed
    assert "failing suites" in capsys.readouterr().out


def test_spectrum_command(tmp_path):
    text = "[run]\ncommand = spectrum\n[spectrum]\nradius = 1.0 2.0\nn = 33\n"
    out = tmp_path / "o"
    assert main(["--config", _write(tmp_path, text), "--output", str(out), "--quiet"]) == 0
    rows = _rows(out / "spectrum.csv")
    assert len(rows) == 2
    for r in rows:
        assert float(r["eigenvalue_times_r2"]) == pytest.approx(2.0, rel=0.02)
    strict = text + "tolerance = 1e-4\n"
    assert main(["--config", _write(tmp_path, strict, "s.ini"), "--output", str(out), "--quiet"]) == 4

import shutil
import subprocess
import sys

import numpy as np
import pytest

from helpers import SCENARIOS
from robust_cbf.cli import EXIT_ERROR, EXIT_INFEASIBLE, EXIT_OK, main
from robust_cbf.config import dumps, load_config, parse_config
from robust_cbf.errors import ConfigError
from robust_cbf.output import CSV_HEADER, csv_columns, read_csv

LINEAR = SCENARIOS / "linear_disk.cfg"


@pytest.fixture
def stubs(monkeypatch):
    monkeypatch.syspath_prepend(str(SCENARIOS.parent / "tests"))


def _write(tmp_path, text, name="s.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _cfg_with(tmp_path, **override):
    text = LINEAR.read_text()
    for key, value in override.items():
        key = key.replace("__", ".")
        lines = [ln for ln in text.splitlines() if not ln.startswith(key + " ")]
        text = "\n".join(lines) + f"\n{key} = {value}\n"
    return _write(tmp_path, text)


# -- config parsing


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.cfg")), ids=lambda p: p.name)
def test_shipped_configs_round_trip(path):
    cfg = load_config(path)
    again = parse_config(dumps(cfg))
    assert again == cfg
    assert dumps(again) == dumps(cfg)


def test_parse_values_and_comments():
    cfg = parse_config(
        "# c\nmodel.name = linear  # trailing\nstate.xA = 1, 2\ncoeffs.C = 1 2; 3 4\nsolver.slack_mode = yes\n"
    )
    assert cfg.get("model.name") == "linear"
    np.testing.assert_array_equal(cfg.get("state.xA"), [1.0, 2.0])
    np.testing.assert_array_equal(cfg.get("coeffs.C"), [[1.0, 2.0], [3.0, 4.0]])
    assert cfg.get("solver.slack_mode") is True


@pytest.mark.parametrize(
    "text, line, fragment",
    [
        ("model.name = linear\ngains.alpha_gain = 2\n", 2, "alpha_gain"),
        ("model.name = linear\nmodel.name = drift\n", 2, "duplicate"),
        ("gains.alpha 2\n", 1, "expected"),
        ("\n\nsim.dt = fast\n", 3, "sim.dt"),
        ("alpha = 2\n", 1, "malformed"),
        ("coeffs.C = 1 2; 3\n", 1, "equal length"),
    ],
)
def test_parse_errors_are_line_anchored(text, line, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line
    assert f"line {line}" in str(info.value) and fragment in str(info.value)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/x.cfg")


# -- exit codes


def test_solve_interval(capsys):
    assert main(["solve", "--config", str(SCENARIOS / "interval_golden.cfg")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "u = -2.000000" in out and "status = Optimal" in out and "robust_margin" in out


def test_solve_eta_zero_prints_nominal(capsys):
    assert main(["solve", "--config", str(LINEAR)]) == EXIT_OK
    out = capsys.readouterr().out
    u = [ln for ln in out.splitlines() if ln.startswith("u = ")][0].split("=")[1]
    nom = [ln for ln in out.splitlines() if ln.startswith("nominal_qp_u")][0].split("=")[1]
    np.testing.assert_allclose(np.fromstring(u, sep=" "), np.fromstring(nom, sep=" "), atol=2e-6)


def test_solve_infeasible_exit_2(tmp_path, capsys):
    p = _write(tmp_path, "coeffs.C = 1\ncoeffs.g = -1\nestimate.theta_hat = 0\nestimate.eta = 1\n")
    assert main(["solve", "--config", str(p)]) == EXIT_INFEASIBLE
    assert "Infeasible" in capsys.readouterr().out


def test_unknown_key_exit_1(tmp_path, capsys):
    p = _cfg_with(tmp_path, gains__alpha_gain="3")
    for cmd in ("solve", "simulate", "check-derivs"):
        assert main([cmd, "--config", str(p)]) == EXIT_ERROR
        assert "alpha_gain" in capsys.readouterr().err


def test_missing_config_exit_1(capsys):
    assert main(["solve"]) == EXIT_ERROR
    assert "--config" in capsys.readouterr().err


def test_simulate_writes_csv_and_svg(tmp_path, capsys):
    out = tmp_path / "run.csv"
    assert main(["simulate", "--config", str(LINEAR), "--out", str(out), "--svg"]) == EXIT_OK
    cols, rows = read_csv(out)
    assert cols == csv_columns(2, 2, 1)
    assert len(rows) == 501
    assert min(float(r["h"]) for r in rows) >= 0.0
    assert out.read_text().splitlines()[0] == CSV_HEADER
    svg = (tmp_path / "run.svg").read_text()
    assert svg.startswith("<svg") and svg.count("<polyline") == 2
    assert "min h" in capsys.readouterr().out


def test_global_flags_before_subcommand(tmp_path):
    out = tmp_path / "a.csv"
    assert main(["--config", str(LINEAR), "--out", str(out), "simulate"]) == EXIT_OK
    assert out.exists()


def test_simulate_default_output_name(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["simulate", "--config", str(_cfg_with(tmp_path, sim__duration="0.05"))]) == EXIT_OK
    assert sorted(p.name for p in tmp_path.iterdir()) == ["s.cfg", "s.csv"]


def test_dry_run_writes_nothing(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    out = tmp_path / "x.csv"
    assert main(["simulate", "--dry-run", "--svg", "--config", str(LINEAR), "--out", str(out)]) == EXIT_OK
    assert list(tmp_path.iterdir()) == []


def test_zero_duration_single_row(tmp_path):
    out = tmp_path / "z.csv"
    assert main(["simulate", "--config", str(_cfg_with(tmp_path, sim__duration="0")), "--out", str(out)]) == EXIT_OK
    _, rows = read_csv(out)
    assert len(rows) == 1 and float(rows[0]["t"]) == 0.0


def test_setup_error_exit_2(tmp_path, capsys):
    p = _cfg_with(tmp_path, theta__true="3")
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o.csv")]) == EXIT_INFEASIBLE
    assert "outside" in capsys.readouterr().err
    assert not (tmp_path / "o.csv").exists()


def test_write_failure_exit_1(tmp_path):
    out = tmp_path / "missing_dir" / "o.csv"
    p = _cfg_with(tmp_path, sim__duration="0.02")
    assert main(["simulate", "--config", str(p), "--out", str(out)]) == EXIT_ERROR


def test_csv_missing_values_are_empty(tmp_path):
    out = tmp_path / "o.csv"
    assert main(["simulate", "--config", str(_cfg_with(tmp_path, sim__duration="0.02")), "--out", str(out)]) == EXIT_OK
    text = out.read_text()
    assert "nan" not in text.lower()
    _, rows = read_csv(out)
    assert all(r["status"] == "Optimal" for r in rows)


def test_verify_small(capsys):
    assert main(["verify", "--count", "5", "--seed", "7", "--p", "2", "--m", "2"]) == EXIT_OK
    first = capsys.readouterr().out
    assert "all pass" in first
    main(["verify", "--count", "5", "--seed", "7", "--p", "2", "--m", "2"])
    assert capsys.readouterr().out == first


def test_verify_golden_included(capsys):
    assert main(["verify", "--count", "1", "--seed", "3", "--p", "1", "--m", "1"]) == EXIT_OK


def test_verify_bad_counts():
    assert main(["verify", "--count", "0"]) == EXIT_ERROR


def test_check_derivs_shipped(capsys):
    for name in ("linear_disk.cfg", "attract_repel_ring.cfg"):
        assert main(["check-derivs", "--config", str(SCENARIOS / name)]) == EXIT_OK
    assert "0 failing" in capsys.readouterr().out


def test_check_derivs_custom_models(tmp_path, stubs, capsys):
    good = _write(tmp_path, "model.factory = stub_models:good\nmodel.n = 2\n", "g.cfg")
    assert main(["check-derivs", "--config", str(good)]) == EXIT_OK
    bad = _write(tmp_path, "model.factory = stub_models:corrupted\n", "b.cfg")
    assert main(["check-derivs", "--config", str(bad)]) == EXIT_ERROR
    out = capsys.readouterr().out
    assert "FAIL dG_dxR" in out
    assert "FAIL dG_dxA" not in out


def test_check_derivs_bad_factory(tmp_path, capsys):
    p = _write(tmp_path, "model.factory = no_such_module:make\n")
    assert main(["check-derivs", "--config", str(p)]) == EXIT_ERROR
    assert "line 1" in capsys.readouterr().err


def test_check_derivs_dimension_mismatch(tmp_path, capsys):
    p = _cfg_with(tmp_path, state__xA="1 0 0")
    assert main(["check-derivs", "--config", str(p)]) == EXIT_ERROR
    assert "state.xA" in capsys.readouterr().err


def test_console_script_entry_point(tmp_path):
    exe = shutil.which("robust-cbf")
    cmd = [exe] if exe else [sys.executable, "-m", "robust_cbf.cli"]
    def run(cfg):
        return subprocess.run(cmd + ["solve", "--config", str(cfg)], capture_output=True, text=True)

    r = run(SCENARIOS / "interval_golden.cfg")
    assert r.returncode == 0 and "u = -2.000000" in r.stdout
    r = run(_cfg_with(tmp_path, gains__alpha_gain="1"))
    assert r.returncode == 1 and "alpha_gain" in r.stderr

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from timearrow import cli, superposed
from timearrow.cli import main, parse_config_text, ConfigError


def _run(tmp_path, text, *extra, command="run", name="cfg.txt"):
    cfg = tmp_path / name
    cfg.write_text(text)
    out = tmp_path / "out"
    code = main([command, "--config", str(cfg), "--out", str(out), *extra])
    return code, out


def _csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_fig4_csv(tmp_path, capsys):
    code, out = _run(tmp_path, "scenario = spin_fig4\nomega = 1\nOmega = 1000\nphi = 3.141592653589793\n")
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["sharpened"] == "+"
    for stem, expected in (("plus", 0.6306), ("minus", 0.2265), ("mixture", 0.5)):
        with open(out / f"{stem}.csv") as fh:
            assert fh.readline().strip() == "W,total,forward_part,reverse_part,interference_part"
        rows = _csv(out / f"{stem}.csv")
        assert abs(sum(float(r["total"]) for r in rows) - 1) <= 1e-10
        zero = [r for r in rows if abs(float(r["W"])) < 1e-9][0]
        assert abs(float(zero["total"]) - expected) <= 1e-3
    diag = _csv(out / "diagnostics.csv")
    assert list(diag[0]) == ["xi", "n", "m", "norm0sq", "norm1sq", "bound", "dominance"]
    assert sorted(summary["files"]) == sorted(p.name for p in out.iterdir())


def test_json_format(tmp_path, capsys):
    code, out = _run(tmp_path, "scenario = spin_fig4\n", "--format", "json")
    assert code == 0
    recs = json.loads((out / "plus.json").read_text())
    assert set(recs[0]) == {"W", "total", "forward_part", "reverse_part", "interference_part"}
    assert abs(sum(r["total"] for r in recs) - 1) <= 1e-10


def test_crooks_check(tmp_path, capsys):
    code, out = _run(tmp_path, "scenario = crooks_check\nseed = 42\ndim = 2\nscenarios = 100\n")
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["scenarios"] == 100
    assert summary["max_crooks_residual"] <= 1e-9
    assert len(_csv(out / "crooks.csv")) == 100


def test_arrow_game_likelihood_table(tmp_path, capsys):
    code, out = _run(tmp_path, "scenario = arrow_game\nw_diss = 0, 0, 0\nshots = 20000\n")
    assert code == 0
    rows = _csv(out / "likelihood.csv")
    assert [float(r["likelihood"]) for r in rows] == [0.5, 0.5, 0.5]
    summary = json.loads(capsys.readouterr().out)
    assert abs(summary["z_score"]) <= 3


def test_fig5_and_battery(tmp_path, capsys):
    code, out = _run(tmp_path, "scenario = spin_fig5\n")
    assert code == 0
    rows = _csv(out / "fig5.csv")
    assert list(rows[0]) == ["hbar_omega", "P_plus", "P_minus", "sum", "p01"] and len(rows) == 50
    assert json.loads(capsys.readouterr().out)["limit_gap"] <= 1e-3
    code, out = _run(tmp_path, "scenario = battery_demo\nenv_variant = spin_flip\nOmega = 1\n")
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["monotone"] and summary["within_bound"]


@pytest.mark.parametrize("variant", ["identity", "swap", "zero"])
def test_generic(tmp_path, capsys, variant):
    code, _ = _run(tmp_path, f"scenario = generic\nenv_variant = {variant}\ndim = 3\n", "--steps", "256")
    assert code == 0
    assert json.loads(capsys.readouterr().out)["closed_form_gap"] <= 1e-12


def test_sample_frequencies(tmp_path, capsys):
    code, out = _run(tmp_path, "scenario = spin_fig4\n", "--shots", "100000", "--seed", "7", command="sample")
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    p = np.array(summary["probabilities"])
    f = np.array(summary["frequencies"])
    sigma = np.sqrt(p * (1 - p) / 100000)
    assert np.all(np.abs(f - p) <= 3 * sigma + 1e-12)
    rows = _csv(out / "samples.csv")
    assert len(rows) == 100000
    assert list(rows[0]) == list(cli.SAMPLE_COLUMNS)


def test_sample_single_shot_and_determinism(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("scenario = generic\nseed = 3\n")
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert main(["sample", "--config", str(cfg), "--out", str(out), "--shots", "50"]) == 0
        outs.append((out / "samples.csv").read_bytes())
    assert outs[0] == outs[1]
    out = tmp_path / "one"
    assert main(["sample", "--config", str(cfg), "--out", str(out), "--shots", "1"]) == 0
    rows = _csv(out / "samples.csv")
    assert len(rows) == 1 and rows[0]["xi"] in "+-"
    float(rows[0]["likelihood"])


def test_run_is_bit_identical(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("scenario = generic\nseed = 11\n")
    blobs = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        blobs.append({p.name: p.read_bytes() for p in out.iterdir()})
    assert blobs[0] == blobs[1]


@pytest.mark.parametrize(
    "text, line, fragment",
    [
        ("scenario = spin_fig4\nbeta = 1\nbogus = 3\n", 3, "unknown key"),
        ("beta = -1\n", 1, "beta must be"),
        ("scenario = nope\n", 1, "scenario must be"),
        ("# comment\nomega 3\n", 2, "expected 'key = value'"),
        ("beta = 1\nbeta = 2\n", 2, "duplicate"),
        ("alpha0 = 1\nalpha1 = 1\n", 2, "expected 1"),
        ("omega_min = 5\nomega_max = 1\n", 2, "omega_min"),
    ],
)
def test_config_errors_exit_2(tmp_path, capsys, text, line, fragment):
    code, _ = _run(tmp_path, text)
    assert code == 2
    captured = capsys.readouterr()
    assert captured.out == ""
    assert f"cfg.txt:{line}:" in captured.err and fragment in captured.err


def test_json_config_errors(tmp_path, capsys):
    code, _ = _run(tmp_path, '{\n "scenario": "spin_fig4",\n "beta": "hot"\n}\n', name="c.json")
    assert code == 2
    assert "c.json:3:" in capsys.readouterr().err
    code, _ = _run(tmp_path, '{"scenario": "spin_fig4",,}', name="d.json")
    assert code == 2
    cfg = parse_config_text('{"scenario": "arrow_game", "w_diss": [0, 1.5]}')
    assert cfg["w_diss"] == [0.0, 1.5]


def test_missing_config_file(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.txt"), "--out", str(tmp_path)]) == 2
    with pytest.raises(ConfigError):
        parse_config_text("alpha0 = 1\n")


def test_bad_command_line_value(tmp_path, capsys):
    code, _ = _run(tmp_path, "scenario = spin_fig4\n", "--shots", "0", command="sample")
    assert code == 2
    assert "shots must be" in capsys.readouterr().err


def test_contract_violation_exit_3(tmp_path, capsys, monkeypatch):
    # demand more post-selection probability than any port can carry
    monkeypatch.setattr(superposed, "POSTSELECTION_FLOOR", 0.9)
    code, _ = _run(tmp_path, "scenario = spin_fig4\n")
    assert code == 3
    captured = capsys.readouterr()
    assert captured.out == ""
    assert "post-selection probability above threshold" in captured.err


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("scenario = spin_fig4\n")
    proc = subprocess.run(
        [sys.executable, "-m", "timearrow", "run", "--config", str(cfg), "--out", str(tmp_path / "o")],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["scenario"] == "spin_fig4"

import json
import subprocess
import sys

import pytest

from bubbleflow import BubbleParams, make_dimension, make_radial_grid
from bubbleflow.bubble import eval_bubble
from bubbleflow.cli import EXIT_CALIBRATION, EXIT_CHECK, EXIT_FIT, main
from bubbleflow.io import CSV_COLUMNS, load_field, save_field

FAST = {
    "schema_version": "1.0",
    "n": 3,
    "representation": "sphere-zonal",
    "initial": {"eps": 0.01, "degree": 2, "amplitude": 1.0},
    "ds_max": 0.25,
    "s_end": 1.0,
    "ds_out": 0.1,
    "tol": 1e-7,
    "sphere_size": 32,
}


def _config(tmp_path, name="cfg.json", **over):
    path = tmp_path / name
    path.write_text(json.dumps({**FAST, **over}))
    return str(path)


def _json_out(capsys):
    return json.loads(capsys.readouterr().out)


def test_bubble_check(capsys):
    assert main(["bubble-check", "--n", "3"]) == 0
    rep = _json_out(capsys)
    assert rep["passed"]
    assert rep["S"] == pytest.approx(2.3404922750, abs=1e-9)
    assert all(r["residual"] <= 1e-8 for r in rep["rows"])


def test_bubble_check_fails_on_coarse_grid(capsys):
    assert main(["bubble-check", "--grid", "1,4,8"]) == EXIT_CHECK
    assert "failed" in capsys.readouterr().err


def test_dimension_below_three_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bubble-check", "--n", "2"])
    assert exc.value.code == 2
    assert ">= 3" in capsys.readouterr().err


def test_deficit_scenario(capsys, tmp_path):
    assert main(["deficit", "--scenario", "eps=1e-3", "--out", str(tmp_path)]) == 0
    rep = _json_out(capsys)
    assert 0 < rep["delta"] < 1e-2
    assert json.loads((tmp_path / "deficit.json").read_text())["delta"] == rep["delta"]


def test_project_bubble_file(capsys, tmp_path):
    d = make_dimension(3)
    save_field(tmp_path / "u.json", eval_bubble(BubbleParams(center=0.3, scale=2.0), d, make_radial_grid()))
    assert main(["project", "--input", str(tmp_path / "u.json")]) == 0
    rep = _json_out(capsys)
    assert rep["projection"]["z"] == pytest.approx(0.3, abs=1e-8)
    assert rep["C_ratio"] is None


def test_project_two_bubbles_reports_hypothesis(capsys):
    assert main(["project", "--scenario", "two-bubble:d=20"]) == 0
    rep = _json_out(capsys)
    assert rep["hypotheses"]["energy_ok"] is False
    assert "exceeds" in rep["reason"]


def test_project_needs_source(capsys):
    with pytest.raises(SystemExit):
        main(["project"])


def test_spectrum(capsys):
    assert main(["spectrum", "--trials", "5", "--seed", "3"]) == 0
    rep = _json_out(capsys)
    assert rep["Lambda"] == pytest.approx(35 / 3, rel=1e-10)
    assert rep["rayleighOk"]


def test_transform_round_trip(tmp_path):
    d = make_dimension(3)
    u = eval_bubble(BubbleParams(kappa=1.25), d, make_radial_grid())
    save_field(tmp_path / "u.json", u)
    assert main(["transform", "--input", str(tmp_path / "u.json"), "--out", str(tmp_path / "v.json")]) == 0
    assert main(["transform", "--input", str(tmp_path / "v.json"), "--out", str(tmp_path / "w.json")]) == 0
    back = load_field(tmp_path / "w.json")
    assert abs(back.profiles - u.profiles).max() <= 1e-11


def test_flow_outputs_and_determinism(tmp_path, capsys):
    cfg = _config(tmp_path)
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["flow", "--config", cfg, "--out", str(out), "--svg"]) == 0
    capsys.readouterr()
    for name in ("diagnostics.csv", "trajectory.json", "rate.json", "energy.svg", "decay.svg", "ratio.svg"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
    header = (outs[0] / "diagnostics.csv").read_text().splitlines()[0]
    assert header == ",".join(CSV_COLUMNS)
    assert json.loads((outs[0] / "run.json").read_text())["classification"] == "Converged"

    assert main(["rate-fit", "--input", str(outs[0]), "--out", str(tmp_path / "rate2.json")]) == 0
    capsys.readouterr()
    assert (tmp_path / "rate2.json").read_bytes() == (outs[0] / "rate.json").read_bytes()

    for svg in ("energy.svg", "decay.svg", "ratio.svg"):
        (outs[0] / svg).unlink()
    assert main(["report", "--input", str(outs[0])]) == 0
    assert (outs[0] / "decay.svg").read_bytes() == (outs[1] / "decay.svg").read_bytes()


def test_flow_rejects_unknown_key(tmp_path, capsys):
    assert main(["flow", "--config", _config(tmp_path, colour="red")]) == EXIT_FIT
    assert "colour" in capsys.readouterr().err


def test_flow_rejects_bad_values(tmp_path, capsys):
    assert main(["flow", "--config", _config(tmp_path, n=2)]) == EXIT_FIT
    assert main(["flow", "--config", _config(tmp_path, schema_version="9.0")]) == EXIT_FIT


def test_flow_calibration_failure(tmp_path, capsys):
    cfg = _config(tmp_path, calibration={"lo": 1.0, "hi": 2.0, "tol": 1e-3, "s_cap": 40.0})
    assert main(["flow", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CALIBRATION
    assert "bracket" in json.loads((tmp_path / "o" / "run.json").read_text())["error"]


def test_missing_input_is_error(tmp_path, capsys):
    assert main(["report", "--input", str(tmp_path)]) == EXIT_CHECK
    assert main(["deficit", "--input", str(tmp_path / "none.json")]) == EXIT_CHECK


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "bubbleflow.cli", "bubble-check", "--kappa", "1"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert json.loads(res.stdout)["passed"]

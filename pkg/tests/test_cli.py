import json
import subprocess
import sys

import pytest

from qpeuler.cli import main
from qpeuler.config import RunConfig, load_config, parse_stage_tol
from qpeuler.errors import ConfigError


def _cfg(tmp_path, **kw):
    p = tmp_path / "run.json"
    p.write_text(json.dumps(kw))
    return str(p)


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_config_defaults_and_validation(tmp_path):
    cfg = load_config(_cfg(tmp_path))
    assert cfg.kappa0 == 1 and cfg.tol("euler") == 1e-7
    with pytest.raises(ConfigError):
        RunConfig(kappa0=2, xi=[1.0])
    with pytest.raises(ConfigError):
        RunConfig(eps=-1.0)
    with pytest.raises(ConfigError):
        RunConfig(kappa0=2, xi=[1.0, 1.0], K=40, J=24)


def test_stage_tol_parsing():
    assert parse_stage_tol(["solve=1e-10", "euler=1e-6,shift=1e-11"]) == {
        "solve": 1e-10, "euler": 1e-6, "shift": 1e-11}
    with pytest.raises(ConfigError):
        parse_stage_tol(["solve"])
    with pytest.raises(ConfigError):
        parse_stage_tol(["solve=abc"])


@pytest.mark.parametrize("text", ["{not json", json.dumps({"kappa0": 1, "bogus": 3}), json.dumps([1, 2]),
                                  json.dumps({"r": 1.5})])
def test_bad_config_exits_2(tmp_path, text, capsys):
    p = tmp_path / "bad.json"
    p.write_text(text)
    assert main(["spectrum", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "config error" in capsys.readouterr().err


def test_unknown_stage_tolerance_exits_2(tmp_path):
    assert main(["secular", "--config", _cfg(tmp_path), "--stage-tol", "nope=1", "--out", str(tmp_path)]) == 2


def test_spectrum_stage(tmp_path):
    out = tmp_path / "o"
    assert main(["spectrum", "--config", _cfg(tmp_path), "--out", str(out)]) == 0
    for name in ("equilibrium.csv", "equilibrium.json", "potential.json", "spectrum.json", "spectrum.csv"):
        assert (out / name).exists()
    m = _manifest(out)
    assert m["exit_code"] == 0 and m["stages"]["spectrum"]["status"] == "ok"
    assert json.loads((out / "spectrum.json").read_text())["negative_count"] >= 1


def test_oversized_eta_exits_2(tmp_path):
    out = tmp_path / "o"
    assert main(["nonlinearity", "--config", _cfg(tmp_path, eta=0.5), "--out", str(out)]) == 2


def test_stage_failure_exits_3(tmp_path, capsys):
    # no truncation meets an Euler tolerance at the roundoff level
    out = tmp_path / "o"
    code = main(["solve", "--config", _cfg(tmp_path, K=4, J=8), "--stage-tol", "euler=1e-16", "--out", str(out)])
    assert code == 3
    m = _manifest(out)
    assert m["stages"]["solve"]["status"] == "failed"
    assert m["error"]["type"] == "StageError"
    assert "failed" in capsys.readouterr().err


def test_full_pipeline(tmp_path):
    out = tmp_path / "o"
    assert main(["all", "--config", _cfg(tmp_path), "--out", str(out)]) == 0
    m = _manifest(out)
    assert all(v["status"] == "ok" for v in m["stages"].values())
    assert m["stages"]["solve"]["euler_residual"] <= 1e-7
    assert m["stages"]["flow"]["closed_around_centers"] >= 1
    for name in ("secular.json", "diophantine.json", "measure.json", "solution.json", "coefficients.csv",
                 "flow.csv", "stagnation.json", "contours.json", "shift.csv"):
        assert (out / name).exists(), name


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "qpeuler.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "qpeuler" in out.stdout

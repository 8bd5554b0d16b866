import json
import subprocess
import sys

import pytest

from suncross.cli import main


def _cfg(tmp_path, raw, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return str(p)


HAYES = {"schema_version": 1, "name": "t", "system": {"n": 1, "h": 1.0, "B": [[0.0]],
                                                       "delays": [{"tau": 1.0, "A": [[-1.5707963267948966]]}]}}


def test_spectrum_outputs_and_determinism(tmp_path):
    cfg = _cfg(tmp_path, dict(HAYES, analyses=["spectrum"]))
    assert main(["spectrum", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["spectrum", "--config", cfg, "--out", str(tmp_path / "b"), "--threads", "4", "--no-plots"]) == 0
    a = (tmp_path / "a" / "report.json").read_bytes()
    assert a == (tmp_path / "b" / "report.json").read_bytes()
    rep = json.loads(a)
    assert rep["schema_version"] == 1 and rep["seed"] == 0
    for c in rep["analyses"]["spectrum"]["checks"]:
        assert {"value", "threshold"} <= set(c)
    assert (tmp_path / "a" / "plots" / "eigenvalues.png").stat().st_size > 0
    assert (tmp_path / "a" / "plotdata" / "eigenvalues.csv").exists()


def test_bundled_hayes_run(tmp_path):
    out = tmp_path / "h"
    assert main(["run", "--config", "hayes.json", "--out", str(out), "--no-plots"]) == 0
    assert (out / "trajectories.csv").exists() and (out / "timings.json").exists()


def test_seed_override_is_recorded(tmp_path):
    cfg = _cfg(tmp_path, dict(HAYES, analyses=["spectrum"]))
    main(["spectrum", "--config", cfg, "--out", str(tmp_path / "s"), "--seed", "7", "--no-plots"])
    assert json.loads((tmp_path / "s" / "report.json").read_text())["seed"] == 7


def test_config_error_exit_code(tmp_path, capsys):
    cfg = _cfg(tmp_path, {"schema_version": 1, "bogus": True})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "configuration error" in capsys.readouterr().err
    assert main(["spectrum", "--out", str(tmp_path / "o")]) == 2


def test_analysis_error_exit_code(tmp_path):
    C = [[[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]]
    raw = {"schema_version": 1, "analyses": ["simulate"],
           "system": {"n": 1, "h": 1.0, "B": [[0.0]], "delays": [],
                      "nonlinearity": {"id": "cubic", "params": {"tau": 1.0, "A0": [[0.0]], "A1": [[0.0]], "C": C}}},
           "simulate": {"t_end": 5.0, "history": {"kind": "constant", "value": [1.0]}}}
    out = tmp_path / "o"
    assert main(["simulate", "--config", _cfg(tmp_path, raw), "--out", str(out), "--no-plots"]) == 3
    assert json.loads((out / "report.json").read_text())["error"]["type"] == "MaximalIntervalExceeded"


def test_fault_injection_exits_with_suite_failure(tmp_path):
    raw = {"schema_version": 1, "analyses": ["verify"],
           "verify": {"level": "quick", "criteria": [1], "faults": {"projector_scale": 1.01}}}
    assert main(["verify", "--config", _cfg(tmp_path, raw), "--out", str(tmp_path / "o"), "--no-plots"]) == 4


def test_logging_env_and_module_entry(tmp_path):
    cfg = _cfg(tmp_path, dict(HAYES, analyses=["spectrum"]))
    env = {"SUNCROSS_LOG": "INFO", "PATH": "/usr/bin:/bin"}
    r = subprocess.run([sys.executable, "-m", "suncross", "spectrum", "--config", cfg, "--out", str(tmp_path / "m"),
                        "--no-plots"], capture_output=True, text=True, env=env)
    assert r.returncode == 0, r.stderr
    assert "INFO" in r.stderr


@pytest.mark.slow
def test_wright_center_manifold_run(tmp_path):
    out = tmp_path / "w"
    assert main(["run", "--config", "wright_hopf.json", "--out", str(out), "--threads", "2"]) == 0
    for f in ("manifold_samples.csv", "plotdata/manifold_sections.csv", "plotdata/invariance.csv",
              "plots/manifold_sections.png"):
        assert (out / f).exists(), f

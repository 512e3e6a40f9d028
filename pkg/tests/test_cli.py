import json
import subprocess
import sys

import pytest

from ahhorizons.cli import main

FAST = ["--grid-n", "8193", "--sphere-res", "8", "16"]


def _run(capsys, argv):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_params(capsys):
    code, out, _ = _run(capsys, ["params", "--mass-param", "2.0"])
    assert code == 0
    data = json.loads(out)
    assert data["params"]["M"] == 2.0
    assert len(data["params"]["horizon_rho"]) == 3


@pytest.mark.parametrize("command", ["glue", "solve", "mass"])
def test_single_stages(capsys, command):
    code, out, _ = _run(capsys, [command] + FAST)
    data = json.loads(out)
    assert code == 0
    assert data["checks"] and all(c["passed"] for c in data["checks"].values())
    prefix = {"glue": "gluing", "solve": "solve", "mass": "mass"}[command]
    assert any(k.startswith(prefix) for k in data["checks"])


def test_horizons_and_pipeline(capsys, tmp_path):
    code, out, _ = _run(capsys, ["horizons"] + FAST)
    assert code == 0
    assert json.loads(out)["horizons"]["nested"]
    code, out, _ = _run(capsys, ["pipeline", "--out-dir", str(tmp_path)] + FAST)
    assert code == 0 and json.loads(out)["ok"]
    assert (tmp_path / "report.json").exists()


def test_validation_exit_code(capsys, tmp_path):
    out_dir = tmp_path / "never"
    code, _, err = _run(capsys, ["pipeline", "--mass-param", "-1", "--out-dir", str(out_dir)])
    assert code == 2 and "error" in err
    assert not out_dir.exists()
    code, _, _ = _run(capsys, ["solve", "--epsilon", "5.0"] + FAST)
    assert code == 2


def test_numerical_failure_exit_code(capsys, tmp_path):
    code, out, _ = _run(capsys, ["pipeline", "--epsilon", "0.2", "--out-dir", str(tmp_path)] + FAST)
    assert code == 3
    assert json.loads(out)["failed_stage"] == "horizons"
    assert (tmp_path / "FAILED").exists()


def test_io_exit_code(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, _ = _run(capsys, ["pipeline", "--out-dir", str(blocker / "sub")] + FAST)
    assert code == 4
    code, _, _ = _run(capsys, ["params", "--config", str(tmp_path / "missing.cfg")])
    assert code == 4


def test_config_file(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("M = 3.0\n")
    code, out, _ = _run(capsys, ["params", "--config", str(cfg)])
    assert code == 0 and json.loads(out)["params"]["M"] == 3.0
    code, out, _ = _run(capsys, ["params", "--config", str(cfg), "--mass-param", "4.0"])
    assert json.loads(out)["params"]["M"] == 4.0


def test_sweep_stdout_and_file(capsys, tmp_path):
    code, out, _ = _run(capsys, ["sweep", "--mass-param", "2.0", "0.1", "--epsilon", "0.05"] + FAST)
    lines = out.strip().splitlines()
    assert lines[0].startswith("M,epsilon,a,")
    assert len(lines) == 3
    assert code == 3  # the M = 0.1 cell cannot mollify at this epsilon
    code, _, _ = _run(capsys, ["sweep", "--mass-param", "2.0", "--epsilon", "0.05", "--out-dir", str(tmp_path)] + FAST)
    assert code == 0 and (tmp_path / "sweep.csv").exists()
    code, _, _ = _run(capsys, ["sweep", "--mass-param", "0", "--epsilon", "0.05"])
    assert code == 2


def test_usage_errors():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ahhorizons", "params", "--mass-param", "1"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert json.loads(res.stdout)["params"]["M"] == 1.0

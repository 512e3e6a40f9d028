import csv
import dataclasses
import json
import os

import numpy as np
import pytest

from ahhorizons.errors import ValidationError
from ahhorizons.pipeline import (
    SWEEP_COLUMNS,
    RunConfig,
    emit_profiles,
    load_config,
    run_pipeline,
    sweep,
)


def _read(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


@pytest.fixture(scope="session")
def default_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = RunConfig(out_dir=str(out))
    return cfg, run_pipeline(cfg), out


def test_config_file_and_overrides(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("M = 2.0\nepsilon = 0.1\n# comment\nsphere_theta = 12\nsphere_phi = 24\n")
    cfg = load_config(str(p), {"epsilon": 0.08, "seed": None})
    assert (cfg.M, cfg.epsilon, cfg.sphere_theta, cfg.seed) == (2.0, 0.08, 12, 0)
    p.write_text("[run]\nM = 3\n")
    assert load_config(str(p)).M == 3.0


@pytest.mark.parametrize("text", ["M = -1\n", "M = nan\n", "epsilon = 0\n", "colour = red\n",
                                  "grid_n = 12\n", "sphere_phi = 31\n", "M = abc\n", "bump_delta = 0.01\nbump_lo = 2\n"])
def test_invalid_configs(tmp_path, text):
    p = tmp_path / "bad.cfg"
    p.write_text(text)
    with pytest.raises(ValidationError):
        load_config(str(p))


def test_invalid_run_writes_nothing(tmp_path):
    out = tmp_path / "out"
    with pytest.raises(ValidationError):
        run_pipeline(RunConfig(M=-1.0, out_dir=str(out)))
    assert not out.exists()
    with pytest.raises(ValidationError):
        run_pipeline(RunConfig(), upto="everything")


def test_default_run_passes(default_run):
    cfg, report, out = default_run
    assert report.ok and report.exit_code == 0, report.error or report.checks
    assert set(os.listdir(out)) >= {"report.json", "phi_M.csv", "psi.csv", "phi_eps.csv", "R.csv", "H.csv",
                                    "H_family.csv", "surface_H-2.csv", "surface_H+0.csv", "surface_H+2.csv"}
    assert not (out / "FAILED").exists()
    data = json.loads((out / "report.json").read_text())
    assert data["ok"] and data["config"]["M"] == 1.0
    assert 0 < data["solve"]["M_eps"] < 1.0
    assert data["horizons"]["nested"]


def test_csv_format(default_run):
    _, _, out = default_run
    raw = (out / "phi_eps.csv").read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    header, data = _read(out / "phi_eps.csv")
    assert header == ["rho", "phi_eps"]
    assert np.all(np.diff(data[:, 0]) > 0)
    assert np.all(data[:, 1] >= 1.0)


def test_curvature_series(default_run):
    _, report, out = default_run
    _, R = _read(out / "R.csv")
    tau2 = report.gluing["tau2"]
    outside = (R[:, 0] >= tau2) & (R[:, 0] < R[-1, 0])
    assert np.max(np.abs(R[outside, 1] + 6)) < 1e-6
    assert np.all(R[R[:, 0] < tau2, 1] > -6 - 1e-6)


def test_family_mean_curvature_series(default_run):
    _, report, out = default_run
    _, H = _read(out / "H_family.csv")
    rho, h = H[:, 0], H[:, 1]
    radii = report.params["horizon_rho"]
    assert np.count_nonzero(np.diff(np.sign(h)) != 0) == 1
    for target, r in zip((-2.0, 0.0, 2.0), radii):
        i = np.flatnonzero(np.diff(np.sign(h - target)) != 0)
        assert i.size >= 1
        assert min(abs(rho[i] - r)) < 2 * (rho[1] - rho[0])


def test_reruns_are_byte_identical(default_run, tmp_path):
    cfg, report, out = default_run
    again = run_pipeline(dataclasses.replace(cfg, out_dir=str(tmp_path)))
    for name in os.listdir(out):
        if name.endswith(".csv"):
            assert (out / name).read_bytes() == (tmp_path / name).read_bytes(), name
    first, second = report.payload(), again.payload()
    for p in (first, second):
        p["config"] = dict(p["config"], out_dir="")
    assert json.dumps(first, sort_keys=True, default=str) == json.dumps(second, sort_keys=True, default=str)


def test_partial_stages_and_emit(tmp_path):
    report = run_pipeline(RunConfig(grid_n=4097), write=False, upto="solve")
    assert report.ok and report.solve and not report.mass and not report.horizons
    paths = emit_profiles(report, str(tmp_path), what=("phi_eps",))
    assert list(paths) == ["phi_eps"]


def test_failure_is_recorded(tmp_path):
    # at epsilon = 0.2 the constructed metric has no H = -2 sphere
    cfg = RunConfig(epsilon=0.2, grid_n=8193, out_dir=str(tmp_path))
    report = run_pipeline(cfg)
    assert report.failed_stage == "horizons" and "RangeError" in report.error
    assert report.exit_code == 3
    assert (tmp_path / "FAILED").read_text().startswith("horizons")
    assert json.loads((tmp_path / "report.json").read_text())["failed_stage"] == "horizons"


def test_epsilon_above_gluing_scale():
    report = run_pipeline(RunConfig(epsilon=5.0, grid_n=4097), write=False)
    assert report.failed_stage == "solve" and report.exit_code == 2


def test_bump_normalization(tmp_path):
    report = run_pipeline(RunConfig(bump_delta=0.01, grid_n=8193), write=False, upto="mass")
    assert report.ok
    assert report.normalize["bound"] == pytest.approx((1 + 0.01 / 6) ** 0.25)
    assert report.mass["mass_output"] > report.mass["mass_family_M_eps"]


def test_sweep_matches_single_runs(tmp_path):
    template = RunConfig(grid_n=8193)
    out = tmp_path / "sweep.csv"
    rows = sweep(template, [10.0, 2.0, 0.1], [0.05], workers=2, out_path=str(out))
    assert [r["M"] for r in rows] == [10.0, 2.0, 0.1]
    single = run_pipeline(dataclasses.replace(template, M=2.0, epsilon=0.05), write=False)
    assert rows[1]["M_eps"] == single.solve["M_eps"]
    assert rows[1]["ok"] == single.ok
    assert rows[2]["ok"] is False and "ValidationError" in rows[2]["error"]
    header = out.read_text().splitlines()[0].split(",")
    assert tuple(header) == SWEEP_COLUMNS
    with pytest.raises(ValidationError):
        sweep(template, [], [0.1])


def test_sweep_columns_monotone():
    rows = sweep(RunConfig(grid_n=4097), [0.5, 1.0, 2.0, 4.0], [0.05], workers=1)
    for key in ("a", "rhoM", "b"):
        vals = [r[key] for r in rows]
        assert all(x < y for x, y in zip(vals, vals[1:])), key


def test_example_M1_eps01_three_nested_surfaces():
    # literal end-to-end example: M = 1, epsilon = 0.1, no bump
    report = run_pipeline(RunConfig(M=1.0, epsilon=0.1), write=False)
    assert report.mass["abs_difference_M_eps"] < 1e-6
    assert not report.failed_stage, report.error
    assert report.horizons["nested"] and len(report.horizons["surfaces"]) == 3

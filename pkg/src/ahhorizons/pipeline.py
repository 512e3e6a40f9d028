"""End-to-end construction: glue, mollify and solve, normalize, mass, horizons.

A run is described by :class:`RunConfig` (readable from a ``key = value``
file) and produces a :class:`RunReport` whose checks each record the value,
the tolerance it was held to and the outcome.  The exit code of a run is 0
only when every check passed.
"""

import configparser
import csv
import dataclasses
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .adssch import FamilyEvaluator, horizon_radii, make_params
from .collar import wang_mass
from .errors import AHError, StageError, ValidationError
from .gluing import build_spec, glued_profile, junction_grid, select_taus, verify_supercurvature
from .horizon import (ambient_factor, check_nesting, cmc_linearization, find_cmc_surface, mean_curvature_graph,
                      radial_horizons)
from .solver import (MollifierSpec, defect, mollify, smooth_step, solve_bvp, uniform_grid, yamabe_normalize)
from .sphere import SphereGrid, real_harmonic

__all__ = [
    "RunConfig",
    "RunReport",
    "load_config",
    "run_pipeline",
    "STAGES",
    "emit_profiles",
    "sweep",
    "write_csv",
    "SWEEP_COLUMNS",
]

TARGETS = (-2.0, 0.0, 2.0)


@dataclass
class RunConfig:
    M: float = 1.0
    epsilon: float = 0.05
    bump_delta: float = 0.0
    bump_lo: float = 0.5
    bump_hi: float = 1.5
    grid_n: int = 2 ** 15
    outer_rho: float = 8.0  # L = tau2 + outer_rho
    glue_nodes: int = 4001
    sphere_theta: int = 16
    sphere_phi: int = 32
    perturbation: float = 0.0
    seed: int = 0
    solve_tol: float = 1e-10
    cmc_tol: float = 1e-8
    curvature_tol: float = 1e-6
    mass_tol: float = 1e-6
    decay_tol: float = 0.15
    out_dir: str = ""

    def validate(self):
        if not (isinstance(self.M, (int, float)) and math.isfinite(self.M) and self.M > 0):
            raise ValidationError(f"M must be a positive number, got {self.M}")
        if not self.epsilon > 0:
            raise ValidationError(f"epsilon must be positive, got {self.epsilon}")
        if not self.bump_delta >= 0:
            raise ValidationError(f"bump amplitude must be >= 0, got {self.bump_delta}")
        if self.bump_delta and not 0 < self.bump_lo < self.bump_hi:
            raise ValidationError("bump support must satisfy 0 < lo < hi")
        if self.grid_n < 257:
            raise ValidationError("grid_n must be at least 257")
        if not self.outer_rho > 5.0:
            raise ValidationError("outer_rho must exceed 5 so the collar window lies on the grid")
        if self.sphere_theta < 4 or self.sphere_phi < 4 or self.sphere_phi % 2:
            raise ValidationError("sphere resolution needs n_theta >= 4 and an even n_phi >= 4")
        if not 0 <= self.perturbation:
            raise ValidationError("perturbation amplitude must be >= 0")
        return self

    def as_dict(self):
        return dataclasses.asdict(self)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}
_CASTS = {"float": float, "int": int, "str": str, float: float, int: int, str: str}


def _coerce(key, raw):
    kind = _CASTS[_FIELD_TYPES[key]]
    try:
        if kind is int:
            return int(float(raw)) if float(raw).is_integer() else int(raw)
        return kind(raw)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bad value for {key}: {raw!r}") from exc


def load_config(path=None, overrides=None):
    """Read a ``key = value`` file (optionally under a ``[run]`` header) and apply overrides."""
    values = {}
    if path is not None:
        parser = configparser.ConfigParser()
        parser.optionxform = str  # keys are case-sensitive (M)
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        if not text.lstrip().startswith("["):
            text = "[run]\n" + text
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ValidationError(f"unreadable config: {exc}") from exc
        for section in parser.sections():
            for key, raw in parser.items(section):
                values[key] = raw
    for key, raw in (overrides or {}).items():
        if raw is not None:
            values[key] = raw
    unknown = sorted(set(values) - set(_FIELD_TYPES))
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
    return RunConfig(**{k: _coerce(k, v) for k, v in values.items()}).validate()


# -- report -------------------------------------------------------------------

@dataclass
class RunReport:
    config: dict
    params: dict = field(default_factory=dict)
    gluing: dict = field(default_factory=dict)
    solve: dict = field(default_factory=dict)
    normalize: dict = field(default_factory=dict)
    mass: dict = field(default_factory=dict)
    horizons: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    failed_stage: str = ""
    error: str = ""
    failure_code: int = 0
    timings: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict, repr=False)

    def check(self, name, value, tol, passed):
        self.checks[name] = {"value": _num(value), "tol": _num(tol), "passed": bool(passed)}
        return passed

    @property
    def ok(self):
        return not self.failed_stage and all(c["passed"] for c in self.checks.values())

    @property
    def exit_code(self):
        if self.ok:
            return 0
        return self.failure_code or 3

    def payload(self):
        """The deterministic part of the report (everything but timings)."""
        keys = ("config", "params", "gluing", "solve", "normalize", "mass", "horizons", "checks",
                "failed_stage", "error")
        out = {k: getattr(self, k) for k in keys}
        out["ok"] = self.ok
        return out

    def to_json(self):
        data = self.payload()
        data["timings"] = self.timings
        return json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n"


def _num(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else str(float(x))
    return x


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return _num(obj)


# -- stages -----------------------------------------------------------------

def _bump(rho, lo, hi):
    """Smooth bump supported in ``(lo, hi)`` with maximum 1."""
    x = (np.asarray(rho, dtype=float) - lo) / (hi - lo)
    return smooth_step(2.0 * x) * smooth_step(2.0 * (1.0 - x))


def _stage(report, name, fn):
    t0 = time.perf_counter()
    try:
        return fn()
    except AHError as exc:
        report.failed_stage = name
        report.error = f"{type(exc).__name__}: {exc}"
        report.failure_code = getattr(exc, "exit_code", 3)
        raise StageError(name, exc) from exc
    finally:
        report.timings[name] = time.perf_counter() - t0


def _params_stage(cfg, report):
    params = make_params(cfg.M)
    ev = FamilyEvaluator(params)
    radii = horizon_radii(params, ev)
    report.params = dict(params.as_dict(), horizon_rho=list(radii))
    report.artifacts.update(params=params, evaluator=ev)
    return params, ev


def _glue_stage(cfg, report, params, ev):
    tau1, tau2 = select_taus(params, ev)
    spec = build_spec(params, tau1, tau2, ev)
    L = tau2 + cfg.outer_rho
    psi = glued_profile(ev, spec, junction_grid(spec, L, cfg.glue_nodes))
    sup = verify_supercurvature(psi, outer_tol=cfg.curvature_tol, raise_on_failure=False)
    j1, j2 = psi.junction_mismatch()
    spacing = float(np.max(np.diff(psi.grid)))
    report.gluing = dict(spec.as_dict(), cap_value=psi.cap_value, min_margin_inside=sup.min_margin_inside,
                         max_dev_outside=sup.max_dev_outside, junction_tau1=list(j1), junction_tau2=list(j2))
    report.check("gluing.R_above_-6_inside", sup.min_margin_inside, 0.0, sup.min_margin_inside > 0)
    report.check("gluing.R_equals_-6_outside", sup.max_dev_outside, cfg.curvature_tol,
                 sup.max_dev_outside < cfg.curvature_tol)
    mismatch = float(max(np.max(np.abs(j1)), np.max(np.abs(j2))))
    report.check("gluing.junction_C2", mismatch, 10 * spacing, mismatch < 10 * spacing)
    report.artifacts.update(spec=spec, psi=psi)
    return spec, psi


def _solve_stage(cfg, report, spec, psi):
    if not cfg.epsilon < 2.0 * spec.tau2:
        raise ValidationError(f"epsilon = {cfg.epsilon} must be below 2*tau2 = {2 * spec.tau2:.6g}")
    f_eps = mollify(defect(psi), MollifierSpec(cfg.epsilon, spec.tau2))
    grid = uniform_grid(spec.tau2 + cfg.outer_rho, cfg.grid_n)
    sol = solve_bvp(f_eps, psi, grid=grid, tol=cfg.solve_tol)
    R, _ = sol.scalar_curvature()
    outside = (sol.grid >= spec.tau2) & (sol.grid < sol.grid[-1])
    r_dev = float(np.max(np.abs(R[outside] + 6.0)))
    report.solve = {
        "L": float(sol.grid[-1]), "nodes": int(sol.grid.size), "iterations": sol.iterations,
        "residual": sol.residual_sup, "decay_rate": sol.decay_rate, "M_eps": sol.M_eps,
        "M_minus_M_eps": cfg.M - sol.M_eps, "match_deviation": sol.match_deviation,
        "sandwich_strict": sol.sandwich_strict, "f_eps_gap_sup": f_eps.gap_sup(),
    }
    report.check("solve.residual", sol.residual_sup, 10 * cfg.solve_tol, sol.residual_sup < 10 * cfg.solve_tol)
    report.check("solve.decay_rate", sol.decay_rate, cfg.decay_tol, abs(sol.decay_rate + 3.0) < cfg.decay_tol)
    report.check("solve.R_equals_-6_outside", r_dev, cfg.curvature_tol, r_dev < cfg.curvature_tol)
    report.check("solve.mass_param_positive_drop", cfg.M - sol.M_eps, 0.0, cfg.M - sol.M_eps > 0)
    report.artifacts.update(solution=sol, R=R)
    return sol


def _normalize_stage(cfg, report, sol):
    lo, hi = cfg.bump_lo, cfg.bump_hi
    R2 = lambda rho: -6.0 - cfg.bump_delta * _bump(rho, lo, hi)
    ym = yamabe_normalize(R2, sol, tol=cfg.solve_tol)
    u = ym.u
    report.normalize = {"delta": cfg.bump_delta, "support": [lo, hi], "bound": ym.bound,
                        "residual": ym.residual_sup, "iterations": ym.iterations,
                        "u_min": float(u.min()), "u_max": float(u.max())}
    report.check("normalize.residual", ym.residual_sup, 10 * cfg.solve_tol, ym.residual_sup < 10 * cfg.solve_tol)
    report.check("normalize.u_at_least_1", float(u.min()) - 1.0, 1e-12, u.min() >= 1.0 - 1e-12)
    report.check("normalize.u_below_bound", float(u.max()) - ym.bound, 1e-12, u.max() <= ym.bound + 1e-12)
    report.artifacts.update(normalized=ym)
    return ym


def _mass_stage(cfg, report, final, sol):
    m_in = wang_mass(report.artifacts["evaluator"])
    m_out = wang_mass(final)
    m_ref = wang_mass(FamilyEvaluator(make_params(sol.M_eps)))
    diff = abs(m_out.mass - m_ref.mass)
    report.mass = {"mass_input": m_in.mass, "mass_output": m_out.mass, "mass_family_M_eps": m_ref.mass,
                   "abs_difference_input": abs(m_out.mass - m_in.mass), "abs_difference_M_eps": diff,
                   "u_ttt_output": m_out.u_ttt, "fit_residual": m_out.fit.residual,
                   "fit_sensitivity": m_out.fit.sensitivity}
    if not cfg.bump_delta:
        report.check("mass.matches_family_M_eps", diff, cfg.mass_tol, diff < cfg.mass_tol)
    return m_out


def _horizon_stage(cfg, report, final):
    grid = SphereGrid(cfg.sphere_theta, cfg.sphere_phi)
    base = ambient_factor(final)
    Phi = ambient_factor(final, cfg.perturbation)
    roots = radial_horizons(base)
    surfaces = {}
    for target in TARGETS:
        s = find_cmc_surface(Phi, target, grid=grid, tol=cfg.cmc_tol)
        surfaces[target] = s
        key = f"H{target:+g}"
        report.check(f"horizons.{key}.residual", s.residual, cfg.cmc_tol, s.residual < cfg.cmc_tol)
        report.check(f"horizons.{key}.theta_positive", float(np.min(s.theta)), 0.0, np.min(s.theta) > 0)
        report.check(f"horizons.{key}.definite", s.min_eigenvalue, 0.0, s.definite)
    nested = check_nesting(surfaces)
    report.check("horizons.nested", float(nested), 1.0, nested)
    # linearization about the H = 2 radial sphere against central differences,
    # in a seeded random smooth direction
    rng = np.random.default_rng(cfg.seed)
    coef = rng.standard_normal(9)
    eta = sum(c * real_harmonic(grid, l, m) for c, (l, m) in
              zip(coef, [(l, m) for l in range(3) for m in range(-l, l + 1)]))
    c = math.tanh(roots[2] / 2.0)
    s_ = 1e-5
    fd = -(mean_curvature_graph(base, c + s_ * eta, grid) - mean_curvature_graph(base, c - s_ * eta, grid)) / (2 * s_)
    lin = cmc_linearization(base, c, None, eta, grid)
    rel = float(np.max(np.abs(fd - lin)) / np.max(np.abs(lin)))
    report.check("horizons.linearization", rel, 1e-4, rel < 1e-4)
    report.horizons = {
        "perturbation": cfg.perturbation, "sphere": [cfg.sphere_theta, cfg.sphere_phi],
        "radial_rho": list(roots),
        "surfaces": {f"{t:+g}": s.as_dict() for t, s in surfaces.items()},
        "nested": nested, "linearization_rel_error": rel,
    }
    report.artifacts.update(surfaces=surfaces, sphere=grid)
    return surfaces


STAGES = ("params", "glue", "solve", "normalize", "mass", "horizons")


def run_pipeline(config, write=True, raise_errors=False, upto="horizons"):
    """Run the stages in order up to and including ``upto``.

    Stage failures are recorded in the report (with ``failed_stage``) and,
    when ``write`` is set, the partial report is still written together with
    a ``FAILED`` marker.  With ``raise_errors`` the wrapping
    :class:`StageError` is re-raised after writing.
    """
    cfg = config.validate() if isinstance(config, RunConfig) else load_config(overrides=config)
    if upto not in STAGES:
        raise ValidationError(f"unknown stage {upto!r}")
    last = STAGES.index(upto)
    report = RunReport(config=cfg.as_dict())
    try:
        params, ev = _stage(report, "params", lambda: _params_stage(cfg, report))
        if last >= 1:
            spec, psi = _stage(report, "glue", lambda: _glue_stage(cfg, report, params, ev))
        if last >= 2:
            sol = _stage(report, "solve", lambda: _solve_stage(cfg, report, spec, psi))
            report.artifacts["final"] = sol
        if last >= 3 and cfg.bump_delta > 0:
            report.artifacts["final"] = _stage(report, "normalize", lambda: _normalize_stage(cfg, report, sol))
        if last >= 4:
            _stage(report, "mass", lambda: _mass_stage(cfg, report, report.artifacts["final"], sol))
        if last >= 5:
            _stage(report, "horizons", lambda: _horizon_stage(cfg, report, report.artifacts["final"]))
    except StageError:
        if write and cfg.out_dir:
            _write_outputs(report, cfg.out_dir)
        if raise_errors:
            raise
        return report
    if write and cfg.out_dir:
        _write_outputs(report, cfg.out_dir)
    return report


# -- outputs ------------------------------------------------------------------

def write_csv(path, header, rows):
    """CSV with a header row, ``,`` separators and LF line endings."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def _series(x, y):
    return zip(np.asarray(x, dtype=float), np.asarray(y, dtype=float))


def _radial_H(value, slope, rho):
    return value ** -2 * (2.0 / np.tanh(rho) + 4.0 * slope / value)


def emit_profiles(report, out_dir, what=None, stride=8):
    """Write ``(rho, value)`` series and ``(theta, phi, v)`` surface samples.

    ``what`` selects among ``phi_M``, ``psi``, ``phi_eps``, ``R``, ``H``,
    ``H_family`` and ``surfaces`` (default: all available).  Returns the
    written paths keyed by name.
    """
    os.makedirs(out_dir, exist_ok=True)
    art = report.artifacts
    names = what or ("phi_M", "psi", "phi_eps", "R", "H", "H_family", "surfaces")
    written = {}
    sol = art.get("solution")
    ev = art.get("evaluator")
    rho = sol.grid[::stride] if sol is not None else None
    if "phi_M" in names and ev is not None and rho is not None:
        r = rho[rho > ev.params.rho0 + 1e-3]
        written["phi_M"] = _emit(out_dir, "phi_M.csv", ("rho", "phi_M"), _series(r, ev.phi(r)))
    if "H_family" in names and ev is not None and rho is not None:
        r = rho[rho > ev.params.rho0 + 1e-3]
        written["H_family"] = _emit(out_dir, "H_family.csv", ("rho", "H"), _series(r, ev.mean_curvature(r)))
    if "psi" in names and "psi" in art:
        psi = art["psi"]
        written["psi"] = _emit(out_dir, "psi.csv", ("rho", "psi"), _series(psi.grid, psi.evaluate(psi.grid)[0]))
    if sol is not None:
        final = art.get("final", sol)
        prof = final.phi_eps if hasattr(final, "phi_eps") else final.profile()
        if "phi_eps" in names:
            written["phi_eps"] = _emit(out_dir, "phi_eps.csv", ("rho", "phi_eps"), _series(rho, 1.0 + prof(rho)))
        if "R" in names and "R" in art:
            written["R"] = _emit(out_dir, "R.csv", ("rho", "R"), _series(rho, art["R"][::stride]))
        if "H" in names:
            r = rho[rho > 0]
            written["H"] = _emit(out_dir, "H.csv", ("rho", "H"), _series(r, _radial_H(1.0 + prof(r), prof(r, 1), r)))
    if "surfaces" in names and "surfaces" in art:
        grid = art["sphere"]
        for target, s in art["surfaces"].items():
            rows = zip(grid.T.ravel(), grid.P.ravel(), s.v.ravel(), s.rho.ravel())
            written[f"surface{target:+g}"] = _emit(out_dir, f"surface_H{target:+g}.csv",
                                                   ("theta", "phi", "v", "rho"), rows)
    return written


def _emit(out_dir, name, header, rows):
    path = os.path.join(out_dir, name)
    write_csv(path, header, rows)
    return path


def _write_outputs(report, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    paths = emit_profiles(report, out_dir)
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_json())
    if report.failed_stage:
        with open(os.path.join(out_dir, "FAILED"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"{report.failed_stage}\n{report.error}\n")
    return paths


# -- sweep ----------------------------------------------------------------------

SWEEP_COLUMNS = ("M", "epsilon", "a", "rhoM", "b", "tau1", "tau2", "M_eps", "mass",
                 "rho_H-2", "rho_H+0", "rho_H+2", "res_H-2", "res_H+0", "res_H+2", "ok", "error")


def _sweep_cell(cfg):
    cfg = dataclasses.replace(cfg, out_dir="")
    try:
        report = run_pipeline(cfg, write=False)
    except AHError as exc:  # validation of the cell itself
        return _row(cfg, None, f"{type(exc).__name__}: {exc}")
    return _row(cfg, report, report.error)


def _row(cfg, report, error):
    row = {k: "" for k in SWEEP_COLUMNS}
    row.update(M=cfg.M, epsilon=cfg.epsilon, error=error or "", ok=False)
    if report is None:
        return row
    p, g, s, m, h = report.params, report.gluing, report.solve, report.mass, report.horizons
    row.update(a=p.get("a", ""), rhoM=p.get("rhoM", ""), b=p.get("b", ""), tau1=g.get("tau1", ""),
               tau2=g.get("tau2", ""), M_eps=s.get("M_eps", ""), mass=m.get("mass_output", ""), ok=report.ok)
    for t in TARGETS:
        surf = h.get("surfaces", {}).get(f"{t:+g}")
        if surf:
            row[f"rho_H{t:+g}"] = 0.5 * (surf["rho_min"] + surf["rho_max"])
            row[f"res_H{t:+g}"] = surf["residual"]
    return {k: _num(v) for k, v in row.items()}


def sweep(template, masses, epsilons, workers=None, out_path=None):
    """One pipeline per ``(M, epsilon)`` cell; rows in input order."""
    masses, epsilons = list(masses), list(epsilons)
    if not masses or not epsilons:
        raise ValidationError("sweep needs nonempty M and epsilon lists")
    cells = [dataclasses.replace(template, M=float(M), epsilon=float(e)) for M in masses for e in epsilons]
    if workers == 1 or len(cells) == 1:
        rows = [_sweep_cell(c) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    if out_path:
        write_csv(out_path, SWEEP_COLUMNS, ([r[k] for k in SWEEP_COLUMNS] for r in rows))
    return rows

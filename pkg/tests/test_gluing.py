import math

import numpy as np
import pytest
from scipy import integrate

from ahhorizons.adssch import horizon_radii
from ahhorizons.errors import ConsistencyError, CurvatureViolationError, GridError, SelectionError
from ahhorizons.gluing import (
    GluedProfile,
    build_spec,
    junction_grid,
    select_taus,
    verify_supercurvature,
)


@pytest.mark.parametrize("M", [0.1, 1.0, 10.0])
def test_selected_interval(M, family):
    ev = family(M)
    p = ev.params
    tau1, tau2 = select_taus(p, ev)
    assert (tau1, tau2) == select_taus(p, ev)  # deterministic
    rho2p = horizon_radii(p, ev)[0]
    assert p.rho0 < tau1 < tau2 < rho2p
    assert tau2 - tau1 <= min(0.5, (tau2 - p.rho0) / 2) + 1e-12
    x = np.linspace(tau1, tau2, 400)
    assert np.all(ev.metric3_derivative(x) < 0)


def test_selection_start_must_be_admissible(family):
    ev = family(1.0)
    with pytest.raises(SelectionError):
        select_taus(ev.params, ev, start=ev.params.rho0 / 2)


@pytest.mark.parametrize("M", [0.1, 1.0, 10.0])
def test_cubic_flux_matching(M, family):
    ev = family(M)
    spec = build_spec(ev.params, *select_taus(ev.params, ev), ev)
    assert spec.A < 0 < spec.B
    assert spec.xi(spec.tau1) == 0 and spec.xi(spec.tau1, 1) == 0
    assert spec.xi(spec.tau2) == pytest.approx(spec.A, rel=1e-9)
    assert spec.xi(spec.tau2, 1) == pytest.approx(spec.B, rel=1e-9)
    # B is the flux derivative of phi itself: d/drho (sinh^2 phi_rho) = sinh^2 Lap(phi)
    f, f1, f2 = ev.evaluate(spec.tau2)[:, 0]
    s, c = math.sinh(spec.tau2), math.cosh(spec.tau2)
    assert spec.B == pytest.approx(s * s * f2 + 2 * s * c * f1, rel=1e-8)
    with pytest.raises(ValueError):
        spec.xi(0.1, 2)


def test_build_spec_rejects_bad_intervals(family):
    ev = family(1.0)
    p = ev.params
    with pytest.raises(ConsistencyError):
        build_spec(p, 0.1, 0.09, ev)
    with pytest.raises(ConsistencyError):
        build_spec(p, p.rho0 / 2, 0.1, ev)


    class Increasing:
        # phi_rho > 0 makes the flux A positive, which no cubic of this form can match
        def evaluate(self, rho):
            return np.array([[1.2], [0.1], [0.0]])

    with pytest.raises(ConsistencyError):
        build_spec(p, 0.08, 0.1, Increasing())


@pytest.mark.parametrize("M", [0.1, 1.0, 10.0])
def test_glued_profile_pieces(M, glued):
    psi = glued(M)
    spec = psi.spec
    g = psi.grid
    cap = g[g <= spec.tau1]
    assert np.all(psi.evaluate(cap)[0] == psi.cap_value)
    out = g[g >= spec.tau2]
    assert np.max(np.abs(psi.evaluate(out)[0] - psi.evaluator.phi(out))) < 1e-12
    rep = verify_supercurvature(psi)
    assert rep.ok and rep.min_margin_inside > 0 and rep.max_dev_outside < 1e-6
    j1, j2 = psi.junction_mismatch()
    assert np.max(np.abs(j1)) < 1e-12
    assert np.max(np.abs(j2)) < 1e-8 * max(1.0, abs(spec.B))
    # psi is decreasing to phi(tau2) across the transition, so the cap sits above it
    assert psi.cap_value > psi.phi_tau2 > 1


def test_transition_against_adaptive_quadrature(glued):
    psi = glued(1.0)
    spec = psi.spec
    for rho in np.linspace(spec.tau1, spec.tau2, 7):
        ref = psi.phi_tau2 - integrate.quad(lambda x: spec.xi(x) / math.sinh(x) ** 2, rho, spec.tau2,
                                            epsabs=1e-14, epsrel=1e-14)[0]
        assert psi.evaluate(rho)[0, 0] == pytest.approx(ref, rel=1e-13)


def test_minus_one_is_consistent(glued):
    psi = glued(1.0)
    x = np.linspace(0.0, 9.5, 300)
    assert np.allclose(psi.minus_one(x), psi.evaluate(x)[0] - 1, atol=1e-14)


def test_grid_must_contain_junctions(glued, family):
    psi = glued(1.0)
    with pytest.raises(GridError):
        GluedProfile(family(1.0), psi.spec, np.linspace(0, 5, 101))
    grid = junction_grid(psi.spec, 5.0, 101)
    assert grid[0] == 0.0 and psi.spec.tau1 in grid and psi.spec.tau2 in grid


def test_supercurvature_violation_is_reported(glued):
    psi = glued(1.0)

    class Broken:
        spec = psi.spec
        grid = psi.grid
        cap_value = psi.cap_value

        def scalar_curvature(self, rho):
            R = psi.scalar_curvature(rho)
            return np.where((rho > 0.02) & (rho < 0.03), -6.5, R)

    with pytest.raises(CurvatureViolationError) as info:
        verify_supercurvature(Broken())
    assert 0.02 < info.value.location < 0.03 and info.value.margin < 0
    assert not verify_supercurvature(Broken(), raise_on_failure=False).ok

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ahhorizons.adssch import (
    FamilyEvaluator,
    compare_family,
    h_of_r,
    horizon_radii,
    make_params,
    neck_radius,
    phi,
)
from ahhorizons.errors import DomainError, RangeError
from ahhorizons.radial import scalar_curvature_from_derivatives, laplacian_from_derivatives


def mp_h(M, r):
    """Reference ``h(r)`` in 40-digit arithmetic."""
    mpmath.mp.dps = 40
    M, r = mpmath.mpf(M), mpmath.mpf(r)
    return mpmath.quad(lambda t: 1 / mpmath.sqrt(t * (t + t ** 3 - M)), [r, 2 * r + 1, mpmath.inf])


@settings(max_examples=100, deadline=None)
@given(st.floats(min_value=1e-4, max_value=1e4))
def test_neck_radius_solves_cubic(M):
    a = neck_radius(M)
    assert a + a ** 3 == pytest.approx(M, rel=1e-13)


def test_neck_radius_limits():
    assert neck_radius(2.0) == pytest.approx(1.0, abs=1e-12)
    assert 0.999 <= neck_radius(1e-3) / 1e-3 <= 1.001
    # r + r^3 = 10 has the exact root 2; the cube-root law is only asymptotic
    assert neck_radius(10.0) == pytest.approx(2.0, abs=1e-14)
    ratios = [neck_radius(M) / M ** (1 / 3) for M in (10.0, 1e3, 1e6)]
    assert ratios[0] < ratios[1] < ratios[2] < 1
    assert abs(ratios[1] - 1) < 0.01
    for bad in (0.0, -1.0, float("nan")):
        with pytest.raises(DomainError):
            neck_radius(bad)


def test_params_monotone_in_M():
    ps = [make_params(M) for M in (0.1, 0.5, 1.0, 2.0, 10.0)]
    for key in ("a", "rhoM", "b"):
        vals = [getattr(p, key) for p in ps]
        assert all(x < y for x, y in zip(vals, vals[1:])), key
    for p in ps:
        assert 0 < p.rho0 < p.rhoM
        assert math.tanh(p.rho0 / 2) == pytest.approx(p.b ** 2, rel=1e-12)


@pytest.mark.parametrize("M", [0.1, 1.0, 10.0])
def test_h_tables_match_quadrature(M):
    p = make_params(M)
    ev = FamilyEvaluator(p)
    for r in (p.a * 1.0001, p.a * 1.5, 3 * p.a + 1, 50.0):
        ref = float(mp_h(M, r))
        assert float(ev.table.h(np.array([r]))[0]) == pytest.approx(ref, rel=1e-12, abs=1e-14)
        assert h_of_r(p, r) == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("M", [0.5, 1.0, 2.0])
def test_conformal_factor_definition(M, family):
    ev = family(M)
    for r in (ev.params.a * 1.2, 2.0, 20.0):
        h = mp_h(M, r)
        rho = float(-mpmath.log(mpmath.tanh(h / 2)))
        expected = math.sqrt(r / math.sinh(rho))
        assert ev.phi(rho) == pytest.approx(expected, rel=1e-11)
        assert ev.area_radius(rho) == pytest.approx(r, rel=1e-11)


@pytest.mark.parametrize("M", [0.5, 1.0, 2.0])
def test_scalar_curvature_is_minus_6_on_both_charts(M, family):
    ev = family(M)
    rho = np.concatenate([np.linspace(ev.params.rho0 + 0.02, ev.params.rhoM, 200, endpoint=False),
                          np.linspace(ev.params.rhoM, 10.0, 400)])
    f, f1, f2 = ev.evaluate(rho)
    R = scalar_curvature_from_derivatives(f, laplacian_from_derivatives(rho, f1, f2))
    assert np.max(np.abs(R + 6)) < 1e-8


@pytest.mark.parametrize("M", [0.5, 1.0, 2.0])
def test_charts_join_smoothly_at_the_neck(M, family):
    ev = family(M)
    rM = ev.params.rhoM
    left = ev._inner(np.array([rM]))[:3]
    right = ev._outer(np.array([rM]))[:3]
    assert np.allclose(np.ravel(left), np.ravel(right), rtol=1e-9, atol=1e-9)


def test_phi_minus_one_and_derivatives(family):
    ev = family(1.0)
    rho = np.linspace(0.5, 12.0, 200)
    assert np.allclose(ev.phi_minus_one(rho), ev.phi(rho) - 1, atol=1e-15)
    # far out phi - 1 = (M/2) e^{-3 rho} (1 + O(e^{-2 rho})), with relative accuracy kept
    for r in (12.0, 15.0, 20.0):
        assert ev.phi_minus_one(r) == pytest.approx(0.5 * math.exp(-3 * r), rel=1e-7)
    h = 1e-5
    mid = np.linspace(0.2, 5.0, 30)
    fd1 = (ev.phi(mid + h) - ev.phi(mid - h)) / (2 * h)
    fd2 = (ev.phi(mid + h) - 2 * ev.phi(mid) + ev.phi(mid - h)) / h ** 2
    assert np.allclose(phi(ev, mid, 1), fd1, rtol=1e-7, atol=1e-9)
    assert np.allclose(phi(ev, mid, 2), fd2, rtol=1e-4, atol=1e-5)
    with pytest.raises(DomainError):
        ev.phi_minus_one(0.2)
    with pytest.raises(DomainError):
        ev.phi(ev.params.rho0)


@pytest.mark.parametrize("M", [0.5, 1.0, 2.0])
def test_mean_curvature_neck_and_horizon(M, family):
    ev = family(M)
    p = ev.params
    assert abs(ev.mean_curvature(p.rhoM)) < 1e-10
    rho2 = float(ev.rho_of_area_radius(M))
    assert ev.mean_curvature(rho2) == pytest.approx(2.0, abs=1e-10)
    rho2p, rho1, rho2b = horizon_radii(p, ev)
    assert rho2p < rho1 < rho2b
    assert ev.mean_curvature(rho2p) == pytest.approx(-2.0, abs=1e-9)
    x = np.linspace(p.rho0 + 0.01, 6.0, 80)
    assert np.allclose(ev.mean_curvature(x), ev.mean_curvature_direct(x), atol=1e-8)


def test_metric3_derivative_matches_finite_difference(family):
    ev = family(1.0)
    rho = np.linspace(ev.params.rho0 + 0.01, 0.3, 25)

    def g(x):
        f = ev.phi(x)
        return np.log(f * (f ** 4 - 1) * np.sinh(x) ** 2)

    h = 1e-6
    fd = (g(rho + h) - g(rho - h)) / (2 * h)
    assert np.allclose(ev.metric3_derivative(rho), fd, rtol=1e-6)


def test_family_ordering_and_decay():
    grid = np.linspace(0.4, 10.0, 500)
    cmp = compare_family(2.0, 1.0, grid)
    assert cmp.ordered
    assert abs(cmp.decay_slope + 3) < 0.15
    with pytest.raises(DomainError):
        compare_family(1.0, 2.0, grid)
    with pytest.raises(RangeError):
        compare_family(2.0, 1.0, np.array([0.01, 1.0]))

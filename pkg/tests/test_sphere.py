import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ahhorizons.errors import DomainError
from ahhorizons.sphere import SphereGrid, harmonic, real_harmonic

LM = [(0, 0), (1, 0), (1, 1), (1, -1), (2, 0), (2, 1), (2, -1), (2, 2), (2, -2)]


def test_weights_and_validation():
    g = SphereGrid(12, 24)
    assert g.integrate(np.ones(g.shape)) == pytest.approx(4 * np.pi, rel=1e-14)
    assert g.mean(np.full(g.shape, 3.0)) == pytest.approx(3.0)
    assert np.all(g.theta > 0) and np.all(g.theta < np.pi)
    for bad in ((12, 25), (3, 24), (12, 2)):
        with pytest.raises(DomainError):
            SphereGrid(*bad)
    with pytest.raises(DomainError):
        harmonic(3, 0)


@pytest.mark.parametrize("l,m", LM)
def test_harmonic_eigenfunctions(l, m):
    g = SphereGrid(16, 32)
    Y = real_harmonic(g, l, m)
    assert np.max(np.abs(g.laplacian(Y) + l * (l + 1) * Y)) < 1e-11
    _, Yt, Yp = harmonic(l, m)
    ft, fp = g.gradient(Y)
    assert np.max(np.abs(ft - Yt(g.T, g.P))) < 1e-11
    assert np.max(np.abs(fp - Yp(g.T, g.P))) < 1e-11


def test_harmonic_orthogonality():
    g = SphereGrid(16, 32)
    Ys = [real_harmonic(g, l, m) for l, m in LM]
    gram = np.array([[g.integrate(a * b) for b in Ys] for a in Ys])
    # the longitude sum is exact, so different orders are orthogonal to rounding
    for i, (_, mi) in enumerate(LM):
        for j, (_, mj) in enumerate(LM):
            if mi != mj:
                assert abs(gram[i, j]) < 1e-12
    assert gram[0, 0] == pytest.approx(4 * np.pi)


def test_ring_quadrature_is_second_order():
    def overlap(n):
        g = SphereGrid(n, 2 * n)
        return abs(g.integrate(real_harmonic(g, 0, 0) * real_harmonic(g, 2, 0)))

    e1, e2 = overlap(16), overlap(32)
    assert e1 / e2 == pytest.approx(4.0, rel=0.05)


def test_integral_of_smooth_field():
    g = SphereGrid(24, 48)
    # int exp(cos theta) dA = 2 pi (e - 1/e)
    f = g.sample(lambda t, p: np.exp(np.cos(t)))
    assert g.integrate(f) == pytest.approx(2 * np.pi * (np.e - 1 / np.e), rel=1e-3)


@settings(max_examples=25, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_laplacian_of_nonpolynomial_field(a, b, c):
    # f = exp(x . v) restricted to the sphere: Lap f = (|v|^2 - 2 x.v - (x.v)^2) f
    g = SphereGrid(24, 48)
    x = np.sin(g.T) * np.cos(g.P)
    y = np.sin(g.T) * np.sin(g.P)
    z = np.cos(g.T)
    s = a * x + b * y + c * z
    f = np.exp(s)
    v2 = a * a + b * b + c * c
    exact = (v2 - 2 * s - s * s) * f
    assert np.max(np.abs(g.laplacian(f) - exact)) < 1e-9


def test_weighted_divergence_and_batches():
    g = SphereGrid(16, 32)
    Y = real_harmonic(g, 2, 1)
    assert np.allclose(g.weighted_divergence(Y, lambda q: np.ones_like(q)), g.laplacian(Y), atol=1e-12)
    # div(grad f)/|grad f| integrates to zero for any smooth coefficient
    div = g.weighted_divergence(Y, lambda q: 1 / np.sqrt(1 + q))
    assert abs(g.integrate(div)) < 1e-10
    batch = np.stack([Y, 2 * Y, real_harmonic(g, 1, 0)])
    lap = g.laplacian(batch)
    assert lap.shape == batch.shape
    assert np.allclose(lap[1], 2 * g.laplacian(Y))
    assert np.allclose(g.grad_sq(real_harmonic(g, 1, 0)), np.sin(g.T) ** 2, atol=1e-12)


def test_extend_is_an_involution():
    g = SphereGrid(8, 16)
    f = np.random.default_rng(0).normal(size=g.shape)
    f2 = g.extend(f)
    assert f2.shape == (16, 16)
    assert np.array_equal(g.restrict(f2), f)
    again = g.extend(g.restrict(np.roll(np.flip(f2, 0), -8, 1)))
    assert np.array_equal(g.restrict(again), g.restrict(np.roll(np.flip(f2, 0), -8, 1)))

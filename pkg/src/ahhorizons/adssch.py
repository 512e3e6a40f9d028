"""The anti-de Sitter--Schwarzschild family as conformal factors on H^3.

For a mass parameter ``M > 0`` the metric ``dr^2/(1+r^2-M/r) + r^2 dsigma^2``
is written as ``phi_M(rho)^4 g_H`` where ``sinh h(r) = 1/sinh(rho)`` and

    h(r) = int_r^inf dt / sqrt(t (t + t^3 - M)).

The outer chart ``rho >= rho(M)`` covers ``r >= a(M)``; the inner chart
``rho0(M) < rho < rho(M)`` is the reflected copy obtained from the
inversion ``x -> b^2 x / |x|^2`` of the ball model.  The inversion is an
isometry that preserves area radius, which gives the compact form

    phi(rho) = phi_outer(rho') * sqrt(sinh(rho') / sinh(rho))

with ``rho'`` the reflected outer radius.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import DomainError, RangeError
from .radial import (
    RadialProfile,
    find_root_monotone,
    gauss_legendre,
    quad_adaptive,
    rho_from_tau,
    t_from_rho,
    tau_from_rho,
)

__all__ = [
    "AdSSchwParams",
    "FamilyEvaluator",
    "make_params",
    "neck_radius",
    "h_of_r",
    "phi",
    "mean_curvature_level",
    "horizon_radii",
    "compare_family",
    "FamilyComparison",
]

_GL_X, _GL_W = gauss_legendre(16)


def neck_radius(M):
    """Unique positive root ``a`` of ``r + r^3 = M``."""
    M = float(M)
    if not M > 0:
        raise DomainError(f"mass parameter must be positive, got {M}")
    hi = min(M, M ** (1.0 / 3.0))
    a = find_root_monotone(lambda r: r + r ** 3 - M, (0.0, hi))
    for _ in range(3):
        a -= (a + a ** 3 - M) / (1.0 + 3.0 * a * a)
    return a


@dataclass(frozen=True)
class AdSSchwParams:
    """Derived constants of the family member with mass parameter ``M``."""

    M: float
    a: float
    hA: float
    rhoM: float
    b: float
    rho0: float

    def as_dict(self):
        return {k: getattr(self, k) for k in ("M", "a", "hA", "rhoM", "b", "rho0")}


class _HTable:
    """Composite Gauss--Legendre tables for ``h(r)``.

    Near the neck ``t = a cosh(z)^2`` turns the integrand into the smooth
    ``2/sqrt(t^2 + a t + 1 + a^2)``.  Beyond ``t_s`` the variable ``s = 1/t``
    is used and only the difference to the ``M = 0`` integrand
    (``h0 = arcsinh(1/r)``) is integrated, so that ``h - h0`` keeps full
    relative precision far out.
    """

    def __init__(self, M, a, panels=96):
        self.M = M
        self.a = a
        self.t_s = max(2.0 * a, a + 1.0)
        self.s_max = 1.0 / self.t_s
        self.z_max = math.acosh(math.sqrt(self.t_s / a))
        self.s_nodes = np.linspace(0.0, self.s_max, panels + 1)
        self.z_nodes = np.linspace(0.0, self.z_max, panels + 1)
        self.cum_s = np.concatenate(([0.0], np.cumsum(self._panel(self.G, self.s_nodes[:-1], self.s_nodes[1:]))))
        # cumulative from the top: cum_z[k] = int_{z_k}^{z_max}
        pz = self._panel(self.K, self.z_nodes[:-1], self.z_nodes[1:])
        self.cum_z = np.concatenate((np.cumsum(pz[::-1])[::-1], [0.0]))
        self.D_s = self.cum_s[-1]
        self.h_s = math.asinh(self.s_max) + self.D_s
        self.h_a = self.h_s + self.cum_z[0]

    @staticmethod
    def _panel(fn, lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        width = hi - lo
        x = lo[..., None] + width[..., None] * _GL_X
        return width * np.sum(fn(x) * _GL_W, axis=-1)

    def G(self, s):
        """Integrand of ``h - arcsinh(1/r)`` in ``s = 1/t``."""
        M = self.M
        s2 = s * s
        alpha = np.sqrt(np.maximum(1.0 + s2 - M * s2 * s, 0.0))
        beta = np.sqrt(1.0 + s2)
        return M * s2 * s / (alpha * beta * (alpha + beta))

    def K(self, z):
        a = self.a
        t = a * np.cosh(z) ** 2
        return 2.0 / np.sqrt(t * t + a * t + 1.0 + a * a)

    def alpha(self, s):
        s2 = s * s
        return np.sqrt(np.maximum(1.0 + s2 - self.M * s2 * s, 0.0))

    def D(self, s):
        """``h(1/s) - arcsinh(s)`` for ``0 <= s <= s_max``."""
        s = np.asarray(s, dtype=float)
        k = np.clip(np.searchsorted(self.s_nodes, s, side="right") - 1, 0, len(self.s_nodes) - 2)
        return self.cum_s[k] + self._panel(self.G, self.s_nodes[k], s)

    def I(self, z):
        """``int_z^{z_max} K``."""
        z = np.asarray(z, dtype=float)
        k = np.clip(np.searchsorted(self.z_nodes, z, side="right") - 1, 0, len(self.z_nodes) - 2)
        return self.cum_z[k + 1] + self._panel(self.K, z, self.z_nodes[k + 1])

    def h(self, r):
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        far = r >= self.t_s
        if np.any(far):
            s = 1.0 / r[far]
            out[far] = np.arcsinh(s) + self.D(s)
        near = ~far
        if np.any(near):
            z = np.arccosh(np.sqrt(np.maximum(r[near] / self.a, 1.0)))
            out[near] = self.h_s + self.I(z)
        return out

    def invert(self, hstar):
        """Solve ``h(r) = hstar``.

        Returns ``(r, E)`` with ``E = r sinh(hstar) - 1`` evaluated without
        cancellation.
        """
        hstar = np.asarray(hstar, dtype=float)
        r = np.empty_like(hstar)
        E = np.empty_like(hstar)
        far = hstar <= self.h_s
        if np.any(far):
            hs = hstar[far]
            lo = np.zeros_like(hs)
            hi = np.minimum(np.sinh(hs), self.s_max)
            s = hi.copy()
            for _ in range(100):
                F = np.arcsinh(s) + self.D(s) - hs
                lo = np.where(F < 0, s, lo)
                hi = np.where(F > 0, s, hi)
                dF = 1.0 / np.sqrt(1.0 + s * s) + self.G(s)
                step = F / dF
                new = s - step
                bad = (new <= lo) | (new >= hi)
                new = np.where(bad, 0.5 * (lo + hi), new)
                done = np.abs(new - s) <= 1e-17 + 4e-16 * np.abs(s)
                s = new
                if np.all(done):
                    break
            D = self.D(s)
            rr = 1.0 / s
            r[far] = rr
            E[far] = 2.0 * np.sinh(D / 2.0) ** 2 + np.sqrt(rr * rr + 1.0) * np.sinh(D)
        near = ~far
        if np.any(near):
            hs = hstar[near]
            if np.any(hs > self.h_a * (1 + 1e-14)):
                raise DomainError("radius inside the neck")
            lo = np.zeros_like(hs)
            hi = np.full_like(hs, self.z_max)
            z = 0.5 * (lo + hi)
            for _ in range(200):
                F = self.h_s + self.I(z) - hs  # decreasing in z
                lo = np.where(F > 0, z, lo)
                hi = np.where(F < 0, z, hi)
                dF = -self.K(z)
                new = z - F / dF
                bad = (new <= lo) | (new >= hi)
                new = np.where(bad, 0.5 * (lo + hi), new)
                done = np.abs(new - z) <= 1e-16 * (1.0 + np.abs(z))
                z = new
                if np.all(done):
                    break
            rr = self.a * np.cosh(z) ** 2
            r[near] = rr
            E[near] = rr * np.sinh(hs) - 1.0
        return r, E


def make_params(M):
    """Derived constants ``a, h(a), rho(M), b(M), rho0(M)`` for mass parameter ``M``."""
    M = float(M)
    a = neck_radius(M)
    table = _HTable(M, a)
    hA = float(table.h_a)
    rhoM = math.log(1.0 / math.tanh(hA / 2.0))
    b = math.tanh(rhoM / 2.0)  # (e^rho - 1)/(e^rho + 1)
    rho0 = float(rho_from_tau(b * b))
    return AdSSchwParams(M=M, a=a, hA=hA, rhoM=rhoM, b=b, rho0=rho0)


def h_of_r(params, r, tol=1e-12):
    """``h(r)`` by adaptive quadrature (independent of the evaluator tables).

    Uses ``t = a + w^2`` so the integrand is smooth down to the neck.
    """
    r = float(r)
    a = params.a
    if r < a:
        raise DomainError(f"r = {r} lies inside the neck a = {a}")

    def integrand(w):
        t = a + w * w
        return 2.0 / math.sqrt(t * (t * t + a * t + 1.0 + a * a))

    return quad_adaptive(integrand, math.sqrt(r - a), math.inf, tol=tol)


class FamilyEvaluator:
    """Evaluates ``phi_M`` and its first two ``rho``-derivatives on both charts."""

    def __init__(self, params):
        if not isinstance(params, AdSSchwParams):
            params = make_params(params)
        self.params = params
        self.table = _HTable(params.M, params.a)

    @property
    def M(self):
        return self.params.M

    # -- outer chart ------------------------------------------------------
    def _outer(self, rho):
        """``(phi, phi_rho, phi_rhorho, r, E)`` for ``rho >= rho(M)``."""
        M = self.params.M
        rho = np.asarray(rho, dtype=float)
        hstar = -t_from_rho(rho)
        r, E = self.table.invert(hstar)
        S = 1.0 / np.sinh(rho)
        C = 1.0 / np.tanh(rho)
        q = r * r * self.table.alpha(1.0 / r)
        ph = np.sqrt(1.0 + E)
        P = -S * S * q + r * S * C
        P_rho = 3.0 * S * S * C * q - r * S * (S * S + C * C) - S ** 3 * (2.0 * r + 4.0 * r ** 3 - M) / 2.0
        d1 = -0.5 * P / ph
        d2 = -0.5 * P_rho / ph - 0.25 * P * P / ph ** 3
        return ph, d1, d2, r, E

    def reflect(self, rho):
        """Outer radius ``rho'`` paired with an inner-chart ``rho`` by the inversion."""
        b = self.params.b
        return rho_from_tau(b * b / tau_from_rho(rho))

    def _inner(self, rho):
        rho = np.asarray(rho, dtype=float)
        rp = self.reflect(rho)
        ph, d1, d2, r, E = self._outer(rp)
        sp, s = np.sinh(rp), np.sinh(rho)
        cp, c = np.cosh(rp), np.cosh(rho)
        k = np.sqrt(sp / s)
        rp1 = -sp / s
        rp2 = sp * (cp + c) / s ** 2
        L1 = -(cp + c) / (2.0 * s)
        L2 = cp * (cp + c) / (2.0 * s ** 2)
        f = ph * k
        f1 = k * (d1 * rp1 + ph * L1)
        f2 = k * (d2 * rp1 ** 2 + d1 * rp2 + 2.0 * d1 * rp1 * L1 + ph * (L2 + L1 * L1))
        return f, f1, f2, r, rp

    def _split(self, rho):
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        if np.any(rho <= self.params.rho0):
            raise DomainError(f"rho must exceed rho0(M) = {self.params.rho0}")
        return rho, rho >= self.params.rhoM

    def evaluate(self, rho):
        """``(phi, phi_rho, phi_rhorho)`` as arrays."""
        rho, outer = self._split(rho)
        out = np.empty((3, rho.size))
        if np.any(outer):
            out[:, outer] = self._outer(rho[outer])[:3]
        inner = ~outer
        if np.any(inner):
            out[:, inner] = self._inner(rho[inner])[:3]
        return out

    def phi(self, rho, order=0):
        scalar = np.ndim(rho) == 0
        out = self.evaluate(rho)[order]
        return float(out[0]) if scalar else out

    def phi_minus_one(self, rho):
        """``phi - 1`` on the outer chart, free of cancellation."""
        scalar = np.ndim(rho) == 0
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        if np.any(rho < self.params.rhoM):
            raise DomainError("phi_minus_one is defined on the outer chart")
        E = self._outer(rho)[4]
        out = E / (1.0 + np.sqrt(1.0 + E))
        return float(out[0]) if scalar else out

    def area_radius(self, rho):
        """Area radius ``r`` of the level sphere (``phi^2 sinh(rho)``)."""
        scalar = np.ndim(rho) == 0
        rho, outer = self._split(rho)
        out = np.empty(rho.size)
        if np.any(outer):
            out[outer] = self._outer(rho[outer])[3]
        if np.any(~outer):
            out[~outer] = self._inner(rho[~outer])[3]
        return float(out[0]) if scalar else out

    def rho_of_area_radius(self, r, inner=False):
        """Outer (or reflected inner) ``rho`` of the sphere with area radius ``r``."""
        r = np.asarray(r, dtype=float)
        if np.any(r < self.params.a):
            raise DomainError("area radius below the neck")
        h = self.table.h(r)
        rho = -np.log(np.tanh(h / 2.0))
        if inner:
            b = self.params.b
            rho = rho_from_tau(b * b / tau_from_rho(rho))
        return rho

    def mean_curvature(self, rho):
        """Mean curvature of the level sphere, normal along ``+d/drho``."""
        scalar = np.ndim(rho) == 0
        rho, outer = self._split(rho)
        M = self.params.M
        r = np.empty(rho.size)
        if np.any(outer):
            r[outer] = self._outer(rho[outer])[3]
        if np.any(~outer):
            r[~outer] = self._inner(rho[~outer])[3]
        H = 2.0 * np.sqrt(np.maximum(1.0 + r ** -2 - M * r ** -3, 0.0))
        H = np.where(outer, H, -H)
        return float(H[0]) if scalar else H

    def mean_curvature_direct(self, rho):
        """``phi^-2 (2 coth rho + 4 phi_rho/phi)``; cross-check of :meth:`mean_curvature`."""
        f, f1, _ = self.evaluate(rho)
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        return f ** -2 * (2.0 / np.tanh(rho) + 4.0 * f1 / f)

    def metric3_derivative(self, rho):
        """``d/drho log(phi (phi^4 - 1) sinh^2 rho)``."""
        f, f1, _ = self.evaluate(rho)
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        f4 = f ** 4
        return 2.0 / np.tanh(rho) + (5.0 * f4 - 1.0) / (f4 - 1.0) * f1 / f

    def profile(self, grid):
        """A :class:`RadialProfile` carrying exact ``phi``, ``phi_rho``, ``phi_rhorho`` samples."""
        grid = np.asarray(grid, dtype=float)
        f, f1, f2 = self.evaluate(grid)
        return RadialProfile(grid, f, (f1, f2))

    def default_grid(self, n, rho_max, margin=0.01):
        return np.linspace(self.params.rho0 + margin, rho_max, n)


def phi(evaluator, rho, derivative_order=0):
    if derivative_order not in (0, 1, 2):
        raise ValueError("derivative_order must be 0, 1 or 2")
    return evaluator.phi(rho, derivative_order)


def mean_curvature_level(evaluator, rho):
    return evaluator.mean_curvature(rho)


def horizon_radii(params, evaluator=None):
    """``(rho2', rho1, rho2)``: level spheres with ``H = -2, 0, +2``.

    ``H = 0`` exactly at the neck and ``H = 2`` exactly at area radius
    ``r = M``; ``rho2'`` is the reflection of ``rho2``.  Each root is then
    refined against :meth:`FamilyEvaluator.mean_curvature`.
    """
    ev = evaluator if evaluator is not None else FamilyEvaluator(params)
    rho1 = params.rhoM
    rho2 = float(ev.rho_of_area_radius(params.M))
    rho2p = float(ev.rho_of_area_radius(params.M, inner=True))

    def polish(target, guess, lo, hi):
        g = lambda x: ev.mean_curvature(x) - target
        w = 1e-6
        a_, b_ = max(lo, guess - w), min(hi, guess + w)
        try:
            return find_root_monotone(g, (a_, b_), tol=1e-14)
        except Exception:
            return guess

    rho2 = polish(2.0, rho2, rho1, rho2 + 1.0)
    rho2p = polish(-2.0, rho2p, params.rho0 + 1e-9, rho1)
    return rho2p, rho1, rho2


@dataclass
class FamilyComparison:
    ordered: bool
    max_gap: float
    min_gap: float
    gaps: np.ndarray
    decay_slope: float


def compare_family(M1, M2, grid, fit_window=(5.0, 9.0)):
    """Check ``phi_M1 > phi_M2`` on ``grid`` (``M1 >= M2``) and fit the gap decay rate."""
    e1 = M1 if isinstance(M1, FamilyEvaluator) else FamilyEvaluator(make_params(M1))
    e2 = M2 if isinstance(M2, FamilyEvaluator) else FamilyEvaluator(make_params(M2))
    if e1.M < e2.M:
        raise DomainError("compare_family expects M1 >= M2")
    grid = np.asarray(grid, dtype=float)
    if np.any(grid <= max(e1.params.rho0, e2.params.rho0)):
        raise RangeError("grid leaves the common domain")
    outer = grid >= max(e1.params.rhoM, e2.params.rhoM)
    gaps = np.empty_like(grid)
    gaps[outer] = e1.phi_minus_one(grid[outer]) - e2.phi_minus_one(grid[outer])
    gaps[~outer] = e1.phi(grid[~outer]) - e2.phi(grid[~outer])
    slope = math.nan
    win = (grid >= fit_window[0]) & (grid <= fit_window[1]) & (gaps > 0)
    if np.count_nonzero(win) >= 2:
        slope = float(np.polyfit(grid[win], np.log(gaps[win]), 1)[0])
    return FamilyComparison(
        ordered=bool(np.all(gaps > 0)),
        max_gap=float(gaps.max()),
        min_gap=float(gaps.min()),
        gaps=gaps,
        decay_slope=slope,
    )

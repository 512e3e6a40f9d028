"""Radial charts, profiles, operators, quadrature and root finding.

Three charts describe a point of the hyperbolic ball at distance ``rho``
from the centre:

* ``rho`` -- hyperbolic distance,
* ``tau`` -- Euclidean radius in the Poincare ball, ``tau = tanh(rho/2)``,
* ``t``   -- collar coordinate ``t = log(tau)``, with ``t -> 0-`` at the
  conformal boundary.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import integrate, interpolate, optimize

from .errors import (
    BracketError,
    DomainError,
    InvalidConformalFactorError,
    QuadratureError,
    RangeError,
)

__all__ = [
    "ChartPoint",
    "convert",
    "rho_from_tau",
    "tau_from_rho",
    "t_from_rho",
    "rho_from_t",
    "RadialProfile",
    "radial_laplacian",
    "laplacian_from_derivatives",
    "scalar_curvature_radial",
    "scalar_curvature_from_derivatives",
    "quad_adaptive",
    "find_root_monotone",
    "gauss_legendre",
]

QUAD_TOL = 1e-12
ROOT_TOL = 1e-12


# -- charts ---------------------------------------------------------------

def tau_from_rho(rho):
    return np.tanh(np.asarray(rho, dtype=float) / 2.0)


def rho_from_tau(tau):
    return 2.0 * np.arctanh(np.asarray(tau, dtype=float))


def t_from_rho(rho):
    """``log(tanh(rho/2))`` without cancellation for large ``rho``."""
    rho = np.asarray(rho, dtype=float)
    with np.errstate(divide="ignore"):
        q = np.exp(-rho)
        return np.where(rho > 1.0, np.log1p(-2.0 * q / (1.0 + q)), np.log(np.tanh(rho / 2.0)))


def rho_from_t(t):
    """Inverse of :func:`t_from_rho`; accurate as ``t -> 0-``."""
    t = np.asarray(t, dtype=float)
    return -np.log(np.tanh(-t / 2.0))


@dataclass(frozen=True)
class ChartPoint:
    """A radial position expressed in all three charts."""

    rho: float
    tau: float
    t: float

    @property
    def is_center(self):
        return self.rho == 0.0


def convert(*, rho=None, tau=None, t=None):
    """Return the :class:`ChartPoint` for a position given in exactly one chart.

    The centre ``rho = 0`` has ``t = -inf``; collar operations reject it.
    """
    given = [v is not None for v in (rho, tau, t)]
    if sum(given) != 1:
        raise DomainError("exactly one of rho, tau, t must be given")
    if rho is not None:
        rho = float(rho)
        if not rho >= 0.0:
            raise DomainError(f"rho must be >= 0, got {rho}")
        if math.isinf(rho):
            raise DomainError("rho must be finite")
        return ChartPoint(rho, float(tau_from_rho(rho)), float(t_from_rho(rho)) if rho > 0 else -math.inf)
    if tau is not None:
        tau = float(tau)
        if not 0.0 <= tau < 1.0:
            raise DomainError(f"tau must lie in [0, 1), got {tau}")
        if tau == 0.0:
            return ChartPoint(0.0, 0.0, -math.inf)
        return ChartPoint(float(rho_from_tau(tau)), tau, math.log(tau))
    t = float(t)
    if not t < 0.0:
        # t = 0 is the conformal boundary itself, which is not a point of the ball
        raise DomainError(f"t must be < 0, got {t}")
    if math.isinf(t):
        return ChartPoint(0.0, 0.0, -math.inf)
    return ChartPoint(float(rho_from_t(t)), math.exp(t), t)


# -- profiles -------------------------------------------------------------

class RadialProfile:
    """A sampled function of ``rho`` with derivative access up to order 3.

    Without derivative samples the interpolant is a quintic not-a-knot
    spline.  When first and second derivative samples are supplied the
    interpolant is the piecewise quintic Hermite polynomial through
    ``(f, f', f'')``; it is C^2 across nodes, which keeps junctions of
    glued profiles sharp.
    """

    def __init__(self, grid, values, derivatives=()):
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape:
            raise ValueError("grid and values must be 1-D arrays of equal length")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if grid[0] < 0:
            raise ValueError("grid must satisfy rho >= 0")
        self.grid = grid
        self.values = values
        self.derivatives = tuple(np.asarray(d, dtype=float) for d in derivatives)
        if self.derivatives:
            data = np.column_stack((values,) + self.derivatives)
            self._interp = interpolate.BPoly.from_derivatives(grid, data)
            self.order = 2 * data.shape[1] - 1
        else:
            k = min(5, len(grid) - 1)
            if k % 2 == 0:
                k -= 1
            self._interp = interpolate.make_interp_spline(grid, values, k=k)
            self.order = k
        self._cache = {0: self._interp}

    @property
    def lo(self):
        return self.grid[0]

    @property
    def hi(self):
        return self.grid[-1]

    def _check(self, rho):
        rho = np.asarray(rho, dtype=float)
        slack = 1e-12 * max(1.0, abs(self.hi))
        if np.any(rho < self.lo - slack) or np.any(rho > self.hi + slack):
            raise RangeError(f"rho outside profile range [{self.lo}, {self.hi}]")
        return np.clip(rho, self.lo, self.hi)

    def __call__(self, rho, order=0):
        if order not in (0, 1, 2, 3):
            raise ValueError("derivative order must be 0..3")
        rho = self._check(rho)
        if order not in self._cache:
            self._cache[order] = self._interp.derivative(order)
        out = self._cache[order](rho)
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self, rho, order=1):
        return self(rho, order)

    def with_values(self, values, derivatives=()):
        return RadialProfile(self.grid, values, derivatives)


def laplacian_from_derivatives(rho, d1, d2):
    """``f'' + 2 coth(rho) f'`` from derivative samples (``rho > 0``)."""
    rho = np.asarray(rho, dtype=float)
    return d2 + 2.0 * d1 / np.tanh(rho)


def scalar_curvature_from_derivatives(f, lap):
    """Scalar curvature of ``f^4 g_H`` given ``f`` and its hyperbolic Laplacian."""
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise InvalidConformalFactorError("conformal factor must be positive")
    return f ** -5 * (-6.0 * f - 8.0 * lap)


def radial_laplacian(f, rho, at_origin=False):
    """Hyperbolic Laplacian of a radial profile.

    ``at_origin=True`` returns the even-extension limit ``3 f''(0)``, the
    only admissible value at the pole where ``coth`` is singular.
    """
    if at_origin:
        return 3.0 * f(0.0, 2) if np.isscalar(rho) or np.ndim(rho) == 0 else 3.0 * f(np.zeros_like(rho), 2)
    r = np.asarray(rho, dtype=float)
    if np.any(r <= f.lo) or np.any(r >= f.hi) or np.any(r <= 0):
        raise RangeError("radial_laplacian needs rho strictly inside the grid and > 0")
    out = laplacian_from_derivatives(r, f(r, 1), f(r, 2))
    return float(out) if np.ndim(out) == 0 else out


def scalar_curvature_radial(f, rho, at_origin=False):
    """Scalar curvature of ``f(rho)^4 g_H`` (hyperbolic background, ``R = -6`` for ``f = 1``)."""
    value = f(0.0 if at_origin else rho)
    lap = radial_laplacian(f, rho, at_origin=at_origin)
    out = scalar_curvature_from_derivatives(value, lap)
    return float(out) if np.ndim(out) == 0 else out


# -- quadrature and roots -------------------------------------------------

def gauss_legendre(n):
    """Nodes and weights of the ``n``-point rule on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _quad(fn, a, b, tol, limit):
    value, err, info = integrate.quad(fn, a, b, epsabs=tol, epsrel=0.0, limit=limit, full_output=1)[:3]
    return value, err


def quad_adaptive(integrand, lower, upper, tol=QUAD_TOL, singular_lower=False, limit=400):
    """Adaptive quadrature of ``integrand`` over ``[lower, upper]``.

    ``upper`` may be ``inf``; it is mapped to ``(0, 1)`` by
    ``t = lower + s/(1-s)``.  With ``singular_lower`` an inverse square-root
    singularity at ``lower`` is removed by ``t = lower + s**2``.
    Raises :class:`QuadratureError` when the error estimate exceeds ``tol``.
    """
    a = float(lower)
    b = float(upper)
    if not b > a:
        if b == a:
            return 0.0
        raise DomainError("upper limit must exceed lower limit")

    pieces = []
    if singular_lower:
        split = b if math.isfinite(b) else a + 1.0
        pieces.append((lambda s: 2.0 * s * integrand(a + s * s), 0.0, math.sqrt(split - a)))
        start = split
    else:
        start = a
    if not math.isfinite(b):
        def mapped(s, start=start):
            if s >= 1.0:
                return 0.0
            one = 1.0 - s
            return integrand(start + s / one) / (one * one)
        pieces.append((mapped, 0.0, 1.0))
    elif not singular_lower:
        pieces.append((integrand, a, b))

    total = 0.0
    err_total = 0.0
    share = tol / len(pieces)
    for fn, lo, hi in pieces:
        value, err = _quad(fn, lo, hi, share, limit)
        total += value
        err_total += err
    if not math.isfinite(total) or err_total > tol:
        raise QuadratureError(
            f"quadrature error estimate {err_total:.3e} exceeds tolerance {tol:.1e}", estimate=err_total
        )
    return total


def find_root_monotone(g, bracket, tol=ROOT_TOL):
    """Root of a continuous monotone ``g`` inside ``bracket = (lo, hi)``.

    Brent's method keeps the bracket at every step, so convergence is
    guaranteed once a sign change is present.
    """
    lo, hi = map(float, bracket)
    glo, ghi = g(lo), g(hi)
    if glo == 0.0:
        return lo
    if ghi == 0.0:
        return hi
    if glo * ghi > 0:
        raise BracketError(f"no sign change on [{lo}, {hi}]: g = {glo:.3e}, {ghi:.3e}")
    return optimize.brentq(g, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500)

"""Collar gauge and boundary mass of radial conformally hyperbolic metrics.

For ``g = u^4 g_H`` on the Poincare ball write ``r = e^t`` and
``varrho = (1 - r^2) / (2 u^2)``, so that ``g = varrho^{-2} g_0`` with
``g_0`` Euclidean.  The gauge function ``theta`` solves

    varrho |grad_0 theta|^2 + 2 theta <grad_0 theta, grad_0 varrho>
        = theta^4 varrho + theta^2 a,        a varrho = 1 - |grad_0 varrho|^2,

with ``theta = 1`` on the boundary, and ``sinh f = theta varrho`` gives the
geodesic defining function.  For radial ``u`` this is an ODE in ``t``; the
branch regular at ``varrho = 0`` is

    theta_t = -e^{2t} (theta^4 varrho + theta^2 a) / (x + sqrt(x^2 + y)),
    x = -theta varrho_t,  y = varrho e^{2t} (theta^4 varrho + theta^2 a).

Derivatives at ``t = 0`` are computed with truncated power series built from
the fitted boundary expansion of ``u``; the ODE itself is integrated with
DOP853 to reconstruct the metric in the new gauge.

The chain gives ``theta_ttt = -1 + (8/3) u_ttt`` and ``f_tt = 0`` at the
boundary, so the ``t^3/3`` coefficient of the level-set metric is
``eta = -(theta_ttt + 1) h = -(8/3) u_ttt h`` with trace
``-(16/3) u_ttt``.  For the AdS--Schwarzschild family
(``u_ttt = -3M/8``) this is ``2M`` and the mass is ``M/2``, which agrees
with a direct expansion of the family's geodesic defining function.  The
quarter rule ``tr = -u_ttt/4`` is kept as :attr:`MassResult.trace_quarter`
for comparison only.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ExtractionError, GaugeError
from .radial import rho_from_t

__all__ = [
    "Series",
    "CollarFunction",
    "collar_function",
    "CollarFit",
    "CollarExpansion",
    "MassResult",
    "extract_u_ttt",
    "collar_gauge",
    "wang_mass",
    "mass_difference_constant",
    "DEFAULT_WINDOW",
    "NESTED_WINDOWS",
]

DEFAULT_WINDOW = (-0.2, -0.02)
NESTED_WINDOWS = ((-0.2, -0.02), (-0.15, -0.02), (-0.1, -0.02))
SERIES_ORDER = 8
TRACE_PER_U_TTT = -16.0 / 3.0
QUARTER_RULE = -0.25


# -- truncated power series -------------------------------------------------

class Series:
    """Power series in ``t`` truncated after ``t^order``."""

    def __init__(self, coeffs, order=SERIES_ORDER):
        c = np.zeros(order + 1)
        coeffs = np.asarray(coeffs, dtype=float)[: order + 1]
        c[: coeffs.size] = coeffs
        self.c = c
        self.order = order

    @classmethod
    def const(cls, value, order=SERIES_ORDER):
        return cls([value], order)

    @classmethod
    def exp(cls, k, order=SERIES_ORDER):
        """``e^{k t}``."""
        return cls([k ** n / math.factorial(n) for n in range(order + 1)], order)

    def _wrap(self, other):
        return other if isinstance(other, Series) else Series.const(other, self.order)

    def __add__(self, other):
        return Series(self.c + self._wrap(other).c, self.order)

    __radd__ = __add__

    def __neg__(self):
        return Series(-self.c, self.order)

    def __sub__(self, other):
        return Series(self.c - self._wrap(other).c, self.order)

    def __rsub__(self, other):
        return self._wrap(other) - self

    def __mul__(self, other):
        if not isinstance(other, Series):
            return Series(self.c * other, self.order)
        return Series(np.convolve(self.c, other.c)[: self.order + 1], self.order)

    __rmul__ = __mul__

    def __pow__(self, n):
        out = Series.const(1.0, self.order)
        for _ in range(n):
            out = out * self
        return out

    def reciprocal(self):
        c0 = self.c[0]
        if c0 == 0:
            raise ZeroDivisionError("series has no constant term")
        out = np.zeros(self.order + 1)
        out[0] = 1.0 / c0
        for n in range(1, self.order + 1):
            out[n] = -np.dot(self.c[1: n + 1], out[n - 1:: -1][:n]) / c0
        return Series(out, self.order)

    def __truediv__(self, other):
        if not isinstance(other, Series):
            return Series(self.c / other, self.order)
        return self * other.reciprocal()

    def sqrt(self):
        c0 = self.c[0]
        if c0 <= 0:
            raise ValueError("sqrt needs a positive constant term")
        out = np.zeros(self.order + 1)
        out[0] = math.sqrt(c0)
        for n in range(1, self.order + 1):
            s = np.dot(out[1:n], out[n - 1:0:-1]) if n > 1 else 0.0
            out[n] = (self.c[n] - s) / (2.0 * out[0])
        return Series(out, self.order)

    def shift_down(self):
        """Divide by ``t``; the constant term must vanish."""
        if abs(self.c[0]) > 1e-13 * max(1.0, np.max(np.abs(self.c))):
            raise ValueError("series is not divisible by t")
        return Series(np.append(self.c[1:], 0.0), self.order)

    def derivative(self):
        n = np.arange(1, self.order + 1)
        return Series(np.append(self.c[1:] * n, 0.0), self.order)

    def integral(self):
        n = np.arange(1, self.order + 1)
        return Series(np.concatenate(([0.0], self.c[:-1] / n)), self.order)

    def arcsinh(self):
        """``arcsinh`` of a series without constant term."""
        if self.c[0] != 0:
            raise ValueError("arcsinh composition needs a vanishing constant term")
        out = Series.const(0.0, self.order)
        power = self
        k = 0
        while 2 * k + 1 <= self.order:
            coef = (-1) ** k * math.factorial(2 * k) / (4 ** k * math.factorial(k) ** 2 * (2 * k + 1))
            out = out + power * coef
            power = power * self * self
            k += 1
        return out

    def taylor(self, n):
        """``d^n/dt^n`` at 0."""
        return float(self.c[n] * math.factorial(n))

    def __call__(self, t):
        return np.polynomial.polynomial.polyval(t, self.c)


# -- radial functions in the collar chart -----------------------------------

class CollarFunction:
    """``u - 1`` and ``u_t`` as functions of the collar coordinate ``t``."""

    def __init__(self, minus_one_t, dt=None):
        self._m = minus_one_t
        self._dt = dt

    def minus_one(self, t):
        return np.asarray(self._m(np.asarray(t, dtype=float)), dtype=float)

    def u(self, t):
        return 1.0 + self.minus_one(t)

    def u_t(self, t):
        t = np.asarray(t, dtype=float)
        if self._dt is not None:
            return np.asarray(self._dt(t), dtype=float)
        h = 1e-5 * np.maximum(1.0, np.abs(t))
        return (self.minus_one(t + h) - self.minus_one(t - h)) / (2 * h)


def collar_function(source):
    """Adapt a radial source to the collar chart.

    Accepts a :class:`CollarFunction`, a family evaluator (anything with
    ``evaluate`` and ``phi_minus_one``), an object with ``phi_minus_one``
    and a ``profile()``/``phi_eps`` spline, or a plain callable of ``t``.
    Uses ``d rho / d t = -1/sinh t``.
    """
    if isinstance(source, CollarFunction):
        return source
    if hasattr(source, "evaluate") and hasattr(source, "phi_minus_one"):
        def dt(t):
            return source.evaluate(rho_from_t(t))[1] * (-1.0 / np.sinh(t))
        return CollarFunction(lambda t: source.phi_minus_one(rho_from_t(t)), dt)
    if hasattr(source, "phi_minus_one"):
        prof = source.phi_eps if hasattr(source, "phi_eps") else source.profile()

        def dt(t):
            return prof(rho_from_t(t), 1) * (-1.0 / np.sinh(t))
        return CollarFunction(lambda t: prof(rho_from_t(t)), dt)
    if callable(source):
        return CollarFunction(source)
    raise TypeError(f"cannot build a collar function from {type(source).__name__}")


# -- extraction of u_ttt -----------------------------------------------------

@dataclass
class CollarFit:
    u_ttt: float
    coeffs: tuple
    residual: float
    sensitivity: float
    per_window: list
    free_coeffs: tuple = ()

    @property
    def boundary_value(self):
        return 1.0 + self.free_coeffs[0] if self.free_coeffs else 1.0

    @property
    def u_t(self):
        return self.free_coeffs[1] if self.free_coeffs else 0.0

    @property
    def u_tt(self):
        return 2.0 * self.free_coeffs[2] if self.free_coeffs else 0.0


def _fit_window(u, window, nodes):
    t = np.linspace(window[0], window[1], nodes)
    y = u.minus_one(t)
    A = np.column_stack([t ** 3, t ** 4, t ** 5])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    scale = max(np.max(np.abs(y)), 1e-300)
    resid = float(np.max(np.abs(A @ coef - y)) / scale) if np.any(y) else 0.0
    return coef, resid


def extract_u_ttt(u, window=DEFAULT_WINDOW, nested=NESTED_WINDOWS, nodes=241, max_residual=1e-3,
                  max_sensitivity=0.05, abs_floor=1e-12):
    """Fit ``u = 1 + c3 t^3 + c4 t^4 + c5 t^5`` near the boundary; ``u_ttt = 6 c3``.

    ``u_t`` and ``u_tt`` vanish at the boundary under the ``e^{-3 rho}``
    decay, so the constant, linear and quadratic terms are constrained away.
    The window sensitivity is the largest relative spread of ``u_ttt``
    across the nested windows.
    """
    u = collar_function(u)
    coef, resid = _fit_window(u, window, nodes)
    value = 6.0 * coef[0]
    per = []
    for w in nested:
        c, _ = _fit_window(u, w, nodes)
        per.append(6.0 * c[0])
    # unconstrained quintic on the same window, to confirm u_t = u_tt = 0
    t = np.linspace(window[0], window[1], nodes)
    free = np.polynomial.polynomial.polyfit(t, u.minus_one(t), 5)
    spread = max(abs(p - value) for p in per) if per else 0.0
    sens = spread / max(abs(value), abs_floor) if spread > abs_floor else 0.0
    if resid > max_residual:
        raise ExtractionError(f"collar fit residual {resid:.2e} above {max_residual:.0e}")
    if sens > max_sensitivity:
        raise ExtractionError(f"u_ttt window sensitivity {sens:.2%} above {max_sensitivity:.0%}")
    return CollarFit(u_ttt=float(value), coeffs=tuple(float(c) for c in coef), residual=resid,
                     sensitivity=float(sens), per_window=per, free_coeffs=tuple(float(c) for c in free))


# -- gauge ------------------------------------------------------------------

def _theta_rhs(t, theta, varrho, varrho_t, a):
    e2 = math.exp(2 * t) if np.ndim(t) == 0 else np.exp(2 * t)
    rhs = theta ** 4 * varrho + theta ** 2 * a
    x = -theta * varrho_t
    y = varrho * e2 * rhs
    return -e2 * rhs / (x + np.sqrt(x * x + y))


def _series_chain(coeffs, order=SERIES_ORDER):
    """``varrho``, ``a``, ``theta`` and ``f`` as series from ``u``'s expansion."""
    u = Series(coeffs, order)
    one_minus_e2 = 1.0 - Series.exp(2.0, order)
    varrho = one_minus_e2 / (2.0 * u * u)
    vt = varrho.derivative()
    em2 = Series.exp(-2.0, order)
    a = (1.0 - em2 * vt * vt).shift_down() / varrho.shift_down()
    e2 = Series.exp(2.0, order)
    theta = Series.const(1.0, order)
    for _ in range(order + 2):
        rhs = theta ** 4 * varrho + theta * theta * a
        x = -theta * vt
        y = varrho * e2 * rhs
        theta_t = -(e2 * rhs) / (x + (x * x + y).sqrt())
        theta = 1.0 + theta_t.integral()
    f = (theta * varrho).arcsinh()
    return varrho, a, theta, f


@dataclass
class CollarExpansion:
    u_boundary_value: float
    u_t: float
    u_tt: float
    u_ttt: float
    theta_derivs: tuple
    f_derivs: tuple
    varrho_derivs: tuple
    a_derivs: tuple
    trace_coeff: float
    trace_eta: float
    mass: float
    fit: CollarFit = None
    gauge_checks: dict = field(default_factory=dict)
    gamma_K: float = math.nan


@dataclass
class MassResult:
    trace: float
    mass: float
    second_integral: tuple
    u_ttt: float
    fit: CollarFit = None

    @property
    def trace_quarter(self):
        """``-u_ttt / 4``, the quarter rule (inconsistent with the gauge chain)."""
        return QUARTER_RULE * self.u_ttt

    @property
    def mass_quarter(self):
        return abs(self.trace_quarter) / 4.0


def _second_integral(trace, n=32):
    """``int_{S^2} tr * x dA`` for a constant trace (Gauss--Legendre x trapezoid)."""
    z, wz = np.polynomial.legendre.leggauss(n)
    phi = np.linspace(0.0, 2 * np.pi, 2 * n, endpoint=False)
    Z, P = np.meshgrid(z, phi, indexing="ij")
    s = np.sqrt(1 - Z ** 2)
    W = np.outer(wz, np.full(phi.size, 2 * np.pi / phi.size))
    return tuple(float(np.sum(trace * c * W)) for c in (s * np.cos(P), s * np.sin(P), Z))


def wang_mass(u, fit=None, **fit_kw):
    """Mass of a radial metric from ``tr = -(16/3) u_ttt``; ``mass = |tr| / 4``.

    For radial data the boundary integrand is constant, so the first-moment
    integral vanishes and the square-root bracket of the mass collapses to
    ``|int tr dA| / (16 pi) = |tr| / 4``.
    """
    fit = fit or extract_u_ttt(u, **fit_kw)
    trace = TRACE_PER_U_TTT * fit.u_ttt
    return MassResult(trace=trace, mass=abs(trace) / 4.0, second_integral=_second_integral(trace),
                      u_ttt=fit.u_ttt, fit=fit)


def mass_difference_constant():
    """``C_1`` with ``|m_1 - m_2| <= C_1 sup |u_1 - u_2| e^{3 rho}``.

    ``e^{-3 rho} = (-tanh(t/2))^3 = -t^3/8 + O(t^5)``, so a difference
    ``delta e^{-3 rho}`` moves ``u_ttt`` by ``3 delta / 4`` and the mass by
    ``(16/3)(3/4)/4 delta = delta``.
    """
    return abs(TRACE_PER_U_TTT) * 0.75 / 4.0


def collar_gauge(u, fit=None, t_start=-0.02, t_end=-0.5, samples=9, rtol=1e-12, atol=1e-14, **fit_kw):
    """Solve the gauge equation and assemble the boundary expansion.

    Boundary derivatives come from the series chain seeded with the fitted
    ``u``.  The ODE is integrated from ``t_start`` (initialized from the
    series) to ``t_end``; at sample points the reconstruction checks
    ``|d f|_{g_hat} = 1`` and ``g = sinh^{-2} f (df^2 + g_f)``.
    """
    u = collar_function(u)
    fit = fit or extract_u_ttt(u, **fit_kw)
    c3, c4, c5 = fit.coeffs
    varrho_s, a_s, theta_s, f_s = _series_chain([1.0, 0.0, 0.0, c3, c4, c5])
    theta_d = tuple(theta_s.taylor(k) for k in (1, 2, 3))
    f_d = tuple(f_s.taylor(k) for k in (1, 2, 3))
    # eta = -(1/2)(theta^2 e^{2t} - 1)_ttt h, and tr_h h = 2
    e2 = Series.exp(2.0)
    gamma_dev = theta_s * theta_s * e2 - 1.0
    trace_eta = -gamma_dev.taylor(3)
    trace = TRACE_PER_U_TTT * fit.u_ttt

    def varrho_fn(t):
        uu = u.u(t)
        return -np.expm1(2 * t) / (2 * uu * uu)

    def varrho_t_fn(t):
        uu = u.u(t)
        return -np.exp(2 * t) / uu ** 2 - (-np.expm1(2 * t)) * u.u_t(t) / uu ** 3

    def a_fn(t):
        v = varrho_fn(t)
        vt = varrho_t_fn(t)
        return (1.0 - np.exp(-2 * t) * vt * vt) / v

    def rhs(t, y):
        return [_theta_rhs(t, y[0], varrho_fn(t), varrho_t_fn(t), a_fn(t))]

    theta0 = float(theta_s(t_start))
    sol = solve_ivp(rhs, (t_start, t_end), [theta0], method="DOP853", rtol=rtol, atol=atol, dense_output=True)
    if not sol.success:
        raise GaugeError(f"gauge ODE failed: {sol.message}")
    ts = np.linspace(t_start, t_end, samples)
    th = sol.sol(ts)[0]
    v, vt = varrho_fn(ts), varrho_t_fn(ts)
    th_t = _theta_rhs(ts, th, v, vt, a_fn(ts))
    sinh_f = th * v
    f_t = (th_t * v + th * vt) / np.sqrt(1.0 + sinh_f ** 2)
    eikonal = float(np.max(np.abs(f_t ** 2 / (th ** 2 * np.exp(2 * ts)) - 1.0)))
    uu = u.u(ts)
    g_ref = 4 * uu ** 4 * np.exp(2 * ts) / np.expm1(2 * ts) ** 2
    g_rad = f_t ** 2 / sinh_f ** 2
    g_ang = th ** 2 * np.exp(2 * ts) / sinh_f ** 2
    metric = float(max(np.max(np.abs(g_rad / g_ref - 1)), np.max(np.abs(g_ang / g_ref - 1))))
    gamma = th ** 2 * np.exp(2 * ts) - 1.0
    near = ts >= -0.1
    K = float(np.max(np.abs(gamma[near]) / np.abs(ts[near]) ** 3)) if np.any(near) else math.nan
    checks = {"eikonal": eikonal, "metric": metric, "series_vs_ode": float(abs(theta_s(ts[0]) - th[0])),
              "grad_varrho_boundary": float(abs(abs(varrho_s.taylor(1)) - 1.0))}
    return CollarExpansion(
        u_boundary_value=fit.boundary_value,
        u_t=fit.u_t,
        u_tt=fit.u_tt,
        u_ttt=fit.u_ttt,
        theta_derivs=theta_d,
        f_derivs=f_d,
        varrho_derivs=tuple(varrho_s.taylor(k) for k in (1, 2, 3, 4)),
        a_derivs=tuple(a_s.taylor(k) for k in (0, 1, 2)),
        trace_coeff=trace,
        trace_eta=trace_eta,
        mass=abs(trace) / 4.0,
        fit=fit,
        gauge_checks=checks,
        gamma_K=K,
    )

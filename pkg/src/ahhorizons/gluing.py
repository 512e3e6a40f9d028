"""Capping the AdS--Schwarzschild end with a round region.

Between ``tau1`` and ``tau2`` the flux ``sinh(rho)^2 psi_rho`` is the cubic
``xi(rho) = (rho - tau1)^2 (a rho + b)``, which vanishes to second order at
``tau1`` and matches ``sinh^2 phi_rho`` and its derivative at ``tau2``.  The
resulting ``psi`` is constant inside ``tau1``, equals ``phi_M`` beyond
``tau2``, and its metric ``psi^4 g_H`` has ``R > -6`` inside ``B(tau2)``.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .adssch import FamilyEvaluator, horizon_radii
from .errors import ConsistencyError, CurvatureViolationError, GridError, SelectionError
from .radial import RadialProfile, gauss_legendre, laplacian_from_derivatives, scalar_curvature_from_derivatives

__all__ = [
    "GluingSpec",
    "GluedProfile",
    "select_taus",
    "build_spec",
    "glued_profile",
    "junction_grid",
    "verify_supercurvature",
    "SupercurvatureReport",
]

SCAN_STEP = 1e-3
NEGATIVITY_MARGIN = -1e-4
_GL_X, _GL_W = gauss_legendre(24)


@dataclass(frozen=True)
class GluingSpec:
    tau1: float
    tau2: float
    A: float
    B: float
    a_coef: float
    b_coef: float

    def xi(self, rho, order=0):
        """``xi`` or its first derivative."""
        rho = np.asarray(rho, dtype=float)
        d = rho - self.tau1
        if order == 0:
            return d * d * (self.a_coef * rho + self.b_coef)
        if order == 1:
            return 2.0 * d * (self.a_coef * rho + self.b_coef) + self.a_coef * d * d
        raise ValueError("order must be 0 or 1")

    def as_dict(self):
        return {k: getattr(self, k) for k in ("tau1", "tau2", "A", "B", "a_coef", "b_coef")}


def select_taus(params, evaluator=None, step=SCAN_STEP, margin=NEGATIVITY_MARGIN, fine=20, start=None):
    """Deterministic choice of ``(tau1, tau2)``.

    Scan downward from ``start`` (default: the midpoint of ``(rho0, rho2')``)
    for the first node where ``[log(phi (phi^4-1) sinh^2)]_rho < margin``;
    that node is ``tau2``.  Then extend ``tau1`` downward while the
    inequality persists, with the width capped at
    ``min(0.5, (tau2 - rho0)/2)``.

    Starting halfway keeps the glued ball well inside the ``H = -2`` sphere
    of the family, so that a mollified solve at moderate ``epsilon`` still
    has a ``-2`` surface.
    """
    ev = evaluator if evaluator is not None else FamilyEvaluator(params)
    rho2p = horizon_radii(params, ev)[0]
    if start is None:
        start = 0.5 * (params.rho0 + rho2p)
    if not params.rho0 < start < rho2p:
        raise SelectionError("scan start must lie in (rho0, rho2')", profile=None)
    floor = params.rho0 + step
    nodes = np.arange(start, floor, -step)
    if nodes.size == 0:
        raise SelectionError("scan interval is empty", profile=None)
    deriv = ev.metric3_derivative(nodes)
    hits = np.flatnonzero(deriv < margin)
    if hits.size == 0:
        raise SelectionError("no node satisfies the selection inequality", profile=(nodes, deriv))
    i2 = hits[0]
    tau2 = float(nodes[i2])
    width = min(0.5, (tau2 - params.rho0) / 2.0)
    tau1 = tau2
    for rho, d in zip(nodes[i2 + 1:], deriv[i2 + 1:]):
        if tau2 - rho > width + 1e-15 or not d < margin:
            break
        tau1 = float(rho)
    if tau1 == tau2:
        raise SelectionError("selection interval degenerates to a point", profile=(nodes, deriv))
    check = np.linspace(tau1, tau2, fine * max(2, int(round((tau2 - tau1) / step))))
    dcheck = ev.metric3_derivative(check)
    if not np.all(dcheck < 0):
        raise SelectionError("selection inequality fails on the refined subgrid", profile=(check, dcheck))
    return tau1, tau2


def build_spec(params, tau1, tau2, evaluator=None):
    """Cubic coefficients of ``xi`` from the matching data at ``tau2``."""
    ev = evaluator if evaluator is not None else FamilyEvaluator(params)
    if not params.rho0 < tau1 < tau2:
        raise ConsistencyError("need rho0(M) < tau1 < tau2")
    f, f1, _ = ev.evaluate(tau2)[:, 0]
    s2 = math.sinh(tau2) ** 2
    A = s2 * f1
    B = 0.75 * s2 * f * (f ** 4 - 1.0)
    if not (A < 0 and B > 0):
        raise ConsistencyError(f"matching data must satisfy A < 0 < B, got A={A}, B={B}")
    d = tau2 - tau1
    a_coef = (B - 2.0 * A / d) / d ** 2
    b_coef = (A - tau2 * B + 2.0 * A * tau2 / d) / d ** 2
    return GluingSpec(tau1=float(tau1), tau2=float(tau2), A=float(A), B=float(B),
                      a_coef=float(a_coef), b_coef=float(b_coef))


def junction_grid(spec, rho_max, n):
    """Approximately uniform grid on ``[0, rho_max]`` with nodes at ``tau1`` and ``tau2``."""
    h = rho_max / (n - 1)
    pieces = [(0.0, spec.tau1), (spec.tau1, spec.tau2), (spec.tau2, rho_max)]
    parts = []
    for lo, hi in pieces:
        m = max(2, int(math.ceil((hi - lo) / h)))
        parts.append(np.linspace(lo, hi, m + 1)[:-1])
    parts.append(np.array([rho_max]))
    return np.concatenate(parts)


class GluedProfile:
    """The glued conformal factor ``psi`` with exact piecewise evaluation."""

    def __init__(self, evaluator, spec, grid):
        self.evaluator = evaluator
        self.spec = spec
        grid = np.asarray(grid, dtype=float)
        for tau in (spec.tau1, spec.tau2):
            if np.min(np.abs(grid - tau)) > 1e-12:
                raise GridError(f"grid misses the junction at {tau}")
        if grid[0] != 0.0:
            raise GridError("grid must start at rho = 0")
        self.phi_tau2 = float(evaluator.phi(spec.tau2))
        self.cap_value = float(self._transition_value(np.array([spec.tau1]))[0])
        v, d1, d2 = self.evaluate(grid)
        self.psi = RadialProfile(grid, v, (d1, d2))

    @property
    def grid(self):
        return self.psi.grid

    @property
    def rho_max(self):
        return self.psi.hi

    def _transition_value(self, rho):
        """``phi(tau2) - int_rho^tau2 xi/sinh^2``."""
        rho = np.asarray(rho, dtype=float)
        tau2 = self.spec.tau2
        width = tau2 - rho
        x = rho[:, None] + width[:, None] * _GL_X
        integral = width * np.sum(self.spec.xi(x) / np.sinh(x) ** 2 * _GL_W, axis=1)
        return self.phi_tau2 - integral

    def evaluate(self, rho):
        """``(psi, psi_rho, psi_rhorho)`` from the piecewise definition."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        t1, t2 = self.spec.tau1, self.spec.tau2
        out = np.zeros((3, rho.size))
        cap = rho < t1
        mid = (rho >= t1) & (rho <= t2)
        outer = rho > t2
        out[0, cap] = self.cap_value
        if np.any(mid):
            r = rho[mid]
            s = np.sinh(r)
            xi = self.spec.xi(r)
            out[0, mid] = self._transition_value(r)
            out[1, mid] = xi / s ** 2
            out[2, mid] = self.spec.xi(r, 1) / s ** 2 - 2.0 * xi * np.cosh(r) / s ** 3
        if np.any(outer):
            out[:, outer] = self.evaluator.evaluate(rho[outer])
        return out

    def minus_one(self, rho):
        """``psi - 1``, accurate on the outer chart where ``psi`` is close to 1."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        far = rho >= max(self.evaluator.params.rhoM, self.spec.tau2)
        out = np.empty_like(rho)
        out[~far] = self.evaluate(rho[~far])[0] - 1.0
        if np.any(far):
            out[far] = self.evaluator.phi_minus_one(rho[far])
        return out

    def laplacian(self, rho):
        """Hyperbolic Laplacian of ``psi``; ``0`` on the cap including the pole."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        v, d1, d2 = self.evaluate(rho)
        out = np.zeros_like(rho)
        pos = rho > 0
        out[pos] = laplacian_from_derivatives(rho[pos], d1[pos], d2[pos])
        mid = (rho >= self.spec.tau1) & (rho <= self.spec.tau2) & pos
        # sinh^2 psi_rho = xi there, so the Laplacian is exactly xi'/sinh^2
        out[mid] = self.spec.xi(rho[mid], 1) / np.sinh(rho[mid]) ** 2
        return out

    def scalar_curvature(self, rho):
        v = self.evaluate(rho)[0]
        return scalar_curvature_from_derivatives(v, self.laplacian(rho))

    def junction_mismatch(self):
        """One-sided jumps of ``(psi, psi_rho, psi_rhorho)`` at ``tau1`` and ``tau2``."""
        t1, t2 = self.spec.tau1, self.spec.tau2
        s1 = math.sinh(t1)
        mid_at_t1 = np.array([self.cap_value, self.spec.xi(t1) / s1 ** 2,
                              self.spec.xi(t1, 1) / s1 ** 2 - 2 * self.spec.xi(t1) * math.cosh(t1) / s1 ** 3])
        jump1 = mid_at_t1 - np.array([self.cap_value, 0.0, 0.0])
        mid_at_t2 = self.evaluate(t2)[:, 0]
        outer_at_t2 = self.evaluator.evaluate(t2)[:, 0]
        jump2 = mid_at_t2 - outer_at_t2
        return jump1, jump2


def glued_profile(evaluator, spec, grid):
    return GluedProfile(evaluator, spec, grid)


@dataclass
class SupercurvatureReport:
    grid: np.ndarray
    R: np.ndarray
    min_margin_inside: float
    max_dev_outside: float
    ok: bool
    cap_value: float = field(default=math.nan)


def verify_supercurvature(profile, outer_tol=1e-6, raise_on_failure=True):
    """Check ``R > -6`` on ``(0, tau2)`` and ``R = -6`` on ``[tau2, rho_max]``."""
    grid = profile.grid
    R = profile.scalar_curvature(grid)
    t2 = profile.spec.tau2
    inside = (grid > 0) & (grid < t2)
    outside = grid >= t2
    margin = float(np.min(R[inside] + 6.0))
    dev = float(np.max(np.abs(R[outside] + 6.0)))
    ok = margin > 0 and dev < outer_tol
    if not ok and raise_on_failure:
        if margin <= 0:
            i = np.flatnonzero(inside)[np.argmin(R[inside])]
            raise CurvatureViolationError("R <= -6 inside B(tau2)", location=float(grid[i]), margin=margin)
        i = np.flatnonzero(outside)[np.argmax(np.abs(R[outside] + 6))]
        raise CurvatureViolationError("R != -6 outside B(tau2)", location=float(grid[i]), margin=dev)
    return SupercurvatureReport(grid=grid, R=R, min_margin_inside=margin, max_dev_outside=dev, ok=ok,
                                cap_value=profile.cap_value)

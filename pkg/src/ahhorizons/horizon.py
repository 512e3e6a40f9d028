"""Constant-mean-curvature graphs ``r = v(sigma)`` in conformally flat annuli.

The ambient metric is ``Phi^4 (dr^2 + r^2 dsigma^2)`` on the annulus
``delta < r < 1 - delta`` of the unit ball, with ``r`` the ball radius
``tau = tanh(rho/2)``.  A ball-model factor ``u`` (metric ``u^4 g_H``)
enters as ``Phi = u(rho(r)) * sqrt(2/(1 - r^2))``.

Mean curvature is taken with respect to the outward normal, so a round
Euclidean sphere of radius ``c`` has ``H = 2/c``.  The linearization
returned by :func:`cmc_linearization` is the one for the inward-normal
operator ``-H``; see its docstring.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import linalg, optimize

from .adssch import FamilyEvaluator
from .errors import ConvergenceError, DomainError, RangeError, UnsupportedBaseError
from .sphere import SphereGrid, harmonic

__all__ = [
    "RadialFactor",
    "Perturbation",
    "AmbientFactor",
    "GraphSurface",
    "radial_factor",
    "ambient_factor",
    "mean_curvature_graph",
    "radial_mean_curvature",
    "theta_coefficient",
    "cmc_linearization",
    "radial_cmc_radius",
    "radial_horizons",
    "find_cmc_surface",
    "check_nesting",
    "regime_probe",
]

ANNULUS_DELTA = 0.01
H_TOL = 1e-8
STALL_WINDOW = 30
MAX_HALVINGS = 8
# largest sup-norm deviation ||v - c|| / c accepted as "near the radial surface"
REGIME_DEVIATION = 0.25
# largest relative size sup |Phi / Phi_radial - 1| treated as a perturbation
REGIME_PERTURBATION = 0.25


# -- ambient factors --------------------------------------------------------

class RadialFactor:
    """A radial conformal factor ``Phi(r)`` on the flat chart.

    ``fn(r)`` returns ``(Phi, Phi_r)``; ``r_lo``/``r_hi`` bound the radii
    where it is defined.
    """

    def __init__(self, fn, r_lo=0.0, r_hi=1.0, label="radial"):
        self._fn = fn
        self.r_lo = float(r_lo)
        self.r_hi = float(r_hi)
        self.label = label

    @classmethod
    def flat(cls):
        return cls(lambda r: (np.ones_like(r), np.zeros_like(r)), 0.0, math.inf, label="flat")

    @classmethod
    def from_ball(cls, u_and_slope, rho_lo=0.0, rho_hi=math.inf, label="ball"):
        """Wrap a ball-model factor given as ``rho -> (u, u_rho)``."""

        def fn(r):
            rho = 2.0 * np.arctanh(r)
            u, u1 = u_and_slope(rho)
            k = 1.0 - r * r
            hyp = np.sqrt(2.0 / k)
            # d(rho)/dr = 2/(1 - r^2); d(hyp)/dr = r * hyp / (1 - r^2)
            return u * hyp, (u1 * 2.0 / k + u * r / k) * hyp

        r_lo = math.tanh(rho_lo / 2.0)
        r_hi = 1.0 if math.isinf(rho_hi) else math.tanh(rho_hi / 2.0)
        return cls(fn, r_lo, r_hi, label=label)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r <= self.r_lo) or np.any(r >= self.r_hi):
            raise RangeError(f"radius outside the factor's domain ({self.r_lo}, {self.r_hi})")
        return self._fn(r)


def radial_factor(source):
    """Adapt a family evaluator, glued profile or solved profile to a :class:`RadialFactor`."""
    if isinstance(source, RadialFactor):
        return source
    if source is None or source == "flat":
        return RadialFactor.flat()
    if isinstance(source, FamilyEvaluator):
        fn = lambda rho: tuple(source.evaluate(rho.ravel())[:2].reshape((2,) + rho.shape))
        return RadialFactor.from_ball(fn, rho_lo=source.params.rho0, label=f"family M={source.M}")
    if hasattr(source, "spec") and hasattr(source, "evaluate"):  # glued profile
        fn = lambda rho: tuple(source.evaluate(rho.ravel())[:2].reshape((2,) + rho.shape))
        return RadialFactor.from_ball(fn, label="glued")
    if hasattr(source, "phi_eps"):  # SolveResult
        prof = source.phi_eps
        return RadialFactor.from_ball(lambda rho: (1.0 + prof(rho), prof(rho, 1)),
                                      rho_hi=prof.hi, label="solved")
    if hasattr(source, "profile") and hasattr(source, "factor_minus_one"):  # YamabeResult
        prof = source.profile()
        return RadialFactor.from_ball(lambda rho: (1.0 + prof(rho), prof(rho, 1)),
                                      rho_hi=prof.hi, label="normalized")
    raise TypeError(f"cannot build a radial factor from {type(source).__name__}")


@dataclass(frozen=True)
class Perturbation:
    """``Phi -> Phi * (1 + amplitude * Y_lm(sigma) * bump(r))``.

    The bump is the smooth compactly supported ``exp(1 - 1/(1 - s^2))`` with
    ``s = (r - center) / width``.
    """

    amplitude: float
    l: int = 2
    m: int = 0
    center: float = 0.5
    width: float = 0.49

    def bump(self, r):
        s = (np.asarray(r, dtype=float) - self.center) / self.width
        inside = np.abs(s) < 1.0
        q = np.where(inside, 1.0 - s * s, 1.0)
        b = np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)
        db = np.where(inside, b * (-2.0 * s / q ** 2) / self.width, 0.0)
        return b, db


class AmbientFactor:
    """``Phi(r, sigma)``: a radial factor, optionally times an angular perturbation."""

    def __init__(self, radial, perturbation=None, delta=ANNULUS_DELTA):
        self.radial = radial_factor(radial)
        self.perturbation = perturbation if perturbation is None or perturbation.amplitude else None
        if not 0.0 < delta < 0.5:
            raise DomainError("annulus margin delta must lie in (0, 1/2)")
        self.delta = float(delta)
        if self.perturbation is not None:
            self._Y = harmonic(self.perturbation.l, self.perturbation.m)

    @property
    def is_radial(self):
        return self.perturbation is None

    def perturbation_size(self, n_r=201, grid=None):
        """``sup |Phi / Phi_radial - 1|`` over the annulus, sampled on a product grid."""
        if self.perturbation is None:
            return 0.0
        grid = grid if grid is not None else SphereGrid(16, 32)
        lo, hi = self.r_bounds
        r = np.linspace(lo, hi, n_r + 2)[1:-1]
        Y = self._Y[0](grid.T, grid.P)
        b = self.perturbation.bump(r)[0]
        return float(abs(self.perturbation.amplitude) * np.max(np.abs(Y)) * np.max(b))

    @property
    def r_bounds(self):
        return max(self.delta, self.radial.r_lo), min(1.0 - self.delta, self.radial.r_hi)

    def check_annulus(self, r):
        lo, hi = self.r_bounds
        r = np.asarray(r)
        if np.any(~np.isfinite(r)) or np.any(r <= lo) or np.any(r >= hi):
            raise RangeError(f"surface leaves the annulus ({lo:.6g}, {hi:.6g})")

    def evaluate(self, r, theta, phi):
        """``(Phi, Phi_r, Phi_theta, Phi_phi)`` at the points ``(r, theta, phi)``."""
        r = np.asarray(r, dtype=float)
        self.check_annulus(r)
        P, Pr = self.radial(r)
        zero = np.zeros_like(r)
        if self.perturbation is None:
            return P, Pr, zero, zero
        pert = self.perturbation
        Y, Yt, Yp = (f(theta, phi) * np.ones_like(r) for f in self._Y)
        b, db = pert.bump(r)
        A = pert.amplitude
        scale = 1.0 + A * Y * b
        return P * scale, Pr * scale + P * A * Y * db, P * A * Yt * b, P * A * Yp * b

    def on_product_grid(self, r_nodes, grid):
        """``Phi`` sampled on ``r_nodes x`` sphere nodes, shape ``(len(r), n_theta, n_phi)``."""
        r = np.asarray(r_nodes, dtype=float)[:, None, None] * np.ones(grid.shape)
        return self.evaluate(r, grid.T, grid.P)[0]


def ambient_factor(source, amplitude=0.0, l=2, m=0, delta=ANNULUS_DELTA, center=None, width=None):
    """Build an :class:`AmbientFactor`; a nonzero ``amplitude`` adds a ``Y_lm`` bump."""
    radial = radial_factor(source)
    pert = None
    if amplitude:
        lo = max(delta, radial.r_lo)
        hi = min(1.0 - delta, radial.r_hi)
        c = 0.5 * (lo + hi) if center is None else center
        w = 0.5 * (hi - lo) if width is None else width
        pert = Perturbation(float(amplitude), l, m, c, w)
    return AmbientFactor(radial, pert, delta)


# -- mean curvature ---------------------------------------------------------

def _graph_H(grid, v, amb):
    """Outward mean curvature of ``r = v`` given ambient data at ``r = v``.

    ``H = Phi^-2 (H_0 + 4 d_nu Phi / Phi)`` with ``H_0`` the Euclidean mean
    curvature of the graph.  Writing ``|dv|^2`` for the round-metric norm and
    ``Q = sqrt(1 + |dv|^2/v^2)``, the outward normal field of ``r - v`` is
    ``(d_r - v^-2 grad v)/Q`` and its Euclidean divergence at ``r = v`` is
    ``2/(vQ) + |dv|^2/(v^3 Q^3) - div(grad v / Q_r)/v^2``, where the last
    divergence is taken with ``r`` frozen.
    """
    Phi, Pr, Pt, Pp = amb
    s2 = grid._sin2
    v2 = grid.extend(v)
    vt = grid._dt(v2)
    vp = grid._dp(v2)
    g2 = vt * vt + (vp / s2) ** 2
    gt = grid._dt(g2)
    gp = grid._dp(g2)
    lap = grid._dtt(v2) + grid._cos2 / s2 * vt + grid._dpp(v2) / s2 ** 2
    Q = np.sqrt(1.0 + g2 / v2 ** 2)
    div = lap / Q - (vt * gt + vp * gp / s2 ** 2) / (2.0 * v2 ** 2 * Q ** 3)
    H0 = 2.0 / (v2 * Q) + g2 / (v2 ** 3 * Q ** 3) - div / v2 ** 2
    H0 = grid.restrict(H0)
    vt, vp, Q = grid.restrict(vt), grid.restrict(vp), grid.restrict(Q)
    v = grid.restrict(v2)
    dnu = (Pr - (vt * Pt + vp * Pp / grid.sin[:, None] ** 2) / v ** 2) / Q
    return (H0 + 4.0 * dnu / Phi) / Phi ** 2


def mean_curvature_graph(Phi, v, grid):
    """Outward mean curvature of the graph ``r = v(sigma)`` at every node."""
    if not isinstance(Phi, AmbientFactor):
        Phi = AmbientFactor(Phi)
    v = np.asarray(v, dtype=float) * np.ones(grid.shape)
    amb = Phi.evaluate(v, grid.T, grid.P)
    H = _graph_H(grid, v, amb)
    if not np.all(np.isfinite(H)):
        raise RangeError("mean curvature is not finite on the surface")
    return H


def radial_mean_curvature(Phi, r):
    """``Phi^-2 (2/r + 4 Phi_r/Phi)`` for the sphere ``r = const``."""
    radial = Phi.radial if isinstance(Phi, AmbientFactor) else radial_factor(Phi)
    r = np.asarray(r, dtype=float)
    P, Pr = radial(r)
    return (2.0 / r + 4.0 * Pr / P) / P ** 2


def theta_coefficient(phi, c, H):
    """``3 phi^2 + phi^-2 c^-2 - (3/4) phi^2 H^2``."""
    return 3.0 * phi ** 2 + 1.0 / (phi * c) ** 2 - 0.75 * phi ** 2 * H ** 2


def _radial_base(Phi):
    if isinstance(Phi, AmbientFactor):
        if not Phi.is_radial:
            raise UnsupportedBaseError("the linearization needs a radial ambient factor")
        return Phi.radial
    return radial_factor(Phi)


def cmc_linearization(Phi, c, H, eta, grid):
    """``phi^-2 c^-2 Lap(eta) - Theta eta`` at the sphere ``r = c``.

    This is the derivative of the inward-normal mean curvature ``-H`` in the
    direction ``eta``; the outward ``H`` used elsewhere in this module moves
    by the negative of it.  It assumes ``R(Phi^4 (dr^2 + r^2 dsigma^2)) = -6``
    on the sphere.  ``H`` may be ``None`` to use the sphere's own value.
    """
    radial = _radial_base(Phi)
    c_arr = np.asarray(c, dtype=float)
    if c_arr.ndim and np.ptp(c_arr) > 1e-14 * max(1.0, float(np.max(np.abs(c_arr)))):
        raise UnsupportedBaseError("the linearization is only available about constant v")
    c = float(c_arr.flat[0]) if c_arr.ndim else float(c_arr)
    phi = float(radial(np.array(c))[0])
    if H is None:
        H = float(radial_mean_curvature(radial, c))
    eta = np.asarray(eta, dtype=float) * np.ones(grid.shape)
    theta = theta_coefficient(phi, c, H)
    return grid.laplacian(eta) / (phi * c) ** 2 - theta * eta


# -- radial roots ------------------------------------------------------------

def radial_cmc_radius(Phi, target, n=4001, delta=ANNULUS_DELTA):
    """Outermost radius ``c`` with ``H(c) = target`` for the radial part of ``Phi``.

    When the centre is capped ``H`` blows up near ``r = 0`` and there are
    further crossings on the descending branch; the outermost crossing is
    the one continuing the family's horizon.
    """
    if isinstance(Phi, AmbientFactor):
        delta = Phi.delta
        radial = Phi.radial
    else:
        radial = radial_factor(Phi)
    lo = max(delta, radial.r_lo)
    hi = min(1.0 - delta, radial.r_hi)
    pad = 1e-9 * (hi - lo)
    r = np.linspace(lo + pad, hi - pad, n)
    g = radial_mean_curvature(radial, r) - target
    change = np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) <= 0)
    if change.size == 0:
        raise RangeError(f"no sphere with H = {target} in the annulus ({lo:.6g}, {hi:.6g})")
    i = change[-1]
    if g[i + 1] == 0.0:
        return float(r[i + 1])
    fn = lambda x: float(radial_mean_curvature(radial, np.array(x)) - target)
    return float(optimize.brentq(fn, r[i], r[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))


def radial_horizons(Phi, targets=(-2.0, 0.0, 2.0)):
    """``rho`` of the outermost radial spheres with the given mean curvatures."""
    return tuple(2.0 * math.atanh(radial_cmc_radius(Phi, t)) for t in targets)


# -- Newton solve -----------------------------------------------------------

@dataclass
class GraphSurface:
    grid: SphereGrid
    v: np.ndarray
    H_field: np.ndarray
    target: float
    residual: float
    iterations: int
    history: list
    radial_radius: float
    theta: np.ndarray = field(default=None, repr=False)
    min_eigenvalue: float = math.nan
    definite: bool = False

    @property
    def rho(self):
        return 2.0 * np.arctanh(self.v)

    @property
    def deviation(self):
        """``||v - c||_inf`` against the radial root."""
        return float(np.max(np.abs(self.v - self.radial_radius)))

    @property
    def converged(self):
        return self.residual < H_TOL

    def as_dict(self):
        return {
            "target": self.target,
            "residual": self.residual,
            "iterations": self.iterations,
            "v_min": float(np.min(self.v)),
            "v_max": float(np.max(self.v)),
            "rho_min": float(np.min(self.rho)),
            "rho_max": float(np.max(self.rho)),
            "radial_radius": self.radial_radius,
            "deviation": self.deviation,
            "theta_min": float(np.min(self.theta)) if self.theta is not None else math.nan,
            "min_eigenvalue": self.min_eigenvalue,
            "definite": self.definite,
        }


def _jacobian(Phi, grid, v, amb, step, chunk=256):
    """Central-difference Jacobian of the outward ``H``; one column per node.

    Ambient data depend on ``v`` pointwise, so a column only changes them at
    its own node.  The sphere derivatives are evaluated for a batch of
    columns at once.
    """
    n = grid.size
    plus = Phi.evaluate(v + step, grid.T, grid.P)
    minus = Phi.evaluate(v - step, grid.T, grid.P)
    J = np.empty((n, n))
    flat_v = v.ravel()
    for start in range(0, n, chunk):
        idx = np.arange(start, min(n, start + chunk))
        k = idx.size
        cols = []
        for sign, pert in ((1.0, plus), (-1.0, minus)):
            V = np.repeat(flat_v[None, :], k, axis=0)
            V[np.arange(k), idx] += sign * step
            A = []
            for base, moved in zip(amb, pert):
                B = np.repeat(base.ravel()[None, :], k, axis=0)
                B[np.arange(k), idx] = moved.ravel()[idx]
                A.append(B.reshape((k,) + grid.shape))
            cols.append(_graph_H(grid, V.reshape((k,) + grid.shape), A).reshape(k, n))
        J[:, idx] = ((cols[0] - cols[1]) / (2.0 * step)).T
    return J


def _residual(Phi, grid, v, target):
    amb = Phi.evaluate(v, grid.T, grid.P)
    H = _graph_H(grid, v, amb)
    return H, amb, float(np.max(np.abs(H - target)))


def find_cmc_surface(Phi, target, grid=None, v_init=None, tol=H_TOL, max_iter=60, stall=STALL_WINDOW,
                     max_halvings=MAX_HALVINGS, regime=REGIME_DEVIATION, max_perturbation=REGIME_PERTURBATION,
                     check_definiteness=True):
    """Newton solve of ``H(Phi, v) = target`` for a graph ``r = v(sigma)``.

    The initial guess defaults to the radial root of ``Phi``'s radial part.
    Each step is halved up to ``max_halvings`` times until the residual
    drops.  The solve fails with :class:`ConvergenceError` when the best
    residual has not improved for ``stall`` iterations, when ``max_iter`` is
    exhausted, or when the iterate drifts further than ``regime * c`` from
    the radial root (the surface would no longer be a perturbation of the
    radial one).  An ambient factor whose angular perturbation exceeds
    ``max_perturbation`` in relative size is refused up front with the same
    error: outside the perturbative regime a converged surface would not
    continue the radial one.
    """
    if not isinstance(Phi, AmbientFactor):
        Phi = AmbientFactor(Phi)
    if not -2.0 <= target <= 2.0:
        raise DomainError("target mean curvature must lie in [-2, 2]")
    grid = grid if grid is not None else SphereGrid()
    size = Phi.perturbation_size()
    if size > max_perturbation:
        raise ConvergenceError(f"perturbation of relative size {size:.3g} is outside the perturbative regime "
                               f"(limit {max_perturbation})", [])
    c = radial_cmc_radius(Phi, target)
    v = np.full(grid.shape, c) if v_init is None else np.asarray(v_init, dtype=float) * np.ones(grid.shape)
    Phi.check_annulus(v)
    H, amb, res = _residual(Phi, grid, v, target)
    history = [res]
    best, since_best = res, 0
    it = 0
    while res >= tol:
        if it >= max_iter:
            raise ConvergenceError(f"no convergence in {max_iter} Newton steps (residual {res:.3e})", history)
        it += 1
        step = 1e-6 * float(np.max(v))
        J = _jacobian(Phi, grid, v, amb, step)
        try:
            dv = linalg.lu_solve(linalg.lu_factor(J, check_finite=False), -(H - target).ravel())
        except (linalg.LinAlgError, ValueError) as exc:
            raise ConvergenceError(f"singular Newton system: {exc}", history) from exc
        dv = dv.reshape(grid.shape)
        lam, accepted = 1.0, None
        for _ in range(max_halvings + 1):
            trial = v + lam * dv
            try:
                Ht, ambt, rt = _residual(Phi, grid, trial, target)
            except RangeError:
                lam *= 0.5
                continue
            if accepted is None or rt < accepted[3]:
                accepted = (trial, Ht, ambt, rt)
            if rt < res:
                break
            lam *= 0.5
        if accepted is None:
            raise RangeError("every damped Newton step leaves the annulus")
        v, H, amb, res = accepted
        history.append(res)
        if np.max(np.abs(v - c)) > regime * c:
            raise ConvergenceError(
                f"iterate left the perturbative regime (||v - c|| = {np.max(np.abs(v - c)):.3g})", history)
        if res < best:
            best, since_best = res, 0
        else:
            since_best += 1
            if since_best >= stall:
                raise ConvergenceError(f"residual stalled for {stall} iterations at {best:.3e}", history)
    phi_s = amb[0]
    theta = theta_coefficient(phi_s, v, H)
    surface = GraphSurface(grid=grid, v=v, H_field=H, target=float(target), residual=res, iterations=it,
                           history=history, radial_radius=c, theta=theta)
    if check_definiteness:
        J = _jacobian(Phi, grid, v, amb, 1e-6 * float(np.max(v)))
        eig = np.linalg.eigvals(-J)  # inward-normal operator
        k = np.argmin(np.abs(eig))
        surface.min_eigenvalue = float(eig[k].real)
        surface.definite = bool(np.all(eig.real < 0))
    return surface


def check_nesting(surfaces):
    """Strict nesting ``S(-2) < S(0) < S(+2)`` of surfaces keyed by target."""
    order = sorted(surfaces)
    ok = True
    for lo, hi in zip(order, order[1:]):
        ok = ok and float(np.max(surfaces[lo].v)) < float(np.min(surfaces[hi].v))
    return ok


def regime_probe(source, target, amplitudes, grid=None, l=2, m=0, delta=ANNULUS_DELTA):
    """Largest amplitude in ``amplitudes`` (tried in increasing order) for which the solve converges."""
    best = 0.0
    outcomes = []
    for amp in sorted(amplitudes):
        Phi = ambient_factor(source, amp, l, m, delta)
        try:
            find_cmc_surface(Phi, target, grid=grid, check_definiteness=False)
        except (ConvergenceError, RangeError) as exc:
            outcomes.append((amp, False, str(exc)))
            continue
        outcomes.append((amp, True, ""))
        best = amp
    return best, outcomes

"""Latitude-longitude grid on the unit sphere with Fourier differentiation.

Nodes sit at cell centres ``theta_j = (j + 1/2) pi / n_theta`` and
``phi_k = 2 pi k / n_phi``, so no node lies on a pole.  Quadrature weights
are exact cell areas (they sum to ``4 pi``).

Derivatives use the double Fourier sphere: a field on the sphere is
continued to ``theta in (pi, 2 pi)`` by ``f(2 pi - theta, phi + pi)``,
which makes it smooth and ``2 pi``-periodic in both angles, and is then
differentiated with FFTs.  Every product and derivative is formed on the
doubled grid, where the continuation is consistent, and the physical half
is returned at the end.  This needs an even ``n_phi``.
"""

import numpy as np

from .errors import DomainError

__all__ = ["SphereGrid", "harmonic", "real_harmonic"]


def _wavenumbers(n):
    return np.fft.fftfreq(n, d=1.0 / n)


class SphereGrid:
    def __init__(self, n_theta=16, n_phi=32):
        if n_theta < 4 or n_phi < 4 or n_phi % 2:
            raise DomainError("need n_theta >= 4 and an even n_phi >= 4")
        self.n_theta = int(n_theta)
        self.n_phi = int(n_phi)
        self.dtheta = np.pi / n_theta
        self.dphi = 2.0 * np.pi / n_phi
        self.theta = (np.arange(n_theta) + 0.5) * self.dtheta
        self.phi = np.arange(n_phi) * self.dphi
        cos_e = np.cos(np.arange(n_theta + 1) * self.dtheta)
        self.ring_area = (cos_e[:-1] - cos_e[1:]) * self.dphi
        self.T, self.P = np.meshgrid(self.theta, self.phi, indexing="ij")
        self.weights = np.repeat(self.ring_area[:, None], n_phi, axis=1)
        self.sin = np.sin(self.theta)
        self._half = n_phi // 2
        # doubled grid
        theta2 = (np.arange(2 * n_theta) + 0.5) * self.dtheta
        self._sin2 = np.sin(theta2)[:, None]
        self._cos2 = np.cos(theta2)[:, None]
        kt = _wavenumbers(2 * n_theta)
        kp = _wavenumbers(n_phi)
        self._ikt = 1j * np.where(np.abs(kt) == n_theta, 0.0, kt)[:, None]
        self._ikp = 1j * np.where(np.abs(kp) == n_phi // 2, 0.0, kp)[None, :]
        self._kp2 = -(kp ** 2)[None, :]
        self._kt2 = -(kt ** 2)[:, None]

    @property
    def shape(self):
        return (self.n_theta, self.n_phi)

    @property
    def size(self):
        return self.n_theta * self.n_phi

    def integrate(self, f):
        return float(np.sum(np.asarray(f) * self.weights))

    def sample(self, fn):
        """Evaluate ``fn(theta, phi)`` at the nodes."""
        return np.asarray(fn(self.T, self.P), dtype=float) * np.ones(self.shape)

    def mean(self, f):
        return self.integrate(f) / (4.0 * np.pi)

    # -- doubled grid -------------------------------------------------------
    def extend(self, f):
        """Continue a node field to the doubled theta circle.

        Fields may carry leading batch axes; the last two are ``(theta, phi)``.
        """
        f = np.asarray(f, dtype=float)
        mirror = np.roll(np.flip(f, axis=-2), -self._half, axis=-1)
        return np.concatenate([f, mirror], axis=-2)

    def restrict(self, f2):
        return f2[..., : self.n_theta, :]

    def _dt(self, f2):
        return np.real(np.fft.ifft(self._ikt * np.fft.fft(f2, axis=-2), axis=-2))

    def _dp(self, f2):
        return np.real(np.fft.ifft(self._ikp * np.fft.fft(f2, axis=-1), axis=-1))

    def _dpp(self, f2):
        return np.real(np.fft.ifft(self._kp2 * np.fft.fft(f2, axis=-1), axis=-1))

    def _dtt(self, f2):
        return np.real(np.fft.ifft(self._kt2 * np.fft.fft(f2, axis=-2), axis=-2))

    # -- physical operators -------------------------------------------------
    def d_theta(self, f):
        return self.restrict(self._dt(self.extend(f)))

    def d_phi(self, f):
        return self.restrict(self._dp(self.extend(f)))

    def gradient(self, f):
        """``(f_theta, f_phi)`` at the nodes."""
        f2 = self.extend(f)
        return self.restrict(self._dt(f2)), self.restrict(self._dp(f2))

    def grad_sq(self, f):
        ft, fp = self.gradient(f)
        return ft ** 2 + (fp / self.sin[:, None]) ** 2

    def laplacian(self, f):
        f2 = self.extend(f)
        lap = self._dtt(f2) + self._cos2 / self._sin2 * self._dt(f2) + self._dpp(f2) / self._sin2 ** 2
        return self.restrict(lap)

    def weighted_divergence(self, f, coeff):
        """``div(c grad f)`` where ``c = coeff(|grad f|^2)``."""
        f2 = self.extend(f)
        ft = self._dt(f2)
        fp = self._dp(f2)
        c = coeff(ft ** 2 + (fp / self._sin2) ** 2)
        div = self._dt(self._sin2 * c * ft) / self._sin2 + self._dp(c * fp) / self._sin2 ** 2
        return self.restrict(div)


_HARMONICS = {
    # (l, m): (Y, dY/dtheta, dY/dphi)
    (0, 0): (lambda t, p: np.ones_like(t), lambda t, p: np.zeros_like(t), lambda t, p: np.zeros_like(t)),
    (1, 0): (lambda t, p: np.cos(t), lambda t, p: -np.sin(t), lambda t, p: np.zeros_like(t)),
    (1, 1): (lambda t, p: np.sin(t) * np.cos(p), lambda t, p: np.cos(t) * np.cos(p),
             lambda t, p: -np.sin(t) * np.sin(p)),
    (1, -1): (lambda t, p: np.sin(t) * np.sin(p), lambda t, p: np.cos(t) * np.sin(p),
              lambda t, p: np.sin(t) * np.cos(p)),
    (2, 0): (lambda t, p: 0.5 * (3 * np.cos(t) ** 2 - 1), lambda t, p: -3 * np.cos(t) * np.sin(t),
             lambda t, p: np.zeros_like(t)),
    (2, 1): (lambda t, p: np.sin(t) * np.cos(t) * np.cos(p), lambda t, p: np.cos(2 * t) * np.cos(p),
             lambda t, p: -np.sin(t) * np.cos(t) * np.sin(p)),
    (2, -1): (lambda t, p: np.sin(t) * np.cos(t) * np.sin(p), lambda t, p: np.cos(2 * t) * np.sin(p),
              lambda t, p: np.sin(t) * np.cos(t) * np.cos(p)),
    (2, 2): (lambda t, p: np.sin(t) ** 2 * np.cos(2 * p), lambda t, p: np.sin(2 * t) * np.cos(2 * p),
             lambda t, p: -2 * np.sin(t) ** 2 * np.sin(2 * p)),
    (2, -2): (lambda t, p: np.sin(t) ** 2 * np.sin(2 * p), lambda t, p: np.sin(2 * t) * np.sin(2 * p),
              lambda t, p: 2 * np.sin(t) ** 2 * np.cos(2 * p)),
}


def harmonic(l, m):
    """``(Y, Y_theta, Y_phi)`` callables of an unnormalized real harmonic, ``l <= 2``."""
    if (l, m) not in _HARMONICS:
        raise DomainError("real harmonics are tabulated for l <= 2")
    return _HARMONICS[(l, m)]


def real_harmonic(grid, l, m):
    """Unnormalized real spherical harmonic ``Y_lm`` at the grid nodes."""
    return harmonic(l, m)[0](grid.T, grid.P)

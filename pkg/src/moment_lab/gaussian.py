"""Gaussian wave-packet effective dynamics.

A Gaussian packet is described by two canonical pairs: the centre ``(q, p)``
and the width ``(alpha, beta)``. For an even potential
``V = V0 + V2 x^2/2 + V4 x^4/24`` the effective equations, truncated at
quartic order, are

    q' = p/m
    p' = -(V2 q + V4 q^3/6 + V4 q alpha^2/2)
    alpha' = beta/m
    beta' = hbar^2/(4 m alpha^3) - (V2 alpha + V4 alpha^3/2 + V4 q^2 alpha/2)

with ``V2 = m omega(t)^2``. They are Hamilton's equations of
``effective_hamiltonian``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from math import comb, factorial

import numpy as np

from .classical import FrequencyProfile, SystemParams, rk4_integrate, uniform_steps
from .errors import ConfigError, SingularityError
from .moments import MomentSeries, MomentState, _check_n_max

ALPHA_FLOOR = 1e-12


@dataclass(frozen=True)
class GaussianState:
    q: float
    p: float
    alpha: float
    beta: float
    gamma: float = 0.0  # global phase; carried, never evolved

    def __post_init__(self):
        vals = (self.q, self.p, self.alpha, self.beta, self.gamma)
        if not all(math.isfinite(v) for v in vals):
            raise ConfigError(f"Gaussian parameters must be finite, got {vals}")
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")

    def as_array(self) -> np.ndarray:
        return np.array([self.q, self.p, self.alpha, self.beta])

    @classmethod
    def from_array(cls, y, gamma: float = 0.0) -> "GaussianState":
        q, p, a, b = (float(v) for v in y)
        return cls(q, p, a, b, gamma)

    def width_parameter(self, hbar: float) -> complex:
        """``A = 1/(4 alpha^2) - i beta/(2 hbar alpha)`` of ``exp(-A (x-q)^2)``."""
        return 1.0 / (4 * self.alpha ** 2) - 1j * self.beta / (2 * hbar * self.alpha)

    def covariance(self, hbar: float) -> np.ndarray:
        """Wigner covariance ``[[alpha^2, alpha beta], [alpha beta, beta^2 + hbar^2/4alpha^2]]``."""
        a, b = self.alpha, self.beta
        return np.array([[a * a, a * b], [a * b, b * b + hbar ** 2 / (4 * a * a)]])


@dataclass(frozen=True)
class PotentialSpec:
    """Even potential ``V0 + m omega(t)^2 x^2/2 + V4 x^4/24``."""

    omega_profile: FrequencyProfile
    V0: float = 0.0
    V4: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.V0) and math.isfinite(self.V4)):
            raise ConfigError("V0 and V4 must be finite")

    def V2(self, t: float, m: float) -> float:
        return m * self.omega_profile.omega_sq(t)

    def __call__(self, x, t: float, m: float):
        return self.V0 + 0.5 * self.V2(t, m) * x ** 2 + self.V4 / 24.0 * x ** 4


def _central_moment(i: int, j: int, sxx: float, sxp: float, spp: float) -> float:
    """``E[dx^i dp^j]`` of a centred bivariate normal by Wick pairing."""
    if (i + j) % 2:
        return 0.0
    total = 0.0
    for k in range(min(i, j) + 1):
        if (i - k) % 2:
            continue
        u, v = (i - k) // 2, (j - k) // 2
        pairings = (comb(i, k) * comb(j, k) * factorial(k)
                    * factorial(i - k) // (2 ** u * factorial(u))
                    * factorial(j - k) // (2 ** v * factorial(v)))
        total += pairings * sxx ** u * spp ** v * sxp ** k
    return total


def gaussian_moments(g: GaussianState, params: SystemParams, n_max: int) -> MomentState:
    """Weyl moments of the Gaussian packet up to ``n_max``.

    Weyl-ordered expectation values are moments of the Wigner function, which
    for a Gaussian packet is a bivariate normal centred at (q, p).
    """
    _check_n_max(n_max)
    (sxx, sxp), (_, spp) = g.covariance(params.hbar)
    layers = [[1.0]]
    for n in range(1, n_max + 1):
        vals = []
        for l in range(n + 1):
            a, b = n - l, l
            s = 0.0
            for i in range(a + 1):
                for j in range(b + 1):
                    mu = _central_moment(i, j, sxx, sxp, spp)
                    if mu:
                        s += comb(a, i) * comb(b, j) * g.q ** (a - i) * g.p ** (b - j) * mu
            vals.append(s)
        layers.append(vals)
    return MomentState(layers)


def ermakov_gaussian(g: GaussianState, hbar: float) -> float:
    """Ermakov-Lewis invariant in Gaussian parameters."""
    return (g.q * g.beta - g.p * g.alpha) ** 2 + hbar ** 2 * g.q ** 2 / (4 * g.alpha ** 2) + hbar ** 2 / 4


def _rhs_factory(V4: float, params: SystemParams, alpha_floor: float = 0.0):
    m, hbar = params.m, params.hbar

    def rhs(y, w2):
        q, p, a, b = y[0], y[1], y[2], y[3]
        if np.real(a) <= alpha_floor:
            raise SingularityError(
                f"gaussian_effective: alpha={np.real(a):.3g} fell below guard {alpha_floor:.3g}")
        V2 = m * w2
        return np.array([
            p / m,
            -(V2 * q + V4 / 6.0 * q ** 3 + 0.5 * V4 * q * a ** 2),
            b / m,
            hbar ** 2 / (4 * m * a ** 3) - (V2 * a + 0.5 * V4 * a ** 3 + 0.5 * V4 * q ** 2 * a),
        ])

    return rhs


def effective_rhs(g: GaussianState, pot: PotentialSpec, params: SystemParams, t: float) -> np.ndarray:
    """Time derivative ``(q', p', alpha', beta')``."""
    return _rhs_factory(pot.V4, params)(g.as_array(), pot.omega_profile.omega_sq(t))


@dataclass
class GaussianSeries:
    times: np.ndarray
    states: np.ndarray  # (T, 4): q, p, alpha, beta
    gamma: float = 0.0

    @property
    def q(self):
        return self.states[:, 0]

    @property
    def p(self):
        return self.states[:, 1]

    @property
    def alpha(self):
        return self.states[:, 2]

    @property
    def beta(self):
        return self.states[:, 3]

    def state(self, i: int) -> GaussianState:
        return GaussianState.from_array(self.states[i], self.gamma)

    def moments(self, params: SystemParams, n_max: int) -> MomentSeries:
        st = [gaussian_moments(self.state(i), params, n_max) for i in range(len(self.times))]
        data = [np.array([s.layers[n].values for s in st]) for n in range(n_max + 1)]
        return MomentSeries(self.times, data, {"engine": "gaussian"})


def evolve_gaussian(g0: GaussianState, pot: PotentialSpec, params: SystemParams,
                    interval: tuple[float, float], dt: float, stride: int = 1) -> GaussianSeries:
    """RK4 integration of the effective equations.

    Raises ``SingularityError`` if alpha drops below ``1e-12 * alpha0``.
    """
    dt, nsteps = uniform_steps(interval, dt)
    rhs = _rhs_factory(pot.V4, params, ALPHA_FLOOR * g0.alpha)
    times, ys = rk4_integrate(rhs, g0.as_array(), pot.omega_profile, interval[0], dt, nsteps, stride)
    return GaussianSeries(times, ys, g0.gamma)


def kinetic_energy(g: GaussianState, params: SystemParams) -> float:
    m, hbar = params.m, params.hbar
    return g.p ** 2 / (2 * m) + g.beta ** 2 / (2 * m) + hbar ** 2 / (8 * m * g.alpha ** 2)


def potential_energy(g: GaussianState, pot: PotentialSpec, params: SystemParams, t: float) -> float:
    """Gaussian average of the potential, truncated at quartic order."""
    V2, V4 = pot.V2(t, params.m), pot.V4
    q, a = g.q, g.alpha
    return (pot(q, t, params.m) + 0.5 * V2 * a ** 2 + V4 / 8.0 * a ** 4
            + V4 / 4.0 * q ** 2 * a ** 2)


def effective_hamiltonian(g: GaussianState, pot: PotentialSpec, params: SystemParams,
                          t: float = 0.0) -> float:
    return kinetic_energy(g, params) + potential_energy(g, pot, params, t)

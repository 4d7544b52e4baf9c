"""Split-step Fourier reference solver for the 1-d Schroedinger equation.

Independent of the moment machinery: it evolves the wave-function itself on a
periodic grid and measures Weyl moments by quadrature, with ``p`` acting by
Fourier differentiation and ``x`` by multiplication.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from math import comb

import numpy as np

from .classical import SystemParams, uniform_steps
from .errors import ConfigError, DomainError, UntrustedResultError
from .gaussian import GaussianState, PotentialSpec
from .moments import MomentSeries, MomentState

GRID_N_DEFAULT = 1024
GRID_DOMAIN_DEFAULT = (-20.0, 20.0)
EDGE_FRACTION = 0.05
EDGE_MASS_TOL = 1e-10
IMAG_TOL = 1e-9
ORACLE_N_MAX = 6


@dataclass(frozen=True, eq=False)
class GridWavefunction:
    x_min: float
    x_max: float
    psi: np.ndarray

    def __post_init__(self):
        N = len(self.psi)
        if N < 2 or N & (N - 1):
            raise ConfigError(f"grid size must be a power of two, got {N}")
        if not self.x_max > self.x_min:
            raise ConfigError("grid needs x_max > x_min")

    @property
    def N(self) -> int:
        return len(self.psi)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.N

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.N)

    @property
    def k(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.N, self.dx)

    def norm(self) -> float:
        return float(np.sum(np.abs(self.psi) ** 2) * self.dx)

    def edge_mass(self) -> float:
        """Probability in the outer 5% of the grid (both ends)."""
        w = max(1, int(round(EDGE_FRACTION * self.N)))
        rho = np.abs(self.psi) ** 2 * self.dx
        return float(rho[:w].sum() + rho[-w:].sum())

    def spectral_tail(self) -> float:
        """Fraction of momentum-space weight in the top 5% of |k|."""
        dens = np.abs(np.fft.fft(self.psi)) ** 2
        ak = np.abs(self.k)
        cut = (1 - EDGE_FRACTION) * ak.max()
        return float(dens[ak >= cut].sum() / dens.sum())

    def check_confined(self, tol: float = EDGE_MASS_TOL):
        em, st = self.edge_mass(), self.spectral_tail()
        if em > tol:
            raise UntrustedResultError(
                f"pde_oracle: boundary mass {em:.3g} exceeds {tol:g}; enlarge the domain")
        if st > tol:
            raise UntrustedResultError(
                f"pde_oracle: momentum tail {st:.3g} exceeds {tol:g}; grid too coarse (N={self.N})")


def init_gaussian(g: GaussianState, grid: tuple[float, float, int], params: SystemParams) -> GridWavefunction:
    """Sample ``exp(i p (x-q)/hbar) exp(-A (x-q)^2)`` and normalise on the grid (phase 0)."""
    x_min, x_max, N = grid
    if not 6 * g.alpha < x_max - x_min:
        raise DomainError(f"packet width alpha={g.alpha} does not fit in [{x_min}, {x_max}]")
    x = x_min + (x_max - x_min) / N * np.arange(N)
    A = g.width_parameter(params.hbar)
    psi = np.exp(1j * g.p * (x - g.q) / params.hbar - A * (x - g.q) ** 2)
    w = GridWavefunction(x_min, x_max, psi)
    return GridWavefunction(x_min, x_max, psi / math.sqrt(w.norm()))


class _Propagator:
    def __init__(self, grid: GridWavefunction, pot: PotentialSpec, params: SystemParams, dt: float):
        self.pot, self.params, self.dt = pot, params, dt
        self.x = grid.x
        self.x2 = self.x ** 2
        self.x4 = self.x2 ** 2 if pot.V4 else None
        k = grid.k
        self.kinetic = np.exp(-1j * params.hbar * k ** 2 * dt / (2 * params.m))

    def half_potential(self, t_mid: float) -> np.ndarray:
        m, hbar = self.params.m, self.params.hbar
        V = self.pot.V0 + 0.5 * m * self.pot.omega_profile.omega_sq(t_mid) * self.x2
        if self.x4 is not None:
            V = V + self.pot.V4 / 24.0 * self.x4
        return np.exp(-0.5j * self.dt / hbar * V)

    def __call__(self, psi: np.ndarray, t: float) -> np.ndarray:
        half = self.half_potential(t + 0.5 * self.dt)
        psi = half * psi
        psi = np.fft.ifft(self.kinetic * np.fft.fft(psi))
        return half * psi


def step_splitstep(w: GridWavefunction, pot: PotentialSpec, params: SystemParams,
                   t: float, dt: float) -> GridWavefunction:
    """One Strang step: half potential, full kinetic, half potential.

    The potential is evaluated at the midpoint ``t + dt/2``.
    """
    prop = _Propagator(w, pot, params, dt)
    return GridWavefunction(w.x_min, w.x_max, prop(w.psi, t))


def _p_powers(w: GridWavefunction, hbar: float, jmax: int) -> list[np.ndarray]:
    fk = np.fft.fft(w.psi)
    hk = hbar * w.k
    return [w.psi] + [np.fft.ifft(hk ** j * fk) for j in range(1, jmax + 1)]


def _moment_from_powers(w, pp, n, l, x):
    xa = x ** (n - l)
    total = 0j
    for k in range(l + 1):
        total += comb(l, k) * np.vdot(pp[k], xa * pp[l - k])
    return total * w.dx / 2 ** l


def _checked_real(z: complex, n: int, l: int) -> float:
    if abs(z.imag) > IMAG_TOL * max(1.0, abs(z.real)):
        raise UntrustedResultError(
            f"pde_oracle: moment ({n},{l}) has imaginary part {z.imag:.3g}")
    return float(z.real)


def grid_moment(w: GridWavefunction, n: int, l: int, params: SystemParams, *, check: bool = True) -> float:
    """``<O_{n,l}>`` by quadrature, ``2^-l sum_k C(l,k) <p^k psi| x^(n-l) p^(l-k) psi>``."""
    if not (0 <= l <= n <= ORACLE_N_MAX):
        raise ConfigError(f"grid moments need 0 <= l <= n <= {ORACLE_N_MAX}, got ({n}, {l})")
    if check:
        w.check_confined()
    pp = _p_powers(w, params.hbar, l)
    return _checked_real(_moment_from_powers(w, pp, n, l, w.x), n, l)


def grid_moments(w: GridWavefunction, params: SystemParams, n_max: int, *, check: bool = True) -> MomentState:
    """All moments up to ``n_max`` sharing one set of Fourier derivatives.

    Layer 0 is reported as exactly 1; the measured norm is available from ``w.norm()``.
    """
    if not 0 <= n_max <= ORACLE_N_MAX:
        raise ConfigError(f"grid moments limited to n <= {ORACLE_N_MAX}")
    if check:
        w.check_confined()
    pp = _p_powers(w, params.hbar, n_max)
    x = w.x
    layers = [[1.0]]
    for n in range(1, n_max + 1):
        layers.append([_checked_real(_moment_from_powers(w, pp, n, l, x), n, l) for l in range(n + 1)])
    return MomentState(layers)


@dataclass
class OracleRun:
    series: MomentSeries
    norms: np.ndarray
    final: GridWavefunction

    @property
    def norm_drift(self) -> float:
        return float(np.max(np.abs(self.norms - self.norms[0])))


def run_oracle(initial: GridWavefunction, pot: PotentialSpec, params: SystemParams,
               interval: tuple[float, float], dt: float, stride: int = 1,
               n_max: int = 4, *, check: bool = True) -> OracleRun:
    """Evolve with Strang splitting and record moments every ``stride`` steps."""
    t0, _ = interval
    dt, nsteps = uniform_steps(interval, dt)
    prop = _Propagator(initial, pot, params, dt)
    psi = initial.psi
    times, states, norms = [], [], []

    def record(t, psi):
        w = GridWavefunction(initial.x_min, initial.x_max, psi)
        times.append(t)
        states.append(grid_moments(w, params, n_max, check=check))
        norms.append(w.norm())

    record(t0, psi)
    for k in range(nsteps):
        psi = prop(psi, t0 + k * dt)
        if (k + 1) % stride == 0:
            record(t0 + (k + 1) * dt, psi)
    data = [np.array([s.layers[n].values for s in states]) for n in range(n_max + 1)]
    series = MomentSeries(np.array(times), data, {"engine": "pde", "dt": dt, "N": initial.N})
    return OracleRun(series, np.array(norms), GridWavefunction(initial.x_min, initial.x_max, psi))

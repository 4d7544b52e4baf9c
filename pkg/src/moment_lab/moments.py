"""Moment hierarchy of the time-dependent harmonic oscillator.

Moments are the raw expectation values ``<O_{n,l}>`` of Weyl-symmetric
monomials with ``n - l`` powers of x and ``l`` powers of p. Under a quadratic
Hamiltonian the layers of fixed ``n`` evolve independently, and every layer is
spanned by polynomials of degree ``n`` in the classical pair ``(q1, q2)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .classical import (FrequencyProfile, StepSizeWarning, SystemParams, TrajectoryPair,
                        rk4_integrate, solve_classical, uniform_steps)
from .errors import ConfigError, SingularBasisError

N_MAX_DEFAULT = 6
N_MAX_LIMIT = 12


@dataclass
class MomentLayer:
    n: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.n < 0 or self.values.shape != (self.n + 1,):
            raise ConfigError(f"layer n={self.n} needs {self.n + 1} values, got shape {self.values.shape}")

    def satisfies_uncertainty(self, hbar: float, rtol: float = 1e-9) -> bool:
        """For n = 2: ``<x^2><p^2> - <D>^2 >= hbar^2/4`` up to ``rtol``."""
        if self.n != 2:
            raise ConfigError("uncertainty check applies to the n=2 layer")
        return ermakov_invariant(self) >= hbar ** 2 / 4 * (1 - rtol)


@dataclass
class MomentState:
    """Layers ``n = 0..n_max``; layer 0 is the norm and must be exactly 1."""

    layers: list

    def __post_init__(self):
        layers = [l if isinstance(l, MomentLayer) else MomentLayer(n, l)
                  for n, l in enumerate(self.layers)]
        for n, layer in enumerate(layers):
            if layer.n != n:
                raise ConfigError(f"layer at position {n} has n={layer.n}")
        if not layers or layers[0].values[0] != 1.0:
            raise ConfigError("layer 0 must hold the normalization 1")
        self.layers = layers

    @property
    def n_max(self) -> int:
        return len(self.layers) - 1

    def layer(self, n: int) -> MomentLayer:
        return self.layers[n]

    def __getitem__(self, nl: tuple[int, int]) -> float:
        n, l = nl
        return float(self.layers[n].values[l])

    def flat(self) -> np.ndarray:
        """Values in lexicographic (n, l) order."""
        return np.concatenate([l.values for l in self.layers])

    @classmethod
    def from_flat(cls, vec, n_max: int) -> "MomentState":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (layer_offsets(n_max)[-1],):
            raise ConfigError(f"expected {layer_offsets(n_max)[-1]} values for n_max={n_max}")
        off = layer_offsets(n_max)
        return cls([vec[off[n]:off[n + 1]] for n in range(n_max + 1)])


@dataclass
class BasisCoefficients:
    n: int
    c: np.ndarray
    condition_number: float = float("nan")

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        if self.c.shape != (self.n + 1,) or not np.all(np.isfinite(self.c)):
            raise ConfigError(f"basis coefficients for n={self.n} must be {self.n + 1} finite values")


@dataclass
class MomentSeries:
    """Moments sampled at ``times``; ``data[n]`` has shape ``(len(times), n+1)``."""

    times: np.ndarray
    data: list
    meta: dict = field(default_factory=dict)

    @property
    def n_max(self) -> int:
        return len(self.data) - 1

    def layer(self, n: int) -> np.ndarray:
        return self.data[n]

    def state(self, i: int) -> MomentState:
        return MomentState([d[i] for d in self.data])

    def flat(self) -> np.ndarray:
        return np.concatenate(self.data, axis=1)

    def __len__(self):
        return len(self.times)


def layer_offsets(n_max: int) -> list[int]:
    return [n * (n + 1) // 2 for n in range(n_max + 2)]


def _check_n_max(n_max):
    if not 0 <= n_max <= N_MAX_LIMIT:
        raise ConfigError(f"n_max must be in [0, {N_MAX_LIMIT}], got {n_max}")


def layer_rhs(layer: MomentLayer, omega_sq: float, m: float) -> np.ndarray:
    """``d/dt <O_{n,l}> = (n-l)/m <O_{n,l+1}> - m omega^2 l <O_{n,l-1}>``."""
    n, v = layer.n, layer.values
    out = np.zeros(n + 1)
    l = np.arange(n + 1)
    out[:-1] += (n - l[:-1]) / m * v[1:]
    out[1:] -= m * omega_sq * l[1:] * v[:-1]
    return out


def _stacked_rhs(n_max: int, m: float):
    # block-diagonal: each entry reads only neighbours in its own layer
    idx_up, idx_dn, c_up, c_dn = [], [], [], []
    for n in range(n_max + 1):
        base = n * (n + 1) // 2
        for l in range(n + 1):
            j = base + l
            idx_up.append(j + 1 if l < n else j)
            idx_dn.append(j - 1 if l > 0 else j)
            c_up.append((n - l) / m)
            c_dn.append(-m * l)
    idx_up, idx_dn = np.array(idx_up), np.array(idx_dn)
    c_up, c_dn = np.array(c_up), np.array(c_dn)

    def rhs(y, w2):
        return c_up * y[..., idx_up] + (w2 * c_dn) * y[..., idx_dn]

    return rhs


def evolve_layers(initial: MomentState, profile: FrequencyProfile, params: SystemParams,
                  interval: tuple[float, float], dt: float, stride: int = 1) -> MomentSeries:
    """Integrate every layer with RK4; the layers never exchange data."""
    t0, t1 = interval
    dt, nsteps = uniform_steps(interval, dt)
    n_max = initial.n_max
    _check_n_max(n_max)
    wmax = profile.max_omega(t0, t1)
    if dt * max(n_max, 1) * wmax > 0.5:
        warnings.warn(f"dt*n_max*max(omega) = {dt * n_max * wmax:.3g} > 0.5; high layers under-resolved",
                      StepSizeWarning, stacklevel=2)
    rhs = _stacked_rhs(n_max, params.m)
    times, ys = rk4_integrate(rhs, initial.flat(), profile, t0, dt, nsteps, stride)
    off = layer_offsets(n_max)
    data = [ys[:, off[n]:off[n + 1]] for n in range(n_max + 1)]
    return MomentSeries(times, data, {"engine": "hierarchy", "dt": dt})


@lru_cache(maxsize=None)
def _closed_form_terms(n: int, l: int, r: int) -> tuple[tuple[int, int, float], ...]:
    """Exact factorial weights of the closed-form solution, as ``(a, b, weight)``."""
    f = math.factorial
    terms = []
    for a in range(0, min(l, r) + 1):
        b = l - a
        if b > n - r:
            continue
        w = Fraction(f(n - l) * f(r) * f(n - r) * f(l),
                     f(n) * f(r - a) * f(n - r - b) * f(a) * f(b))
        terms.append((a, b, float(w)))
    return tuple(terms)


def _check_nlr(n, l, r):
    if not (0 <= l <= n and 0 <= r <= n):
        raise ConfigError(f"need 0 <= l, r <= n, got n={n}, l={l}, r={r}")


def closed_form_moment(n: int, l: int, r: int, pair: TrajectoryPair, m: float, t):
    """The r-th closed-form solution of layer n, component l, at time(s) t.

    ``m^l * sum_{a+b=l} w(a, b) q1'^a q2'^b q1^(r-a) q2^(n-r-b)`` with
    ``w = (n-l)! r! (n-r)! l! / (n! (r-a)! (n-r-b)! a! b!)``.
    """
    _check_nlr(n, l, r)
    q1, q2, d1, d2 = (np.asarray(v) for v in pair.evaluate(t))
    out = sum(w * d1 ** a * d2 ** b * q1 ** (r - a) * q2 ** (n - r - b)
              for a, b, w in _closed_form_terms(n, l, r))
    out = m ** l * out
    return float(out) if np.ndim(t) == 0 else out


def basis_matrix(n: int, pair: TrajectoryPair, m: float, t) -> np.ndarray:
    """``M[l, r] = closed_form_moment(n, l, r, t)``; stacked along a leading axis for arrays."""
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    M = np.empty((len(tt), n + 1, n + 1))
    for l in range(n + 1):
        for r in range(n + 1):
            M[:, l, r] = closed_form_moment(n, l, r, pair, m, tt)
    return M[0] if np.ndim(t) == 0 else M


@dataclass
class ClosedFormReport:
    n: int
    residuals: dict  # (l, r) -> max relative residual
    sample_times: np.ndarray

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)

    def worst(self) -> tuple[int, int]:
        return max(self.residuals, key=self.residuals.get)


def verify_closed_form(n: int, profile: FrequencyProfile, params: SystemParams,
                       interval: tuple[float, float], *, dt: float = 1e-3, h: float = 1e-4,
                       samples: int = 101, pair: TrajectoryPair | None = None) -> ClosedFormReport:
    """Residual of the hierarchy on each closed-form solution.

    The time derivative is a central difference of step ``h`` through the dense
    classical output; the right-hand side uses the neighbouring closed forms.
    Residuals are normalised by ``max(1, max_t |rhs|)`` per (l, r). Sample
    times keep ``2h`` away from the ends and from frequency discontinuities.
    """
    if pair is None:
        pair = solve_classical(profile, params, interval, dt)
    t0, t1 = interval
    ts = np.linspace(t0 + 2 * h, t1 - 2 * h, samples)
    for b in profile.breakpoints:
        ts = ts[np.abs(ts - b) > 2 * h]
    m = params.m
    w2 = profile.omega_sq(ts)
    vals = np.array([[closed_form_moment(n, l, r, pair, m, ts) for r in range(n + 1)]
                     for l in range(n + 1)])  # (l, r, t)
    res = {}
    for r in range(n + 1):
        for l in range(n + 1):
            fd = (closed_form_moment(n, l, r, pair, m, ts + h)
                  - closed_form_moment(n, l, r, pair, m, ts - h)) / (2 * h)
            rhs = np.zeros_like(ts)
            if l < n:
                rhs += (n - l) / m * vals[l + 1, r]
            if l > 0:
                rhs -= m * w2 * l * vals[l - 1, r]
            scale = max(1.0, float(np.max(np.abs(rhs))))
            res[(l, r)] = float(np.max(np.abs(fd - rhs))) / scale
    return ClosedFormReport(n, res, ts)


def fit_basis(initial_layer: MomentLayer, pair: TrajectoryPair, m: float,
              t0: float | None = None, *, max_condition: float = 1e12) -> BasisCoefficients:
    """Express a layer at ``t0`` in the closed-form basis (LU with partial pivoting)."""
    n = initial_layer.n
    t0 = pair.t0 if t0 is None else t0
    M = basis_matrix(n, pair, m, t0)
    cond = float(np.linalg.cond(M))
    if not np.isfinite(cond) or cond > max_condition:
        raise SingularBasisError(
            f"moment_dynamics: basis matrix for n={n} at t={t0} is singular (cond={cond:.3g})", cond)
    c = np.linalg.solve(M, initial_layer.values)
    return BasisCoefficients(n, c, cond)


def reconstruct(coeffs: BasisCoefficients, pair: TrajectoryPair, m: float, t) -> np.ndarray:
    """Layer values ``sum_r c_r <O_{n,l}>_r`` at time(s) ``t``; shape (..., n+1)."""
    M = basis_matrix(coeffs.n, pair, m, t)
    return M @ coeffs.c


def closed_form_evolution(initial: MomentState, pair: TrajectoryPair, m: float,
                          times) -> MomentSeries:
    times = np.asarray(times, dtype=float)
    data = []
    for layer in initial.layers:
        c = fit_basis(layer, pair, m)
        data.append(reconstruct(c, pair, m, times))
    return MomentSeries(times, data, {"engine": "closed_form"})


def _values(layer):
    return layer.values if isinstance(layer, MomentLayer) else np.asarray(layer, dtype=float)


def ermakov_invariant(layer2) -> float:
    """``<x^2><p^2> - <D>^2`` from the n=2 layer (works along a leading time axis)."""
    v = _values(layer2)
    if v.shape[-1] != 3:
        raise ConfigError("Ermakov invariant needs the n=2 layer")
    return v[..., 0] * v[..., 2] - v[..., 1] ** 2


def higher_invariant(layer):
    """``1/2 sum_l (-1)^l C(n,l) <O_{n,l}><O_{n,n-l}>``; identically 0 for odd n."""
    v = _values(layer)
    n = v.shape[-1] - 1
    total = 0.0
    for l in range(n + 1):
        total = total + (-1) ** l * math.comb(n, l) * (v[..., l] * v[..., n - l])
    return 0.5 * total


def invariant_scale(layer):
    """Sum of absolute summands of ``higher_invariant``; the yardstick for its cancellation."""
    v = _values(layer)
    n = v.shape[-1] - 1
    return 0.5 * sum(math.comb(n, l) * np.abs(v[..., l] * v[..., n - l]) for l in range(n + 1))


def uncertainty_product(state) -> float:
    """Robertson-Schroedinger product of the centred second moments."""
    if isinstance(state, MomentState):
        v1, v2 = state.layers[1].values, state.layers[2].values
    else:  # MomentSeries
        v1, v2 = state.layer(1), state.layer(2)
    x, p = v1[..., 0], v1[..., 1]
    dx = v2[..., 0] - x * x
    dp = v2[..., 2] - p * p
    dxp = v2[..., 1] - x * p
    return dx * dp - dxp * dxp


def quadratic_energy(layer2, omega_sq, m: float):
    """``<p^2>/2m + m omega^2 <x^2>/2``; not conserved when omega varies."""
    v = _values(layer2)
    return v[..., 2] / (2 * m) + 0.5 * m * np.asarray(omega_sq) * v[..., 0]


def coherent_state(n_max: int, params: SystemParams, omega: float = 1.0,
                   q: float = 0.0, p: float = 0.0) -> MomentState:
    """Moments of the coherent state of frequency ``omega`` displaced to (q, p)."""
    from .gaussian import GaussianState, gaussian_moments
    alpha = math.sqrt(params.hbar / (2 * params.m * omega))
    return gaussian_moments(GaussianState(q, p, alpha, 0.0), params, n_max)

"""Classical layer: frequency profiles and the fundamental solution pair.

Everything downstream is built on the two solutions ``q1``, ``q2`` of
``x'' + omega(t)**2 x = 0`` with identity initial data at ``t0``,
so that their Wronskian ``q1 q2' - q2 q1'`` is one.
"""
from __future__ import annotations

import bisect
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigError, DomainError, SingularityError, StepSizeError

logger = logging.getLogger(__name__)

PROFILE_KINDS = ("constant", "sinusoidal", "piecewise", "tabulated")

# relative tolerance for snapping a step end onto a discontinuity
_SNAP = 1e-9
WRONSKIAN_TOL = 1e-8


class StepSizeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SystemParams:
    m: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        if not (self.m > 0 and math.isfinite(self.m)):
            raise ConfigError(f"mass must be positive and finite, got {self.m}")
        if not (self.hbar > 0 and math.isfinite(self.hbar)):
            raise ConfigError(f"hbar must be positive and finite, got {self.hbar}")


@dataclass(frozen=True)
class FrequencyProfile:
    """Time-dependent oscillator frequency.

    Use the classmethod constructors rather than the raw fields:

    - ``constant(omega0)``: omega(t) = omega0
    - ``sinusoidal(omega0, eps, Omega)``: omega(t)**2 = omega0**2 (1 + eps sin(Omega t))
    - ``piecewise([(t_i, omega_i), ...])``: omega = omega_i on [t_i, t_{i+1})
    - ``tabulated([(t_i, omega_i), ...])``: cubic spline through omega (not omega**2)

    ``allow_inverted`` permits omega = 0 and omega**2 < 0.
    """

    kind: str
    omega0: float = 1.0
    eps: float = 0.0
    Omega: float = 0.0
    points: tuple[tuple[float, float], ...] = ()
    allow_inverted: bool = False
    _times: tuple[float, ...] = field(default=(), init=False, repr=False, compare=False)
    _spline: object = field(default=None, init=False, repr=False, compare=False)

    @classmethod
    def constant(cls, omega0: float, *, allow_inverted: bool = False) -> "FrequencyProfile":
        return cls("constant", omega0=float(omega0), allow_inverted=allow_inverted)

    @classmethod
    def sinusoidal(cls, omega0: float, eps: float, Omega: float, *,
                   allow_inverted: bool = False) -> "FrequencyProfile":
        return cls("sinusoidal", omega0=float(omega0), eps=float(eps), Omega=float(Omega),
                   allow_inverted=allow_inverted)

    @classmethod
    def piecewise(cls, breakpoints: Sequence[tuple[float, float]], *,
                  allow_inverted: bool = False) -> "FrequencyProfile":
        pts = tuple((float(t), float(w)) for t, w in breakpoints)
        return cls("piecewise", points=pts, allow_inverted=allow_inverted)

    @classmethod
    def tabulated(cls, samples: Sequence[tuple[float, float]], *,
                  allow_inverted: bool = False) -> "FrequencyProfile":
        pts = tuple((float(t), float(w)) for t, w in samples)
        return cls("tabulated", points=pts, allow_inverted=allow_inverted)

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ConfigError(f"unknown profile kind {self.kind!r}; expected one of {PROFILE_KINDS}")
        if self.kind == "constant":
            self._check_omega(self.omega0)
        elif self.kind == "sinusoidal":
            self._check_omega(self.omega0)
            if not all(map(math.isfinite, (self.eps, self.Omega))):
                raise ConfigError("sinusoidal eps and Omega must be finite")
            if abs(self.eps) >= 1 and not self.allow_inverted:
                raise ConfigError(
                    f"sinusoidal eps={self.eps} lets omega^2 change sign; pass allow_inverted")
        else:
            if len(self.points) < (1 if self.kind == "piecewise" else 4):
                raise ConfigError(f"{self.kind} profile needs more points, got {len(self.points)}")
            times = [t for t, _ in self.points]
            if any(b <= a for a, b in zip(times, times[1:])):
                raise ConfigError(f"{self.kind} profile times must be strictly increasing")
            for _, w in self.points:
                self._check_omega(w)
            object.__setattr__(self, "_times", tuple(times))
            if self.kind == "tabulated":
                spline = CubicSpline(times, [w for _, w in self.points])
                object.__setattr__(self, "_spline", spline)

    def _check_omega(self, w):
        if not math.isfinite(w):
            raise ConfigError(f"omega must be finite, got {w}")
        if w == 0 and not self.allow_inverted:
            raise ConfigError("omega = 0 (free particle) requires allow_inverted")

    @property
    def domain(self) -> tuple[float, float]:
        if self.kind == "piecewise":
            return self._times[0], math.inf
        if self.kind == "tabulated":
            return self._times[0], self._times[-1]
        return -math.inf, math.inf

    @property
    def breakpoints(self) -> tuple[float, ...]:
        """Times where omega is discontinuous."""
        return self._times[1:] if self.kind == "piecewise" else ()

    def omega_sq(self, t, left: bool = False):
        """omega(t)**2. ``left=True`` takes the left limit at a discontinuity.

        Accepts a scalar or an array of times.
        """
        if np.ndim(t) == 0:
            return self._omega_sq_scalar(float(t), left)
        t = np.asarray(t, dtype=float)
        lo, hi = self.domain
        if np.any(t < lo) or np.any(t > hi):
            raise DomainError(f"time outside profile domain [{lo}, {hi}]")
        if self.kind == "constant":
            return np.full(t.shape, self.omega0 ** 2)
        if self.kind == "sinusoidal":
            return self.omega0 ** 2 * (1.0 + self.eps * np.sin(self.Omega * t))
        if self.kind == "piecewise":
            idx = np.searchsorted(self._times, t, side="left" if left else "right") - 1
            idx = np.maximum(idx, 0)
            return np.array([w for _, w in self.points])[idx] ** 2
        return self._spline(t) ** 2

    def _omega_sq_scalar(self, t: float, left: bool) -> float:
        if self.kind == "constant":
            return self.omega0 * self.omega0
        if self.kind == "sinusoidal":
            return self.omega0 ** 2 * (1.0 + self.eps * math.sin(self.Omega * t))
        lo, hi = self.domain
        if t < lo or t > hi:
            raise DomainError(f"t={t} outside profile domain [{lo}, {hi}]")
        if self.kind == "piecewise":
            if left and t > lo:
                i = bisect.bisect_left(self._times, t) - 1
            else:
                i = bisect.bisect_right(self._times, t) - 1
            w = self.points[i][1]
            return w * w
        return float(self._spline(t)) ** 2

    def max_omega(self, t0: float, t1: float) -> float:
        """Largest |omega| on [t0, t1], sampled; used for step-size advice."""
        if self.kind == "constant":
            return abs(self.omega0)
        if self.kind == "sinusoidal":
            return abs(self.omega0) * math.sqrt(1.0 + abs(self.eps))
        ts = np.linspace(t0, t1, 2001)
        vals = list(np.sqrt(np.abs(self.omega_sq(ts))))
        vals += [abs(w) for t, w in self.points if t0 <= t <= t1]
        return float(max(vals))

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind in ("constant", "sinusoidal"):
            d["omega0"] = self.omega0
        if self.kind == "sinusoidal":
            d.update(eps=self.eps, Omega=self.Omega)
        if self.kind in ("piecewise", "tabulated"):
            d["points"] = [list(p) for p in self.points]
        return d

    @classmethod
    def from_dict(cls, d: dict, *, allow_inverted: bool = False) -> "FrequencyProfile":
        d = dict(d)
        kind = d.pop("kind", None)
        try:
            if kind == "constant":
                return cls.constant(d["omega0"], allow_inverted=allow_inverted)
            if kind == "sinusoidal":
                return cls.sinusoidal(d["omega0"], d["eps"], d["Omega"],
                                      allow_inverted=allow_inverted)
            if kind in ("piecewise", "tabulated"):
                pts = d.get("points") or d.get("breakpoints") or d.get("samples")
                return getattr(cls, kind)(pts, allow_inverted=allow_inverted)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad {kind} profile parameters: {exc}") from exc
        raise ConfigError(f"unknown profile kind {kind!r}")


def eval_omega_sq(profile: FrequencyProfile, t) -> float:
    return profile.omega_sq(t)


def uniform_steps(interval: tuple[float, float], dt: float) -> tuple[float, int]:
    """Shrink ``dt`` so that a whole number of steps spans ``interval``."""
    t0, t1 = map(float, interval)
    if not dt > 0:
        raise ConfigError("dt must be positive")
    if not t1 > t0:
        raise ConfigError(f"interval must satisfy t1 > t0, got ({t0}, {t1})")
    n = max(1, math.ceil((t1 - t0) / dt - 1e-9))
    return (t1 - t0) / n, n


def snap_to_breaks(profile: FrequencyProfile, t: np.ndarray, dt: float) -> np.ndarray:
    """Move grid times lying within round-off of a discontinuity onto it."""
    t = np.array(t, dtype=float)
    for b in profile.breakpoints:
        t[np.abs(t - b) <= _SNAP * dt] = b
    return t


def rk4_integrate(rhs: Callable, y0, profile: FrequencyProfile, t0: float, dt: float,
                  nsteps: int, stride: int = 1):
    """Fixed-step classical RK4 for systems whose time dependence is omega**2 only.

    ``rhs(y, omega_sq)`` returns dy/dt. The first stage reads the right limit of
    omega**2 and the last stage the left limit, so discontinuities that fall on
    grid points are integrated without loss of order; discontinuities strictly
    inside a step split that step in two.

    Returns the sample times and an array of states, every ``stride`` steps.
    """
    y = np.array(y0, copy=True)
    breaks = [b for b in profile.breakpoints if t0 < b < t0 + nsteps * dt]
    snap = _SNAP * dt

    def snapped(t):
        for b in breaks:
            if abs(t - b) <= snap:
                return b
        return t

    def step(y, ta, tb):
        h = tb - ta
        k1 = rhs(y, profile.omega_sq(ta))
        wm = profile.omega_sq(ta + 0.5 * h)
        k2 = rhs(y + 0.5 * h * k1, wm)
        k3 = rhs(y + 0.5 * h * k2, wm)
        k4 = rhs(y + h * k3, profile.omega_sq(tb, left=True))
        return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    out_t = [t0]
    out_y = [y.copy()]
    for k in range(nsteps):
        ta = snapped(t0 + k * dt)
        tb = snapped(t0 + (k + 1) * dt)
        inner = [b for b in breaks if ta + snap < b < tb - snap]
        for b in inner:
            y = step(y, ta, b)
            ta = b
        y = step(y, ta, tb)
        if (k + 1) % stride == 0:
            out_t.append(t0 + (k + 1) * dt)
            out_y.append(y.copy())
    return np.array(out_t), np.array(out_y)


def _hermite5(s, dt, y0, v0, a0, y1, v1, a1):
    """Quintic Hermite value and derivative on a unit cell."""
    s2 = s * s
    s3 = s2 * s
    s4 = s3 * s
    s5 = s4 * s
    h0 = 1 - 10 * s3 + 15 * s4 - 6 * s5
    h1 = s - 6 * s3 + 8 * s4 - 3 * s5
    h2 = 0.5 * (s2 - 3 * s3 + 3 * s4 - s5)
    h3 = 0.5 * (s3 - 2 * s4 + s5)
    h4 = -4 * s3 + 7 * s4 - 3 * s5
    h5 = 10 * s3 - 15 * s4 + 6 * s5
    d0 = -30 * s2 + 60 * s3 - 30 * s4
    d1 = 1 - 18 * s2 + 32 * s3 - 15 * s4
    d2 = 0.5 * (2 * s - 9 * s2 + 12 * s3 - 5 * s4)
    d3 = 0.5 * (3 * s2 - 8 * s3 + 5 * s4)
    d4 = -12 * s2 + 28 * s3 - 15 * s4
    d5 = -d0
    v0, v1 = v0 * dt, v1 * dt
    a0, a1 = a0 * dt * dt, a1 * dt * dt
    val = y0 * h0 + v0 * h1 + a0 * h2 + a1 * h3 + v1 * h4 + y1 * h5
    der = (y0 * d0 + v0 * d1 + a0 * d2 + a1 * d3 + v1 * d4 + y1 * d5) / dt
    return val, der


@dataclass(frozen=True, eq=False)
class TrajectoryPair:
    """Sampled fundamental solutions on a uniform grid ``t0 + k*dt``.

    ``evaluate`` gives dense output by quintic Hermite interpolation using
    q, q' and q'' = -omega**2 q at the cell ends.
    """

    t0: float
    dt: float
    q1: np.ndarray
    q2: np.ndarray
    q1dot: np.ndarray
    q2dot: np.ndarray
    profile: FrequencyProfile

    @property
    def count(self) -> int:
        return len(self.q1)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.count)

    @property
    def t1(self) -> float:
        return self.t0 + self.dt * (self.count - 1)

    def wronskian(self) -> np.ndarray:
        return self.q1 * self.q2dot - self.q2 * self.q1dot

    def evaluate(self, t):
        """Return ``(q1, q2, q1dot, q2dot)`` at time(s) ``t``."""
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        span = self.t1 - self.t0
        tol = 1e-9 * max(self.dt, abs(span))
        if np.any(t < self.t0 - tol) or np.any(t > self.t1 + tol):
            raise DomainError(f"t outside trajectory grid [{self.t0}, {self.t1}]")
        u = (t - self.t0) / self.dt
        k = np.clip(np.floor(u).astype(int), 0, self.count - 2)
        s = np.clip(u - k, 0.0, 1.0)
        ta = snap_to_breaks(self.profile, self.t0 + k * self.dt, self.dt)
        tb = snap_to_breaks(self.profile, self.t0 + (k + 1) * self.dt, self.dt)
        wa = self.profile.omega_sq(ta)
        wb = self.profile.omega_sq(tb, left=True)
        out = []
        for q, qd in ((self.q1, self.q1dot), (self.q2, self.q2dot)):
            out.append(_hermite5(s, self.dt, q[k], qd[k], -wa * q[k],
                                 q[k + 1], qd[k + 1], -wb * q[k + 1]))
        (q1, q1d), (q2, q2d) = out
        if scalar:
            return float(q1[0]), float(q2[0]), float(q1d[0]), float(q2d[0])
        return q1, q2, q1d, q2d


def solve_classical(profile: FrequencyProfile, params: SystemParams,
                    interval: tuple[float, float], dt: float, *,
                    refine_tol: float | None = None, max_refinements: int = 8) -> TrajectoryPair:
    """Integrate the fundamental pair with identity initial data at ``interval[0]``.

    Parameters
    ----------
    profile : FrequencyProfile
    params : SystemParams
        Validated for consistency; the classical equation is mass independent.
    interval : (t0, t1)
    dt : float
        Requested step. Shrunk slightly so the grid lands on ``t1``.
    refine_tol : float, optional
        If given, halve ``dt`` until a step-halved solve agrees to this tolerance.

    Raises
    ------
    StepSizeError
        If the Wronskian drifts from 1 by more than 1e-8.
    """
    t0, t1 = map(float, interval)
    dt, n = uniform_steps((t0, t1), dt)
    wmax = profile.max_omega(t0, t1)
    if dt * wmax > 0.1:
        warnings.warn(f"dt*max(omega) = {dt * wmax:.3g} > 0.1; classical solve may be under-resolved",
                      StepSizeWarning, stacklevel=2)
    pair = _solve_fixed(profile, t0, dt, n)
    if refine_tol is not None:
        for _ in range(max_refinements):
            fine = _solve_fixed(profile, t0, dt / 2, 2 * n)
            err = max(np.max(np.abs(fine.q1[::2] - pair.q1)), np.max(np.abs(fine.q2[::2] - pair.q2)))
            pair, dt, n = fine, dt / 2, 2 * n
            if err < refine_tol:
                break
        else:
            logger.warning("refinement stopped at dt=%g without reaching tol %g", dt, refine_tol)
    drift = float(np.max(np.abs(pair.wronskian() - 1.0)))
    if drift > WRONSKIAN_TOL:
        raise StepSizeError(
            f"classical_core: Wronskian drift {drift:.3g} exceeds {WRONSKIAN_TOL:g}; reduce dt")
    return pair


def _rhs_pair(y, w2):
    # y rows: position, velocity; columns: q1, q2
    return np.array([y[1], -w2 * y[0]])


def _solve_fixed(profile, t0, dt, n):
    y0 = np.array([[1.0, 0.0], [0.0, 1.0]])
    _, ys = rk4_integrate(_rhs_pair, y0, profile, t0, dt, n)
    return TrajectoryPair(t0, dt, ys[:, 0, 0].copy(), ys[:, 0, 1].copy(),
                          ys[:, 1, 0].copy(), ys[:, 1, 1].copy(), profile)


def q2_from_q1(pair: TrajectoryPair, window: tuple[float, float] | None = None, *,
               floor: float = 1e-6):
    """Rebuild q2 from q1 alone as ``q1(t) * (c + int_{ta}^t ds / q1(s)**2)``.

    The integral uses composite Simpson on each grid cell (midpoints from the
    dense interpolant). ``c = q2(ta)/q1(ta)`` fixes the free multiple of q1.

    Returns ``(times, q2_estimate)``.
    """
    ta, tb = window if window is not None else (pair.t0, pair.t1)
    if not tb > ta:
        raise ConfigError("window must satisfy tb > ta")
    k = max(1, math.ceil((tb - ta) / pair.dt - 1e-9))
    times = np.linspace(ta, tb, k + 1)
    mids = 0.5 * (times[:-1] + times[1:])
    q1_nodes = pair.evaluate(times)[0]
    q1_mids = pair.evaluate(mids)[0]
    interleaved = np.empty(2 * k + 1)
    interleaved[0::2], interleaved[1::2] = q1_nodes, q1_mids
    crosses = np.any(np.sign(interleaved[1:]) != np.sign(interleaved[:-1]))
    if crosses or np.min(np.abs(interleaved)) < floor:
        raise SingularityError(
            f"classical_core: |q1| < {floor:g} inside window ({ta}, {tb}); pick a zero-free window")
    h = np.diff(times)
    cells = h / 6.0 * (1 / q1_nodes[:-1] ** 2 + 4 / q1_mids ** 2 + 1 / q1_nodes[1:] ** 2)
    integral = np.concatenate([[0.0], np.cumsum(cells)])
    q1a, q2a, _, _ = pair.evaluate(ta)
    return times, q1_nodes * (q2a / q1a + integral)

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from moment_lab.classical import (
    FrequencyProfile,
    StepSizeWarning,
    SystemParams,
    TrajectoryPair,
    _hermite5,
    eval_omega_sq,
    q2_from_q1,
    solve_classical,
    uniform_steps,
)
from moment_lab.errors import ConfigError, DomainError, SingularityError

UNIT = SystemParams()
SINUSOIDAL = FrequencyProfile.sinusoidal(1.0, 0.3, 2.0)
PIECEWISE = FrequencyProfile.piecewise([(0, 1), (5, 2)])


def test_eval_omega_sq_examples():
    assert eval_omega_sq(FrequencyProfile.constant(1.0), 3.7) == 1.0
    assert eval_omega_sq(FrequencyProfile.sinusoidal(1.0, 0.5, 2.0), 0.0) == 1.0
    assert eval_omega_sq(PIECEWISE, 6.0) == 4.0


def test_piecewise_limits_at_breakpoint():
    assert PIECEWISE.omega_sq(5.0) == 4.0
    assert PIECEWISE.omega_sq(5.0, left=True) == 1.0
    np.testing.assert_array_equal(PIECEWISE.omega_sq(np.array([4.0, 5.0, 6.0]), left=True), [1, 1, 4])


def test_array_and_scalar_evaluation_agree():
    ts = np.linspace(0, 10, 37)
    for prof in (SINUSOIDAL, PIECEWISE, FrequencyProfile.tabulated([(t, 1 + 0.1 * t) for t in range(11)])):
        np.testing.assert_allclose(prof.omega_sq(ts), [prof.omega_sq(t) for t in ts], rtol=1e-15)


def test_tabulated_interpolates_omega_not_square():
    prof = FrequencyProfile.tabulated([(t, 1 + 0.5 * t) for t in range(6)])
    # linear data is reproduced exactly by the cubic spline
    assert prof.omega_sq(2.5) == pytest.approx(2.25 ** 2, rel=1e-14)


def test_tabulated_domain_error():
    prof = FrequencyProfile.tabulated([(t, 1.0) for t in range(5)])
    with pytest.raises(DomainError):
        prof.omega_sq(4.5)
    with pytest.raises(DomainError):
        solve_classical(prof, UNIT, (0, 6), 1e-3)


def test_profile_validation():
    with pytest.raises(ConfigError):
        FrequencyProfile.constant(0.0)
    with pytest.raises(ConfigError):
        FrequencyProfile.sinusoidal(1.0, 1.0, 2.0)
    with pytest.raises(ConfigError):
        FrequencyProfile.piecewise([(0, 1), (0, 2)])
    with pytest.raises(ConfigError):
        SystemParams(m=0)
    FrequencyProfile.constant(0.0, allow_inverted=True)
    inv = FrequencyProfile.sinusoidal(1.0, 1.5, 2.0, allow_inverted=True)
    assert inv.omega_sq(-math.pi / 4) < 0


def test_profile_round_trip():
    for prof in (SINUSOIDAL, PIECEWISE, FrequencyProfile.constant(2.0)):
        assert FrequencyProfile.from_dict(prof.to_dict()) == prof


def test_uniform_steps():
    assert uniform_steps((0, 1), 0.3) == (0.25, 4)
    assert uniform_steps((0, 1), 0.25) == (0.25, 4)
    with pytest.raises(ConfigError):
        uniform_steps((0, 1), 0.0)
    with pytest.raises(ConfigError):
        uniform_steps((1, 1), 0.1)


def test_harmonic_closed_form_ten_periods():
    pair = solve_classical(FrequencyProfile.constant(1.0), UNIT, (0, 20 * math.pi), 1e-3)
    t = pair.times
    assert np.max(np.abs(pair.q1 - np.cos(t))) < 1e-8
    assert np.max(np.abs(pair.q2 - np.sin(t))) < 1e-8
    assert np.max(np.abs(pair.q1dot + np.sin(t))) < 1e-8


def test_rescaled_frequency():
    pair = solve_classical(FrequencyProfile.constant(2.0), UNIT, (0, math.pi / 4), 1e-3)
    assert pair.q1[-1] == pytest.approx(0.0, abs=1e-10)
    assert pair.q2[-1] == pytest.approx(0.5, abs=1e-10)


def _reference(profile, t_end, y0):
    def f(t, y):
        return [y[1], -profile.omega_sq(t) * y[0]]
    sol = solve_ivp(f, (0, t_end), y0, method="DOP853", rtol=1e-13, atol=1e-14)
    return sol.y[:, -1]


def test_sinusoidal_against_adaptive_integrator():
    pair = solve_classical(SINUSOIDAL, UNIT, (0, 5), 1e-3)
    ref1 = _reference(SINUSOIDAL, 5.0, [1.0, 0.0])
    ref2 = _reference(SINUSOIDAL, 5.0, [0.0, 1.0])
    assert abs(pair.q1[-1] - ref1[0]) < 1e-8
    assert abs(pair.q2[-1] - ref2[0]) < 1e-8
    assert abs(pair.q1dot[-1] - ref1[1]) < 1e-8


def test_sinusoidal_against_richardson():
    coarse = solve_classical(SINUSOIDAL, UNIT, (0, 5), 2e-3)
    fine = solve_classical(SINUSOIDAL, UNIT, (0, 5), 1e-3)
    extrap = fine.q1[-1] + (fine.q1[-1] - coarse.q1[-1]) / 15
    assert abs(fine.q1[-1] - extrap) < 1e-8


def test_piecewise_matches_analytic_join():
    pair = solve_classical(PIECEWISE, UNIT, (0, 10), 1e-3)
    # after t=5 each solution is a frequency-2 oscillation seeded by its state at 5
    t = pair.times[pair.times >= 5] - 5
    for q, qd in ((pair.q1, pair.q1dot), (pair.q2, pair.q2dot)):
        q0, v0 = (math.cos(5), -math.sin(5)) if q is pair.q1 else (math.sin(5), math.cos(5))
        exact = q0 * np.cos(2 * t) + v0 / 2 * np.sin(2 * t)
        assert np.max(np.abs(q[pair.times >= 5] - exact)) < 1e-9


@pytest.mark.parametrize("profile", [FrequencyProfile.constant(1.0), SINUSOIDAL, PIECEWISE])
def test_wronskian_conserved(profile):
    pair = solve_classical(profile, UNIT, (0, 10), 1e-3)
    assert np.max(np.abs(pair.wronskian() - 1)) < 1e-10


def test_step_size_warning_and_error():
    with pytest.warns(StepSizeWarning):
        # refinement rescues the coarse request after warning about it
        solve_classical(FrequencyProfile.constant(1.0), UNIT, (0, 1), 0.2, refine_tol=1e-9)
    from moment_lab.errors import StepSizeError
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StepSizeWarning)
        with pytest.raises(StepSizeError):
            solve_classical(FrequencyProfile.constant(5.0), UNIT, (0, 50), 0.05)


def test_refinement_reaches_tolerance():
    pair = solve_classical(SINUSOIDAL, UNIT, (0, 5), 0.05, refine_tol=1e-10)
    assert pair.dt < 0.05
    ref = _reference(SINUSOIDAL, 5.0, [1.0, 0.0])
    assert abs(pair.q1[-1] - ref[0]) < 1e-9


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_linearity(a, b):
    """A solve from (a, b) equals a*q1 + b*q2."""
    pair = _pair_cache()
    ref = _reference_grid(a, b)
    comb = a * pair.q1 + b * pair.q2
    assert np.max(np.abs(comb - ref)) < 1e-9 * max(1.0, abs(a), abs(b))


_cache = {}


def _pair_cache():
    if "pair" not in _cache:
        _cache["pair"] = solve_classical(SINUSOIDAL, UNIT, (0, 10), 1e-3)
    return _cache["pair"]


def _reference_grid(a, b):
    from moment_lab.classical import rk4_integrate
    _, ys = rk4_integrate(lambda y, w2: np.array([y[1], -w2 * y[0]]),
                          np.array([a, b]), SINUSOIDAL, 0.0, 1e-3, 10000)
    return ys[:, 0]


def test_dense_output_matches_grid_and_reference():
    pair = solve_classical(SINUSOIDAL, UNIT, (0, 5), 1e-2)
    q1, q2, q1d, q2d = pair.evaluate(pair.times)
    np.testing.assert_allclose(q1, pair.q1, atol=1e-15)
    np.testing.assert_allclose(q2d, pair.q2dot, atol=1e-15)
    t_mid = 2.345
    val = pair.evaluate(t_mid)
    fine = solve_classical(SINUSOIDAL, UNIT, (0, t_mid), 1e-4)
    assert abs(val[0] - fine.q1[-1]) < 1e-9
    assert abs(val[3] - fine.q2dot[-1]) < 1e-8
    with pytest.raises(DomainError):
        pair.evaluate(6.0)


def test_hermite_reproduces_quintics():
    rng = np.random.default_rng(3)
    c = rng.normal(size=6)
    f = np.polynomial.Polynomial(c)
    d1, d2 = f.deriv(), f.deriv(2)
    a, h = 0.3, 0.7
    s = np.linspace(0, 1, 11)
    val, der = _hermite5(s, h, f(a), d1(a), d2(a), f(a + h), d1(a + h), d2(a + h))
    np.testing.assert_allclose(val, f(a + s * h), atol=1e-13)
    np.testing.assert_allclose(der, d1(a + s * h), atol=1e-12)


def test_residual_of_equation_of_motion():
    pair = solve_classical(SINUSOIDAL, UNIT, (0, 10), 1e-3)
    h, t = pair.dt, pair.times[1:-1]
    for q in (pair.q1, pair.q2):
        acc = (q[2:] - 2 * q[1:-1] + q[:-2]) / h ** 2
        res = np.abs(acc + SINUSOIDAL.omega_sq(t) * q[1:-1])
        assert np.max(res / np.maximum(np.abs(q[1:-1]), 1)) < 1e-6


def test_q2_from_q1_analytic_window():
    # the stored pair starts at -pi/4 so q1 is not cos; build cos/sin directly
    t = np.linspace(-math.pi / 4, math.pi / 4, 1571)
    pair = TrajectoryPair(t[0], t[1] - t[0], np.cos(t), np.sin(t), -np.sin(t), np.cos(t),
                          FrequencyProfile.constant(1.0))
    times, est = q2_from_q1(pair)
    np.testing.assert_allclose(est, np.sin(times), atol=1e-10)


def test_q2_from_q1_free_particle():
    prof = FrequencyProfile.constant(0.0, allow_inverted=True)
    pair = solve_classical(prof, UNIT, (0, 3), 1e-2)
    times, est = q2_from_q1(pair)
    np.testing.assert_allclose(est, times, atol=1e-13)


def test_q2_from_q1_sinusoidal_window():
    pair = solve_classical(SINUSOIDAL, UNIT, (0, 10), 1e-3)
    window = (0.0, 1.2)  # q1 stays away from zero here
    times, est = q2_from_q1(pair, window)
    q2 = pair.evaluate(times)[1]
    assert np.max(np.abs(est - q2)) < 1e-6


def test_q2_from_q1_shifted_window_fixes_constant():
    pair = solve_classical(SINUSOIDAL, UNIT, (0, 10), 1e-3)
    times, est = q2_from_q1(pair, (2.5, 3.5))
    assert np.max(np.abs(est - pair.evaluate(times)[1])) < 1e-6


def test_q2_from_q1_singularity():
    pair = solve_classical(FrequencyProfile.constant(1.0), UNIT, (0, 3), 1e-3)
    with pytest.raises(SingularityError):
        q2_from_q1(pair)

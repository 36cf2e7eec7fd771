from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import gamma

from carrier import kuzmak
from carrier.errors import ComplexRootsError, NoSolutionError, TurningPointError


def quad_orbit(A, x):
    """Half-period integral and action by adaptive quadrature with algebraic weights."""
    Y0, Y1, Y2 = sorted(np.roots([-2.0 / 3.0, -2.0 * (1 - x * x), 2.0, A]).real)

    def smooth(y):
        return 1.0 / np.sqrt((2.0 / 3.0) * (y - Y0))

    half, _ = quad(smooth, Y1, Y2, weight="alg", wvar=(-0.5, -0.5), epsabs=1e-14, epsrel=1e-13)
    act, _ = quad(lambda y: np.sqrt((2.0 / 3.0) * (y - Y0)), Y1, Y2, weight="alg", wvar=(0.5, 0.5), epsabs=1e-14, epsrel=1e-13)
    return half, 2.0 * act


def inside(t, x):
    A1, A2 = kuzmak.boundary_envelopes(x)
    return float(A2 + t * (A1 - A2))


def test_cubic_roots_match_numpy():
    for t, x in [(0.0, 1.0), (0.5, 0.3), (0.1, 0.0), (0.9, 0.9)]:
        A = inside(t, x)
        got = kuzmak.cubic_roots(A, x)
        ref = sorted(np.roots([-2.0 / 3.0, -2.0 * (1 - x * x), 2.0, A]).real)
        np.testing.assert_allclose(got, ref, atol=1e-12)


def test_envelopes_are_double_roots():
    for x in (0.0, 0.4, 1.0):
        for A in kuzmak.boundary_envelopes(x):
            r = np.roots([-2.0 / 3.0, -2.0 * (1 - x * x), 2.0, A])
            d = np.abs(r[:, None] - r[None, :]) + np.eye(3)
            assert d.min() < 1e-6


def test_complex_roots_rejected():
    A1, A2 = kuzmak.boundary_envelopes(0.5)
    with pytest.raises(ComplexRootsError):
        kuzmak.cubic_roots(A1 + 0.1, 0.5)
    with pytest.raises(ComplexRootsError):
        kuzmak.cubic_roots(A2 - 0.1, 0.5)


@pytest.mark.parametrize("t,x", [(0.3, 1.0), (0.3, 0.5), (0.05, 0.0), (0.97, 0.8)])
def test_period_and_action_against_adaptive_quadrature(t, x):
    A = inside(t, x)
    half, act = quad_orbit(A, x)
    assert kuzmak.period_function(A, x) == pytest.approx(0.5 / half, rel=1e-10)
    assert kuzmak.action_integral(A, x) == pytest.approx(act, rel=1e-10)


def test_action_slope_is_half_over_phi():
    x, h = 0.6, 1e-5
    A = inside(0.4, x)
    slope = (kuzmak.action_integral(A + h, x) - kuzmak.action_integral(A - h, x)) / (2 * h)
    assert slope == pytest.approx(1.0 / (2.0 * kuzmak.period_function(A, x)), rel=1e-8)


def test_k0_closed_form():
    closed = 16.0 * 3.0**0.75 * np.pi**1.5 / (5.0 * gamma(0.25) ** 2)
    assert kuzmak.k0() == pytest.approx(closed, abs=1e-10)


def test_constants_ordered():
    assert 0 < kuzmak.k0() < kuzmak.k1() < kuzmak.k_max()
    assert kuzmak.k1() == pytest.approx(kuzmak.action_integral(4.0 / 3.0, 1.0), abs=1e-9)


def test_turning_point_error_at_envelope():
    A1, _ = kuzmak.boundary_envelopes(0.5)
    with pytest.raises(TurningPointError):
        kuzmak.period_function(A1, 0.5)


@pytest.mark.parametrize("k", [1.0, 3.0, 5.0])
def test_adiabatic_invariance(k):
    xs = np.linspace(-1.0, 1.0, 50)
    A = kuzmak.amplitude_from_k(np.full(50, k), xs)
    np.testing.assert_allclose(kuzmak.action_integral(A, xs), k, atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=0.05, max_value=6.7), st.floats(min_value=-1.0, max_value=1.0))
def test_amplitude_round_trip(k, x):
    A = kuzmak.amplitude_from_k(k, x)
    assert kuzmak.action_integral(A, x) == pytest.approx(k, abs=1e-9 * max(1.0, k))


def test_amplitude_beyond_turning_point():
    with pytest.raises(NoSolutionError):
        kuzmak.amplitude_from_k(10.0, 0.99)


def test_phase_matches_adaptive_quadrature():
    k = kuzmak.k0()
    f = lambda s: kuzmak.period_function(kuzmak.amplitude_from_k(k, s), s)
    ref, _ = quad(f, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12, limit=200)
    assert kuzmak.phase_at_end(k) == pytest.approx(ref, rel=1e-9)
    ref_half, _ = quad(f, 0.0, 0.5, epsabs=1e-13, epsrel=1e-12)
    assert kuzmak.phase(k, 0.5) == pytest.approx(ref_half, rel=1e-9)


@pytest.mark.parametrize("k", [1.0, 3.0, 5.0])
def test_symmetry_of_slow_functions(k):
    xs = np.linspace(0.05, 0.95, 19)
    A_plus = kuzmak.amplitude_from_k(np.full(xs.size, k), xs)
    A_minus = kuzmak.amplitude_from_k(np.full(xs.size, k), -xs)
    np.testing.assert_allclose(A_plus, A_minus, atol=1e-10)
    np.testing.assert_allclose(kuzmak.phase_table(k, xs), -kuzmak.phase_table(k, -xs), atol=1e-10)


def test_phase_table_agrees_with_phase():
    k = 4.0
    xs = np.linspace(-0.9, 0.9, 13)
    np.testing.assert_allclose(kuzmak.phase_table(k, xs), [kuzmak.phase(k, v) for v in xs], rtol=1e-9, atol=1e-12)


def test_phase_beyond_turning_point():
    k = 10.0
    x_star = kuzmak.oscillation_extent(k)
    assert 0 < x_star < 1
    with pytest.raises(TurningPointError):
        kuzmak.phase(k, min(1.0, x_star + 0.01))


def test_turning_point_location():
    tp = kuzmak.turning_point(10.0)
    assert kuzmak.action_envelope(tp.x_star) == pytest.approx(10.0, abs=1e-9)
    assert kuzmak.turning_point(3.0) is None


def test_action_envelope_decreases_in_x():
    xs = np.linspace(0.0, 1.0, 201)
    env = np.array([kuzmak.action_envelope(x) for x in xs])
    assert np.all(np.diff(env) < 0)
    assert env[-1] == pytest.approx(kuzmak.k1(), rel=1e-12)


@pytest.mark.parametrize("k,x", [(1.0, 0.2), (3.0, 0.7), (6.0, -0.4)])
def test_profile_first_integral(k, x):
    A = kuzmak.amplitude_from_k(k, x)
    Phi = kuzmak.period_function(A, x)
    X = np.linspace(0.05, 0.45, 9)
    h = 1e-5
    Y = kuzmak.profile_Y(X, x, k)
    dY = (kuzmak.profile_Y(X + h, x, k) - kuzmak.profile_Y(X - h, x, k)) / (2 * h)
    np.testing.assert_allclose(Phi**2 * dY**2, kuzmak.cubic_c(A, x, Y), atol=1e-6)


@pytest.mark.parametrize("k", [1.0, 3.0, 5.0])
def test_profile_periodicity(k):
    X = np.linspace(-0.9, 0.9, 17)
    np.testing.assert_allclose(kuzmak.profile_Y(X + 1.0, 0.3, k), kuzmak.profile_Y(X, 0.3, k), atol=1e-8)
    np.testing.assert_allclose(kuzmak.profile_Y(1.0 - X, 0.3, k), kuzmak.profile_Y(X, 0.3, k), atol=1e-8)


def test_profile_range():
    k, x = 3.0, 0.2
    A = kuzmak.amplitude_from_k(k, x)
    _, Y1, Y2 = kuzmak.cubic_roots(A, x)
    assert kuzmak.profile_Y(0.0, x, k) == pytest.approx(Y1, abs=1e-12)
    assert kuzmak.profile_Y(0.5, x, k) == pytest.approx(Y2, abs=1e-12)


def test_x0_is_boundary_zero():
    for k in (3.5, 5.0, 6.5):
        X0 = kuzmak.boundary_offset_X0(k)
        assert 0 < X0 < 0.5
        assert kuzmak.profile_Y(X0, 1.0, k) == pytest.approx(0.0, abs=1e-10)
    assert kuzmak.boundary_offset_X0(kuzmak.k0()) == pytest.approx(0.0, abs=1e-6)
    with pytest.raises(NoSolutionError):
        kuzmak.boundary_offset_X0(2.0)


def test_derivative_helpers():
    assert kuzmak.central_derivative(np.sin, 1.0) == pytest.approx(np.cos(1.0), rel=1e-10)
    assert kuzmak.forward_derivative(np.exp, 0.5, 1e-3) == pytest.approx(np.exp(0.5), rel=1e-6)


def test_branch_tabulation():
    br = kuzmak.KuzmakBranch.tabulate(4.0, 1.25, "sym-min", 2, num=11)
    assert br.mu == pytest.approx(0.25)
    assert br.phi_table[5] == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(ValueError):
        kuzmak.KuzmakBranch.tabulate(4.0, 0.0, "nope", 2)
    orb = kuzmak.CubicOrbit.at(0.0, 1.0)
    assert orb.Y1 == pytest.approx(0.0, abs=1e-12)

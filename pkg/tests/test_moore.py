from __future__ import annotations

import numpy as np
import pytest

from carrier.continuation import ArclengthConfig, BifurcationEvent, SweepConfig, arclength_continue, deflated_sweep, detect_events
from carrier.deflation import DeflationSet, deflated_newton
from carrier.model import Grid, State, count_interior_maxima, eigenpairs_near_zero, eigenvector_parity, newton_solve, norms
from carrier.moore import AugmentedState, augmented_residual, initial_guess, locate, moore_newton

COARSE = 801
GRIDS = (801, 1601, 3201)


@pytest.fixture(scope="module")
def pitchfork_event():
    g = Grid(COARSE)
    start = State.constant(g, 1.0, 0.5)
    a, _ = newton_solve(start)
    b, _ = deflated_newton(start, DeflationSet((a,)))
    m1 = a if count_interior_maxima(a) == 1 else b
    br = arclength_continue(m1, -1, ArclengthConfig(eps_sq_min=0.15, eps_sq_max=0.6))
    (ev,) = detect_events(br)
    return ev


@pytest.fixture(scope="module")
def fold_event():
    r = deflated_sweep(SweepConfig(0.07, 0.07, n_nodes=COARSE, extra_failures=20))
    seed = [s for s in r.final if count_interior_maxima(s) == 2][0]
    br = arclength_continue(seed, 1, ArclengthConfig(eps_sq_min=0.06, eps_sq_max=0.1))
    return [e for e in detect_events(br) if e.kind == "fold"][0]


@pytest.fixture(scope="module")
def located_pitchfork(pitchfork_event):
    return locate(pitchfork_event, GRIDS)


@pytest.fixture(scope="module")
def located_fold(fold_event):
    return locate(fold_event, GRIDS)


def test_initial_guess_pitchfork(pitchfork_event):
    s = initial_guess(pitchfork_event)
    assert eigenvector_parity(s.v) == "antisymmetric"
    assert norms(s.v, s.grid)[0] == pytest.approx(1.0)
    vals, _ = eigenpairs_near_zero(s.state, count=1)
    assert abs(vals[0]) < 0.1


def test_initial_guess_fold(fold_event):
    s = initial_guess(fold_event)
    assert eigenvector_parity(s.v) == "symmetric"


def test_degenerate_bracket(pitchfork_event):
    st = pitchfork_event.bracket[0][1]
    ev = BifurcationEvent("pitchfork", st.eps, ((st.eps_sq, st), (st.eps_sq, None)))
    assert initial_guess(ev).eps_sq == st.eps_sq


def test_residual_scaling_and_sign(located_pitchfork):
    s = located_pitchfork.final
    R = augmented_residual(s)
    assert R.size == 2 * s.grid.n_nodes + 1
    doubled = augmented_residual(AugmentedState(s.grid, s.y, 2 * s.v, s.eps_sq))
    assert doubled[-1] == pytest.approx(3.0, abs=1e-8)
    np.testing.assert_allclose(doubled[: s.grid.n_nodes], R[: s.grid.n_nodes])
    flipped = augmented_residual(AugmentedState(s.grid, s.y, -s.v, s.eps_sq))
    assert np.abs(flipped).max() == pytest.approx(np.abs(R).max(), abs=1e-12)


def test_first_pitchfork(located_pitchfork):
    r = located_pitchfork
    assert r.converged
    assert r.eps == pytest.approx(0.46886251, rel=5e-4)
    assert all(it <= 100 for it in r.iterations)
    assert norms(r.final.v, r.final.grid)[0] == pytest.approx(1.0, abs=1e-10)


def test_component_two_fold(located_fold):
    r = located_fold
    assert r.converged
    assert r.eps == pytest.approx(0.28522538, rel=5e-4)
    assert norms(r.final.v, r.final.grid)[0] == pytest.approx(1.0, abs=1e-10)


def test_fold_jacobian_is_singular(located_fold):
    s = located_fold.final
    vals, _ = eigenpairs_near_zero(s.state, count=1)
    scale = s.eps_sq / s.grid.h**2
    assert abs(vals[0]) < 1e-6 * scale


def test_second_order_grid_convergence(located_fold, located_pitchfork):
    for r in (located_fold, located_pitchfork):
        e = [v for _, v in r.per_grid]
        ratio = (e[0] - e[1]) / (e[1] - e[2])
        assert 3.5 < ratio < 4.5


def test_moore_newton_reports_iteration_cap(pitchfork_event):
    s = initial_guess(pitchfork_event)
    _, conv, it, _ = moore_newton(s, tol=1e-30, max_iter=1)
    assert it <= 1

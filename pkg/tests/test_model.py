from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_bvp

from carrier.errors import SingularJacobianError
from carrier.model import (
    Grid,
    State,
    Stencil,
    Tridiagonal,
    count_interior_maxima,
    distance,
    eigenpairs_near_zero,
    eigenvector_parity,
    interior_operator,
    interpolate_state,
    inverse_iteration,
    jacobian,
    newton_solve,
    norms,
    parameter_derivative,
    positive_eigenvalue_count,
    reflect,
    residual,
    rounding_floor,
    symmetry_class,
)


def test_grid_basics():
    g = Grid(5)
    np.testing.assert_array_equal(g.nodes, [-1.0, -0.5, 0.0, 0.5, 1.0])
    assert g.h == 0.5
    assert g.weights.sum() == pytest.approx(2.0)
    with pytest.raises(ValueError):
        Grid(4)


def test_state_validation(grid_small):
    with pytest.raises(ValueError):
        State(grid_small, np.zeros(3), 0.5)
    with pytest.raises(ValueError):
        State.constant(grid_small, 0.0, 0.0)
    s = State.constant(grid_small, 1.0, 0.5)
    assert not s.values.flags.writeable


def test_residual_of_polynomial(grid_small):
    # y = 1 - x^2: y'' = -2, so the interior residual is -2 eps^2 + 2(1-x^2)^2 + (1-x^2)^2 - 1
    x = grid_small.nodes
    s = State(grid_small, 1.0 - x * x, 0.3)
    F = residual(s)
    q = 1.0 - x * x
    np.testing.assert_allclose(F[1:-1], (-0.6 + 3.0 * q * q - 1.0)[1:-1], atol=1e-12)
    assert F[0] == 0 and F[-1] == 0


def test_stencil_matches_residual(grid_small, rng):
    y = rng.standard_normal(grid_small.n_nodes)
    s = State(grid_small, y, 0.2)
    np.testing.assert_allclose(Stencil(grid_small, 0.2).residual(y), residual(s), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1), st.floats(min_value=0.01, max_value=1.0))
def test_jacobian_matches_finite_differences(seed, eps_sq):
    grid = Grid(41)
    r = np.random.default_rng(seed)
    y = r.standard_normal(grid.n_nodes)
    v = r.standard_normal(grid.n_nodes)
    s = State(grid, y, eps_sq)
    h = 1e-6
    fd = (residual(s.with_values(y + h * v)) - residual(s.with_values(y - h * v))) / (2 * h)
    Jv = jacobian(s).matvec(v)
    assert np.abs(fd - Jv).max() <= 1e-6 * max(1.0, np.abs(Jv).max())
    dl = 1e-6
    fdl = (residual(s.at(eps_sq + dl)) - residual(s.at(eps_sq - dl))) / (2 * dl)
    np.testing.assert_allclose(parameter_derivative(s), fdl, atol=1e-5 * max(1.0, np.abs(fdl).max()))


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_tridiagonal_solve_matches_dense(seed):
    r = np.random.default_rng(seed)
    n = 30
    T = Tridiagonal(r.standard_normal(n - 1), 4.0 + r.random(n), r.standard_normal(n - 1))
    b = r.standard_normal(n)
    np.testing.assert_allclose(T.factor().solve(b), np.linalg.solve(T.toarray(), b), atol=1e-10)
    np.testing.assert_allclose(T.tosparse().toarray(), T.toarray())
    np.testing.assert_allclose(T.matvec(b), T.toarray() @ b, atol=1e-12)


def test_singular_tridiagonal_raises():
    T = Tridiagonal(np.array([1.0, 0.0]), np.array([1.0, 1.0, 1.0]), np.array([1.0, 0.0]))
    with pytest.raises(SingularJacobianError):
        T.factor()


def test_newton_matches_collocation_solver(base_pair):
    """Second-order agreement with an independent collocation solve at eps^2 = 0.5."""
    eps_sq = 0.5

    def f(x, u):
        return np.vstack([u[1], (1.0 - 2.0 * (1.0 - x * x) * u[0] - u[0] ** 2) / eps_sq])

    def bc(a, b):
        return np.array([a[0], b[0]])

    for s in base_pair:
        xs = np.linspace(-1, 1, 201)
        guess = np.vstack([np.interp(xs, s.x, s.values), np.gradient(np.interp(xs, s.x, s.values), xs)])
        sol = solve_bvp(f, bc, xs, guess, tol=1e-10, max_nodes=100000)
        assert sol.success
        assert np.abs(sol.sol(s.x)[0] - s.values).max() < 1e-5


def test_two_solutions_at_start(base_pair):
    a, b = base_pair
    assert distance(a, b) > 0.1
    assert {count_interior_maxima(a), count_interior_maxima(b)} == {0, 1}
    assert symmetry_class(a) == symmetry_class(b) == "symmetric"


def test_newton_reports_nonconvergence(grid_small):
    s, rep = newton_solve(State.constant(grid_small, 50.0, 1e-4), max_iter=2)
    assert not rep.converged
    with pytest.raises(ValueError):
        newton_solve(State.constant(grid_small, 1.0, 0.5), tol=0.0)


def test_rounding_floor_grows_with_resolution():
    a = rounding_floor(State.constant(Grid(101), 1.0, 0.1))
    b = rounding_floor(State.constant(Grid(1001), 1.0, 0.1))
    assert b > 50 * a


def test_norms_of_known_function():
    g = Grid(4001)
    y = np.sin(np.pi * g.nodes)
    l2, h1, sup = norms(y, g)
    assert l2 == pytest.approx(1.0, rel=1e-6)
    assert h1 == pytest.approx(np.sqrt(1.0 + np.pi**2), rel=1e-6)
    assert sup == pytest.approx(1.0, rel=1e-6)


def test_symmetry_and_maxima():
    g = Grid(401)
    x = g.nodes
    s = State(g, sum(np.exp(-(((x - c) / 0.1) ** 2)) for c in (-0.5, 0.0, 0.5)), 0.1)
    assert symmetry_class(s) == "symmetric"
    assert count_interior_maxima(s) == 3
    t = State(g, np.sin(np.pi * x) * (1 - x * x), 0.1)
    assert symmetry_class(t) == "asymmetric"
    np.testing.assert_array_equal(reflect(t.values), t.values[::-1])
    assert eigenvector_parity(t.values) == "antisymmetric"
    assert eigenvector_parity(s.values) == "symmetric"
    assert eigenvector_parity(s.values + t.values) == "mixed"


def test_sturm_count_matches_dense_eigenvalues(base_pair):
    g = Grid(201)
    for s in base_pair:
        c = interpolate_state(s, g)
        d, o = interior_operator(c)
        dense = np.diag(d) + np.diag(o, 1) + np.diag(o, -1)
        assert positive_eigenvalue_count(c) == int(np.sum(np.linalg.eigvalsh(dense) > 0))


def test_eigenpairs_and_inverse_iteration(base_pair):
    s = base_pair[0]
    vals, vecs = eigenpairs_near_zero(s, count=2)
    assert abs(vals[0]) <= abs(vals[1])
    lam, v = inverse_iteration(s, shift=vals[0] + 1e-3)
    assert lam == pytest.approx(vals[0], rel=1e-8)
    assert abs(abs(np.dot(s.grid.weights, v * vecs[:, 0])) - 1.0) < 1e-6
    assert norms(v, s.grid)[0] == pytest.approx(1.0)


def test_interpolate_state():
    g1, g2 = Grid(11), Grid(21)
    s = State(g1, g1.nodes * 2.0, 0.1)
    np.testing.assert_allclose(interpolate_state(s, g2).values, 2.0 * g2.nodes)

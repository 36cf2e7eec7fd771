"""Bifurcation points from the Moore augmented system.

Unknowns are the solution y, a null vector v of the linearization and
eps^2:

    eps^2 y'' + 2(1 - x^2) y + y^2 - 1 = 0,
    eps^2 v'' + 2(1 - x^2) v + 2 y v  = 0,
    ||v||^2 - 1                       = 0,

with Dirichlet rows for y and v.  Newton on this system is run on a chain
of grids and the parameter values are extrapolated in h^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import bmat, csc_matrix, diags
from scipy.sparse.linalg import splu

from .errors import ConvergenceError, SingularJacobianError
from .model import (
    Grid,
    State,
    eigenvector_parity,
    inverse_iteration,
    jacobian,
    newton_solve,
    norms,
    residual,
    second_difference,
    symmetry_class,
)

FOLD_MAX_ITER = 50
PITCHFORK_MAX_ITER = 100
DEFAULT_GRIDS = (2001, 4001, 8001)


@dataclass(frozen=True)
class AugmentedState:
    grid: Grid
    y: np.ndarray
    v: np.ndarray
    eps_sq: float

    @property
    def eps(self) -> float:
        return float(np.sqrt(self.eps_sq))

    @property
    def state(self) -> State:
        return State(self.grid, self.y, self.eps_sq)

    def interpolate(self, grid: Grid) -> "AugmentedState":
        x = grid.nodes
        y = np.interp(x, self.grid.nodes, self.y)
        v = np.interp(x, self.grid.nodes, self.v)
        v = v / norms(v, grid)[0]
        return AugmentedState(grid, y, v, self.eps_sq)


@dataclass
class LocateResult:
    kind: str
    eps: float
    error_estimate: float
    per_grid: list
    iterations: list
    final: AugmentedState
    converged: bool


def augmented_residual(s: AugmentedState) -> np.ndarray:
    st = State(s.grid, s.y, s.eps_sq)
    F = residual(st)
    G = jacobian(st).matvec(s.v)
    l2 = norms(s.v, s.grid)[0]
    return np.concatenate([F, G, [l2 * l2 - 1.0]])


def _augmented_jacobian(s: AugmentedState):
    st = State(s.grid, s.y, s.eps_sq)
    n = s.grid.n_nodes
    J = jacobian(st).tosparse()
    dv = 2.0 * s.v.copy()
    dv[0] = dv[-1] = 0.0
    Dyv = diags(dv, 0, format="csc")
    col_y = csc_matrix(second_difference(s.y, s.grid.h).reshape(n, 1))
    col_v = csc_matrix(second_difference(s.v, s.grid.h).reshape(n, 1))
    row = csc_matrix((2.0 * s.grid.weights * s.v).reshape(1, n))
    return bmat(
        [[J, None, col_y], [Dyv, J, col_v], [None, row, None]],
        format="csc",
    )


def moore_newton(s: AugmentedState, tol: float = 1e-10, max_iter: int = FOLD_MAX_ITER):
    """Newton on the augmented system; returns (state, converged, iterations, residual).

    At a pitchfork the augmented Jacobian is itself singular and the
    iterates drift along the symmetry-breaking direction at the rounding
    level while eps^2 has settled.  A run therefore counts as converged when
    the residual is below ``tol`` or, failing that, below the rounding floor
    of the grid with the last eps^2 update below 1e-8 relative.
    """
    n = s.grid.n_nodes
    R = augmented_residual(s)
    res = float(np.abs(R).max())
    floor = 16.0 * np.finfo(float).eps * (4.0 * s.eps_sq / s.grid.h**2 + 4.0) * max(1.0, float(np.abs(s.y).max()))
    it = 0
    d_lam = np.inf
    while True:
        if res <= tol or (res <= floor and abs(d_lam) <= 1e-8 * s.eps_sq):
            # the null-vector rows are linear in v, so rescaling keeps them satisfied
            s = AugmentedState(s.grid, s.y, s.v / norms(s.v, s.grid)[0], s.eps_sq)
            return s, True, it, res
        if it >= max_iter:
            return s, False, it, res
        try:
            lu = splu(_augmented_jacobian(s))
        except RuntimeError as exc:
            raise SingularJacobianError("augmented Jacobian is singular") from exc
        d = lu.solve(-R)
        if not np.all(np.isfinite(d)):
            raise SingularJacobianError("augmented Newton step is not finite")
        d_lam = float(d[2 * n])
        s = AugmentedState(s.grid, s.y + d[:n], s.v + d[n : 2 * n], s.eps_sq + d_lam)
        it += 1
        if not s.eps_sq > 0:
            return s, False, it, float("inf")
        R = augmented_residual(s)
        res = float(np.abs(R).max())


def _event_state(event) -> State:
    """A converged solution from the event bracket, re-solved at the bracket midpoint."""
    (la, sa), (lb, sb) = event.bracket
    base = sa if sa is not None else sb
    if base is None:
        raise ValueError("event bracket carries no solution")
    mid = 0.5 * (la + lb)
    if event.kind == "pitchfork" and symmetry_class(base) != "symmetric":
        # a new asymmetric solution lies close to its symmetric parent
        sym, rep = newton_solve(State(base.grid, 0.5 * (base.values + base.values[::-1]), mid))
        if rep.converged and symmetry_class(sym) == "symmetric":
            return sym
    sol, rep = newton_solve(base.at(mid))
    if rep.converged:
        return sol
    return base


def initial_guess(event) -> AugmentedState:
    """Solution at the bracket midpoint and the eigenvector nearest zero.

    For pitchfork events the antisymmetric eigenvector is required; if
    inverse iteration returns a symmetric mode, the next eigenpair is used.
    """
    sol = _event_state(event)
    try:
        lam, v = inverse_iteration(sol, shift=0.0)
    except SingularJacobianError:
        lam, v = inverse_iteration(sol, shift=1e-8)
    if event.kind == "pitchfork" and eigenvector_parity(v) != "antisymmetric":
        from .model import eigenpairs_near_zero

        vals, vecs = eigenpairs_near_zero(sol, count=3)
        odd = [j for j in range(vals.size) if eigenvector_parity(vecs[:, j]) == "antisymmetric"]
        if not odd:
            raise ConvergenceError("no antisymmetric eigenvector near zero")
        v = vecs[:, odd[0]]
    return AugmentedState(sol.grid, np.array(sol.values), v / norms(v, sol.grid)[0], sol.eps_sq)


def _symmetrize(s: AugmentedState) -> AugmentedState:
    y = 0.5 * (s.y + s.y[::-1])
    v = 0.5 * (s.v - s.v[::-1])
    return AugmentedState(s.grid, y, v, s.eps_sq)


def locate(event, grids=DEFAULT_GRIDS, tol: float = 1e-10) -> LocateResult:
    """Refine ``event`` on each grid in turn and extrapolate eps in h^2.

    The extrapolated value combines the two finest grids; the error
    estimate is its distance from the finest-grid value.
    """
    kind = event.kind
    max_iter = PITCHFORK_MAX_ITER if kind == "pitchfork" else FOLD_MAX_ITER
    s = initial_guess(event)
    if kind == "pitchfork":
        s = _symmetrize(s)
    per_grid, iters = [], []
    ok = True
    for n in grids:
        grid = Grid(int(n))
        if grid.n_nodes != s.grid.n_nodes:
            s = s.interpolate(grid)
        try:
            s, conv, it, res = moore_newton(s, tol, max_iter)
        except SingularJacobianError:
            s = AugmentedState(s.grid, s.y, s.v, s.eps_sq * (1.0 + 1e-8))
            s, conv, it, res = moore_newton(s, tol, max_iter)
        ok = ok and conv
        per_grid.append((grid.n_nodes, s.eps))
        iters.append(it)
    eps_vals = [e for _, e in per_grid]
    if len(eps_vals) >= 2:
        h = [2.0 / (n - 1) for n, _ in per_grid[-2:]]
        r = (h[0] / h[1]) ** 2
        extrap = (r * eps_vals[-1] - eps_vals[-2]) / (r - 1.0)
        err = abs(extrap - eps_vals[-1])
    else:
        extrap, err = eps_vals[-1], float("nan")
    return LocateResult(kind, float(extrap), float(err), per_grid, iters, s, ok)

"""Scalar deflation of the discrete residual.

Known solutions y_i are removed from Newton's reach by solving

    G(y) = M(y) F(y),    M(y) = prod_i (||y - y_i||^(-p) + sigma),

instead of F(y) = 0.  The Jacobian of G is M J + F (grad M)^T, a
tridiagonal matrix plus a rank-one term, so each Newton step costs one
banded solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DeflationCollisionError, SingularJacobianError
from .model import (
    Grid,
    SolveReport,
    State,
    Stencil,
    Tridiagonal,
    TridiagonalLU,
    jacobian,
    residual,
)

NORMS = ("h1", "l2")
DIVERGENCE_BOUND = 20.0
STALL_WINDOW = 20


@dataclass(frozen=True)
class DeflationSet:
    """Solutions to deflate, all at one value of eps^2."""

    known: tuple = ()
    power: float = 2.0
    shift: float = 1.0
    norm: str = "h1"
    _stack: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        known = tuple(self.known)
        object.__setattr__(self, "known", known)
        if not self.power > 0:
            raise ValueError("power must be positive")
        if not self.shift >= 0:
            raise ValueError("shift must be non-negative")
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}")
        if known:
            eps = {s.eps_sq for s in known}
            grids = {s.grid.n_nodes for s in known}
            if len(eps) != 1 or len(grids) != 1:
                raise ValueError("known states must share eps_sq and grid")
            stack = np.vstack([s.values for s in known])
            stack.setflags(write=False)
            object.__setattr__(self, "_stack", stack)

    @property
    def eps_sq(self) -> float | None:
        return self.known[0].eps_sq if self.known else None

    def __len__(self) -> int:
        return len(self.known)

    def with_solution(self, state: State) -> "DeflationSet":
        return DeflationSet(self.known + (state,), self.power, self.shift, self.norm)

    def _check(self, state: State):
        if self.known and (state.eps_sq != self.eps_sq or state.grid.n_nodes != self.known[0].grid.n_nodes):
            raise ValueError("state does not match the deflation set")

    def _gram_apply(self, v, grid: Grid) -> np.ndarray:
        """Apply the Gram matrix of the chosen inner product to ``v`` (last axis)."""
        out = v * grid.weights
        if self.norm == "h1":
            d = np.diff(v, axis=-1) / grid.h
            out[..., :-1] -= d
            out[..., 1:] += d
        return out

    def _gram_rows(self, grid: Grid):
        cache = self.__dict__.get("_gram_cache")
        if cache is None or cache[0] != grid.n_nodes:
            G = self._gram_apply(self._stack, grid)
            sq = np.einsum("ij,ij->i", G, self._stack)
            cache = (grid.n_nodes, G, sq)
            object.__setattr__(self, "_gram_cache", cache)
        return cache[1], cache[2]

    def distances_sq(self, values, grid: Grid) -> np.ndarray:
        """Squared norm of y - y_i for every known y_i."""
        if not self.known:
            return np.zeros(0)
        y = np.asarray(values, dtype=float)
        return self._distances_sq(y, self._gram_apply(y.copy(), grid), grid)

    def _distances_sq(self, y, Hy, grid):
        G, sq = self._gram_rows(grid)
        yy = float(np.dot(y, Hy))
        d2 = yy - 2.0 * (G @ y) + sq
        # expanded form cancels badly near a known solution; redo those exactly
        close = np.flatnonzero(d2 <= 1e-6 * (yy + sq))
        for i in close:
            e = y - self._stack[i]
            d2[i] = float(np.dot(e, self._gram_apply(e.copy(), grid)))
        return d2

    def factor(self, values, grid: Grid, with_gradient: bool = True):
        """Return (M, grad M) at ``values``; grad is None when not requested."""
        if not self.known:
            return 1.0, (np.zeros(grid.n_nodes) if with_gradient else None)
        y = np.asarray(values, dtype=float)
        Hy = self._gram_apply(y.copy(), grid)
        d2 = self._distances_sq(y, Hy, grid)
        if np.any(d2 <= 0.0):
            raise DeflationCollisionError("iterate coincides with a deflated solution")
        p, sigma = self.power, self.shift
        dp = d2 ** (-0.5 * p)
        m = dp + sigma
        M = float(np.prod(m))
        if not with_gradient:
            return M, None
        # d m_i / d y = -(p/2) d_i^(-p-2) grad(d_i^2), grad(d_i^2) = 2 H (y - y_i)
        coef = -0.5 * p * dp / d2 / m
        G, _ = self._gram_rows(grid)
        g = 2.0 * (coef.sum() * Hy - coef @ G)
        return M, M * g


@dataclass(frozen=True)
class DeflatedJacobian:
    """M J + F g^T, solved with a banded factorization and a rank-one correction."""

    M: float
    J: Tridiagonal
    F: np.ndarray
    g: np.ndarray

    def matvec(self, v):
        v = np.asarray(v, dtype=float)
        return self.M * self.J.matvec(v) + self.F * float(np.dot(self.g, v))

    def toarray(self) -> np.ndarray:
        return self.M * self.J.toarray() + np.outer(self.F, self.g)

    def solve(self, rhs, lu: TridiagonalLU | None = None):
        lu = lu if lu is not None else self.J.factor()
        b = np.asarray(rhs, dtype=float)
        z = lu.solve(b) / self.M
        u = lu.solve(self.F) / self.M
        denom = 1.0 + float(np.dot(self.g, u))
        if abs(denom) < 1e-14 * (1.0 + abs(float(np.dot(self.g, u)))):
            raise SingularJacobianError("rank-one correction of the deflated Jacobian is singular")
        return z - u * (float(np.dot(self.g, z)) / denom)


def deflated_residual(state: State, dset: DeflationSet) -> np.ndarray:
    dset._check(state)
    M, _ = dset.factor(state.values, state.grid, with_gradient=False)
    return M * residual(state)


def deflated_jacobian(state: State, dset: DeflationSet) -> DeflatedJacobian:
    dset._check(state)
    M, g = dset.factor(state.values, state.grid)
    return DeflatedJacobian(M, jacobian(state), residual(state), g)


def deflated_newton(
    initial: State,
    dset: DeflationSet,
    tol: float = 1e-10,
    max_iter: int = 100,
    bound: float = DIVERGENCE_BOUND,
    stall_window: int | None = STALL_WINDOW,
) -> tuple[State, SolveReport]:
    """Newton on M(y) F(y) = 0.

    Convergence is judged on the undeflated residual, which vanishes at the
    same points away from the known solutions.  Runs end unconverged when
    an iterate leaves the ball sup|y| <= ``bound * max(1, eps_sq)`` (the
    large-eps solutions grow like eps_sq), when the best residual
    has not halved over ``stall_window`` iterations, on a singular Jacobian
    or on a collision with a known solution.
    """
    dset._check(initial)
    grid = initial.grid
    bound = bound * max(1.0, initial.eps_sq)
    st = Stencil(grid, initial.eps_sq)
    y = np.array(initial.values, dtype=float)
    F = st.residual(y)
    res = float(np.abs(F).max())
    best, best_it = res, 0
    step_size = np.inf
    it = 0
    while True:
        if res <= tol or (res <= st.floor(y) and step_size <= 1e-12 * max(1.0, float(np.abs(y).max()))):
            return initial.with_values(y), SolveReport(True, it, res)
        if it >= max_iter or (stall_window is not None and it - best_it > stall_window):
            return initial.with_values(y), SolveReport(False, it, res)
        try:
            w = st.factor(y).solve(F)
            if dset.known:
                M, g = dset.factor(y, grid)
                denom = 1.0 + float(np.dot(g, w)) / M
                if abs(denom) < 1e-14:
                    return initial.with_values(y), SolveReport(False, it, res)
                step = w / denom
            else:
                step = w
        except (SingularJacobianError, DeflationCollisionError):
            return initial.with_values(y), SolveReport(False, it, res)
        step_size = float(np.abs(step).max())
        y_new = y - step
        it += 1
        if not np.all(np.isfinite(y_new)) or float(np.abs(y_new).max()) > bound:
            return initial.with_values(y), SolveReport(False, it, float("inf"))
        y = y_new
        F = st.residual(y)
        res = float(np.abs(F).max())
        if res < 0.5 * best:
            best, best_it = res, it

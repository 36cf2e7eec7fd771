"""Finite-difference discretization of Carrier's problem.

    eps^2 y'' + 2 (1 - x^2) y + y^2 = 1,    y(-1) = y(1) = 0,

on a uniform grid with second-order central differences.  The Jacobian is
tridiagonal and every Newton step is a single banded LU solve.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.linalg.lapack import dgttrf, dgttrs
from scipy.signal import find_peaks

from .errors import SingularJacobianError

PIVOT_TOL = 1e-14
PROMINENCE = 0.1
SYMMETRY_RTOL = 1e-6


@dataclass(frozen=True)
class Grid:
    """Uniform mesh on [-1, 1]; an odd node count puts x = 0 on a node."""

    n_nodes: int

    def __post_init__(self):
        if self.n_nodes < 3 or self.n_nodes % 2 == 0:
            raise ValueError(f"n_nodes must be odd and >= 3, got {self.n_nodes}")

    @cached_property
    def nodes(self) -> np.ndarray:
        x = np.linspace(-1.0, 1.0, self.n_nodes)
        x[self.n_nodes // 2] = 0.0
        x.setflags(write=False)
        return x

    @property
    def h(self) -> float:
        return 2.0 / (self.n_nodes - 1)

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights."""
        w = np.full(self.n_nodes, self.h)
        w[0] = w[-1] = 0.5 * self.h
        w.setflags(write=False)
        return w

    def __hash__(self):
        return hash(self.n_nodes)


@dataclass(frozen=True)
class State:
    """Nodal solution values together with the parameter eps^2."""

    grid: Grid
    values: np.ndarray
    eps_sq: float

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.shape != (self.grid.n_nodes,):
            raise ValueError(f"values must have shape ({self.grid.n_nodes},), got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "eps_sq", float(self.eps_sq))
        if not self.eps_sq > 0:
            raise ValueError("eps_sq must be positive")

    @property
    def x(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def eps(self) -> float:
        return float(np.sqrt(self.eps_sq))

    def with_values(self, values) -> "State":
        return State(self.grid, values, self.eps_sq)

    def at(self, eps_sq: float) -> "State":
        return State(self.grid, self.values, eps_sq)

    @classmethod
    def constant(cls, grid: Grid, value: float, eps_sq: float) -> "State":
        return cls(grid, np.full(grid.n_nodes, float(value)), eps_sq)

    @classmethod
    def from_function(cls, grid: Grid, func, eps_sq: float) -> "State":
        return cls(grid, func(grid.nodes), eps_sq)


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    final_residual_norm: float


@dataclass(frozen=True)
class Tridiagonal:
    """Tridiagonal matrix stored by diagonals."""

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    @property
    def n(self) -> int:
        return self.diag.size

    def matvec(self, v):
        v = np.asarray(v, dtype=float)
        out = self.diag * v
        out[1:] += self.lower * v[:-1]
        out[:-1] += self.upper * v[1:]
        return out

    def toarray(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.lower, -1) + np.diag(self.upper, 1)

    def tosparse(self):
        from scipy.sparse import diags

        return diags([self.lower, self.diag, self.upper], [-1, 0, 1], format="csc")

    def factor(self) -> "TridiagonalLU":
        dl, d, du, du2, ipiv, info = dgttrf(self.lower, self.diag, self.upper)
        scale = max(float(np.max(np.abs(self.diag))), 1.0)
        pivots = np.abs(d)
        if info > 0 or float(np.min(pivots)) < PIVOT_TOL * scale:
            raise SingularJacobianError(
                f"tridiagonal pivot {float(np.min(pivots)):.3e} below {PIVOT_TOL:g} x scale"
            )
        return TridiagonalLU(dl, d, du, du2, ipiv)

    def solve(self, rhs):
        return self.factor().solve(rhs)


@dataclass(frozen=True)
class TridiagonalLU:
    dl: np.ndarray
    d: np.ndarray
    du: np.ndarray
    du2: np.ndarray
    ipiv: np.ndarray

    def solve(self, rhs):
        b = np.asarray(rhs, dtype=float)
        x, info = dgttrs(self.dl, self.d, self.du, self.du2, self.ipiv, b)
        if info != 0:
            raise SingularJacobianError(f"dgttrs failed with info={info}")
        return x


# --------------------------------------------------------------------------
# residual and Jacobian
# --------------------------------------------------------------------------


def second_difference(values, h: float) -> np.ndarray:
    """(y[i-1] - 2 y[i] + y[i+1]) / h^2 at interior nodes, zero at the ends."""
    y = np.asarray(values, dtype=float)
    out = np.zeros_like(y)
    out[1:-1] = (y[:-2] - 2.0 * y[1:-1] + y[2:]) / (h * h)
    return out


def residual(state: State) -> np.ndarray:
    """Discrete residual; Dirichlet rows carry the boundary values."""
    y = state.values
    x = state.x
    F = state.eps_sq * second_difference(y, state.grid.h) + 2.0 * (1.0 - x * x) * y + y * y - 1.0
    F[0] = y[0]
    F[-1] = y[-1]
    return F


def parameter_derivative(state: State) -> np.ndarray:
    """dF/d(eps^2): the discrete second derivative (zero on Dirichlet rows)."""
    return second_difference(state.values, state.grid.h)


def jacobian(state: State) -> Tridiagonal:
    """Exact derivative of :func:`residual` with respect to the nodal values."""
    n = state.grid.n_nodes
    c = state.eps_sq / state.grid.h**2
    x = state.x
    y = state.values
    diag = -2.0 * c + 2.0 * (1.0 - x * x) + 2.0 * y
    lower = np.full(n - 1, c)
    upper = np.full(n - 1, c)
    diag[0] = diag[-1] = 1.0
    upper[0] = 0.0
    lower[-1] = 0.0
    return Tridiagonal(lower, diag, upper)


def sup_norm(v) -> float:
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


def rounding_floor(state: State) -> float:
    """Smallest sup-norm residual resolvable in double precision at this state.

    The stencil multiplies rounding errors in y by about 4 eps^2 / h^2, so on
    fine grids a fixed absolute tolerance can fall below what any
    representable vector achieves.
    """
    c = state.eps_sq / state.grid.h**2
    return 16.0 * np.finfo(float).eps * (4.0 * c + 4.0) * max(1.0, sup_norm(state.values))


class Stencil:
    """Residual and factorized Jacobian at fixed (grid, eps^2), for hot loops.

    Equivalent to :func:`residual` and :func:`jacobian` but works on raw
    arrays and reuses the parameter-dependent coefficients.
    """

    def __init__(self, grid: Grid, eps_sq: float):
        self.grid = grid
        self.eps_sq = float(eps_sq)
        n = grid.n_nodes
        c = self.eps_sq / grid.h**2
        self.c = c
        x = grid.nodes
        self.q0 = 2.0 * (1.0 - x[1:-1] ** 2)
        self.q = self.q0 - 2.0 * c
        self.off_lower = np.full(n - 1, c)
        self.off_lower[-1] = 0.0
        self.off_upper = np.full(n - 1, c)
        self.off_upper[0] = 0.0
        self.floor_coef = 16.0 * np.finfo(float).eps * (4.0 * c + 4.0)

    def residual(self, y: np.ndarray) -> np.ndarray:
        F = np.empty_like(y)
        yi = y[1:-1]
        F[1:-1] = self.c * ((y[:-2] - 2.0 * yi) + y[2:]) + (self.q0 + yi) * yi - 1.0
        F[0] = y[0]
        F[-1] = y[-1]
        return F

    def factor(self, y: np.ndarray) -> TridiagonalLU:
        diag = np.empty_like(y)
        diag[1:-1] = self.q + 2.0 * y[1:-1]
        diag[0] = diag[-1] = 1.0
        dl, d, du, du2, ipiv, info = dgttrf(self.off_lower, diag, self.off_upper)
        pmin = float(np.abs(d).min())
        if info > 0 or pmin < PIVOT_TOL * max(float(np.abs(diag).max()), 1.0):
            raise SingularJacobianError(f"tridiagonal pivot {pmin:.3e} below {PIVOT_TOL:g} x scale")
        return TridiagonalLU(dl, d, du, du2, ipiv)

    def floor(self, y: np.ndarray) -> float:
        return self.floor_coef * max(1.0, float(np.abs(y).max()))


def newton_solve(initial: State, tol: float = 1e-10, max_iter: int = 50) -> tuple[State, SolveReport]:
    """Full-step Newton on the discrete system.

    Converged means the sup-norm residual is at most ``tol``, or, when
    ``tol`` lies below the rounding floor of the grid, that the iteration
    has reached a fixed point at that floor.  Divergence is reported through
    ``SolveReport.converged``; a singular Jacobian raises
    :class:`SingularJacobianError`.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    st = Stencil(initial.grid, initial.eps_sq)
    y = np.array(initial.values, dtype=float)
    F = st.residual(y)
    res = float(np.abs(F).max())
    step_size = np.inf
    it = 0
    while True:
        ymax = float(np.abs(y).max())
        if res <= tol or (res <= st.floor(y) and step_size <= 1e-12 * max(1.0, ymax)):
            return initial.with_values(y), SolveReport(True, it, res)
        if it >= max_iter:
            return initial.with_values(y), SolveReport(False, it, res)
        step = st.factor(y).solve(F)
        step_size = float(np.abs(step).max())
        y_new = y - step
        it += 1
        if not np.all(np.isfinite(y_new)):
            return initial.with_values(y), SolveReport(False, it, float("inf"))
        y = y_new
        F = st.residual(y)
        res = float(np.abs(F).max())


# --------------------------------------------------------------------------
# norms and classification
# --------------------------------------------------------------------------


def norms(state_or_values, grid: Grid | None = None) -> tuple[float, float, float]:
    """(L2, H1, sup) norms with trapezoidal weights and difference quotients."""
    y, grid = _values_and_grid(state_or_values, grid)
    l2sq = float(np.dot(grid.weights, y * y))
    dy = np.diff(y)
    semi = float(np.dot(dy, dy)) / grid.h
    return float(np.sqrt(l2sq)), float(np.sqrt(l2sq + semi)), sup_norm(y)


def h1_inner_gradient(e, grid: Grid) -> np.ndarray:
    """Gradient of ||e||_{H1}^2 with respect to the nodal values of e."""
    e = np.asarray(e, dtype=float)
    g = 2.0 * grid.weights * e
    de = np.diff(e) / grid.h
    g[:-1] -= 2.0 * de
    g[1:] += 2.0 * de
    return g


def l2_inner_gradient(e, grid: Grid) -> np.ndarray:
    return 2.0 * grid.weights * np.asarray(e, dtype=float)


def distance(a: State, b: State, norm: str = "h1") -> float:
    e = a.values - b.values
    l2, h1, _ = norms(e, a.grid)
    return h1 if norm == "h1" else l2


def _values_and_grid(state_or_values, grid):
    if isinstance(state_or_values, State):
        return state_or_values.values, state_or_values.grid
    y = np.asarray(state_or_values, dtype=float)
    return y, (grid if grid is not None else Grid(y.size))


def count_interior_maxima(state: State, prominence: float = PROMINENCE) -> int:
    """Number of interior local maxima with prominence at least ``prominence``."""
    peaks, _ = find_peaks(np.asarray(state.values), prominence=prominence)
    return int(peaks.size)


def reflect(values) -> np.ndarray:
    """y(x) -> y(-x) on a symmetric grid."""
    return np.asarray(values)[::-1].copy()


def symmetry_class(state: State, rtol: float = SYMMETRY_RTOL) -> str:
    y = state.values
    gap = sup_norm(y - y[::-1])
    return "symmetric" if gap <= rtol * sup_norm(y) else "asymmetric"


# --------------------------------------------------------------------------
# spectrum of the linearization (interior unknowns only)
# --------------------------------------------------------------------------


def interior_operator(state: State) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal and off-diagonal of the symmetric interior linearization."""
    c = state.eps_sq / state.grid.h**2
    x = state.x[1:-1]
    y = state.values[1:-1]
    diag = -2.0 * c + 2.0 * (1.0 - x * x) + 2.0 * y
    off = np.full(diag.size - 1, c)
    return diag, off


def positive_eigenvalue_count(state: State) -> int:
    """Number of positive eigenvalues of the interior linearization (Sturm count)."""
    diag, off = interior_operator(state)
    upper = float(np.max(diag) + 2.0 * off[0] + 1.0)
    vals = eigh_tridiagonal(diag, off, eigvals_only=True, select="v", select_range=(0.0, upper))
    return int(vals.size)


def eigenpairs_near_zero(state: State, count: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """The ``count`` interior eigenpairs with eigenvalues closest to zero.

    Eigenvectors are padded with zero Dirichlet values and normalized in
    the trapezoidal L2 norm.
    """
    diag, off = interior_operator(state)
    npos = positive_eigenvalue_count(state)
    m = diag.size
    lo_idx = max(m - npos - count, 0)
    hi_idx = min(m - npos + count - 1, m - 1)
    vals, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(lo_idx, hi_idx))
    order = np.argsort(np.abs(vals))[:count]
    vals = vals[order]
    full = np.zeros((state.grid.n_nodes, order.size))
    full[1:-1] = vecs[:, order]
    for j in range(order.size):
        full[:, j] /= norms(full[:, j], state.grid)[0]
    return vals, full


def inverse_iteration(state: State, shift: float = 0.0, max_iter: int = 30, tol: float = 1e-12, seed: int = 0):
    """Eigenpair of the interior linearization nearest ``shift``.

    Returns (eigenvalue, eigenvector) with the eigenvector zero-padded on the
    boundary and unit trapezoidal L2 norm.
    """
    diag, off = interior_operator(state)
    T = Tridiagonal(off.copy(), diag - shift, off.copy())
    lu = T.factor()
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(diag.size)
    v /= np.linalg.norm(v)
    lam = shift
    for _ in range(max_iter):
        w = lu.solve(v)
        w /= np.linalg.norm(w)
        Tw = Tridiagonal(off, diag, off).matvec(w)
        new_lam = float(np.dot(w, Tw))
        done = abs(new_lam - lam) <= tol * max(1.0, abs(new_lam)) and np.linalg.norm(Tw - new_lam * w) <= 1e-8 * max(
            1.0, abs(diag).max()
        )
        v, lam = w, new_lam
        if done:
            break
    full = np.zeros(state.grid.n_nodes)
    full[1:-1] = v
    full /= norms(full, state.grid)[0]
    return lam, full


def eigenvector_parity(v, rtol: float = 1e-3) -> str:
    """'symmetric', 'antisymmetric' or 'mixed' for a grid function."""
    v = np.asarray(v, dtype=float)
    scale = sup_norm(v)
    if sup_norm(v - v[::-1]) <= rtol * scale:
        return "symmetric"
    if sup_norm(v + v[::-1]) <= rtol * scale:
        return "antisymmetric"
    return "mixed"


def interpolate_state(state: State, grid: Grid) -> State:
    """Piecewise-linear transfer of a state to another grid."""
    return State(grid, np.interp(grid.nodes, state.x, state.values), state.eps_sq)

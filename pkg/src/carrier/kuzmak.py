"""Kuzmak multiple-scales machinery for Carrier's problem.

At leading order a rapidly oscillating solution is ``y0 = Y(phi(x)/eps + mu, x)``
where, at each slow location ``x``, ``Y`` is the unit-period orbit of the
nonlinear oscillator

    Phi^2 Y_XX + 2 (1 - x^2) Y + Y^2 = 1,    Phi^2 Y_X^2 = c(A, x, Y),

with ``c(A, x, y) = A + 2y - 2(1 - x^2) y^2 - (2/3) y^3``.  The orbit lives
between the two upper roots ``Y1 < Y2`` of ``c``.  The slow amplitude ``A(x)``
is fixed by conservation of the action ``k = 2 int_{Y1}^{Y2} sqrt(c) dy`` and
the local wavenumber is ``phi'(x) = Phi(A(x), x)``.

All integrals are evaluated after the substitution
``y = Y1 + (Y2 - Y1) sin^2(theta)``, which removes the inverse square-root
endpoint singularities.  Functions accept scalars or numpy arrays and
broadcast.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from .errors import ComplexRootsError, NoSolutionError, TurningPointError
from .quadrature import graded_rule, grading_depth, integrate_graded

HALF_PI = 0.5 * np.pi
_ROOT_SLACK = 1e-12


def cubic_c(A, x, y):
    """The first-integral polynomial c(A, x, y)."""
    return A + 2.0 * y - 2.0 * (1.0 - x * x) * y * y - (2.0 / 3.0) * y**3


def boundary_envelopes(x):
    """Values (A1, A2) of A at which c has a double root.

    For A = A1(x) the two lower roots coalesce (a turning point); for
    A = A2(x) the two upper roots coalesce (zero-amplitude oscillation).
    """
    x2 = np.asarray(x, dtype=float) ** 2
    poly = 5.0 - 9.0 * x2 + 6.0 * x2**2 - 2.0 * x2**3
    root = (2.0 - 2.0 * x2 + x2**2) ** 1.5
    return (2.0 / 3.0) * (poly + 2.0 * root), (2.0 / 3.0) * (poly - 2.0 * root)


class _Orbit(NamedTuple):
    Y0: np.ndarray
    Y1: np.ndarray
    Y2: np.ndarray
    gap_low: np.ndarray  # Y1 - Y0
    width: np.ndarray  # Y2 - Y1


def _orbit(A, x) -> _Orbit:
    """Roots of c by the trigonometric solution of the depressed cubic.

    The root gaps are formed directly from half-angle identities so that
    they stay accurate when two roots nearly coalesce.
    """
    A = np.asarray(A, dtype=float)
    x = np.asarray(x, dtype=float)
    s = 1.0 - x * x
    R = 1.0 + s * s
    A1, A2 = boundary_envelopes(x)
    scale = 2.0 * R**1.5
    hi = 1.5 * (A1 - A) / scale  # 1 - cos(theta0)
    lo = 1.5 * (A - A2) / scale  # 1 + cos(theta0)
    tol = _ROOT_SLACK * np.maximum(1.0, np.abs(A))
    if np.any(hi < -tol) or np.any(lo < -tol):
        raise ComplexRootsError("A outside [A2(x), A1(x)]: c has complex roots")
    hi = np.maximum(hi, 0.0)
    lo = np.maximum(lo, 0.0)
    theta0 = 2.0 * np.arctan2(np.sqrt(hi), np.sqrt(lo))
    r = 2.0 * np.sqrt(R)
    third = theta0 / 3.0
    Y2 = -s + r * np.cos(third)
    Y1 = -s + r * np.cos(third - 2.0 * np.pi / 3.0)
    Y0 = -s + r * np.cos(third - 4.0 * np.pi / 3.0)
    gap_low = np.sqrt(3.0) * r * np.sin(third)
    width = np.sqrt(3.0) * r * np.sin(np.pi / 3.0 - third)
    return _Orbit(Y0, Y1, Y2, gap_low, width)


def cubic_roots(A, x):
    """Sorted real roots (Y0, Y1, Y2) of c(A, x, .).

    Raises ComplexRootsError when A lies outside [A2(x), A1(x)].
    """
    orb = _orbit(A, x)
    return orb.Y0, orb.Y1, orb.Y2


def _singular_scale(orb: _Orbit, upper):
    """Width in theta of the near-singularity at theta = 0, relative to ``upper``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.sqrt(orb.gap_low / orb.width)
    a = np.where(np.isfinite(a), a, np.inf)
    return a / np.asarray(upper, dtype=float)


def _inverse_sqrt_integrand(orb: _Orbit):
    d = orb.gap_low[..., None]
    L = orb.width[..., None]

    def g(theta):
        return 2.0 / np.sqrt((2.0 / 3.0) * (d + L * np.sin(theta) ** 2))

    return g


def _half_period_integral(orb: _Orbit, refine: bool = True):
    """int_{Y1}^{Y2} c^{-1/2} dy."""
    return integrate_graded(
        _inverse_sqrt_integrand(orb),
        np.full(np.shape(orb.width), HALF_PI),
        _singular_scale(orb, HALF_PI),
        n=24,
        max_n=96 if refine else 24,
    )


def _incomplete_integral(orb: _Orbit, theta, refine: bool = True):
    """int_{Y1}^{y} c^{-1/2} dy with y = Y1 + (Y2 - Y1) sin^2(theta)."""
    theta = np.asarray(theta, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = _singular_scale(orb, theta)
    scale = np.where(theta > 0, scale, np.inf)
    return integrate_graded(
        _inverse_sqrt_integrand(orb), theta, scale, n=24, max_n=96 if refine else 24
    )


def period_function(A, x):
    """Phi(A, x): the value of phi' that makes the orbit period exactly 1.

    Raises TurningPointError when A >= A1(x) (the lower roots coalesce and
    the period diverges).
    """
    orb = _orbit(A, x)
    if np.any(orb.gap_low <= 0.0):
        raise TurningPointError("Phi vanishes: A >= A1(x), Y0 and Y1 coalesce")
    return _phi_from_orbit(orb)


def _phi_from_orbit(orb: _Orbit):
    half = _half_period_integral(orb)
    return 0.5 / half if np.ndim(half) else 0.5 / float(half)


def action_integral(A, x):
    """Action k = 2 int_{Y1}^{Y2} sqrt(c) dy of the orbit with constant A at x."""
    return _action_from_orbit(_orbit(A, x))


def action_envelope(x):
    """Largest attainable action at x, reached at A = A1(x)."""
    A1, _ = boundary_envelopes(x)
    return action_integral(A1, x)


def amplitude_from_k(k, x, tol: float = 1e-12, max_iter: int = 200):
    """Slow amplitude A(x) for the adiabatic invariant k.

    Safeguarded Newton on [A2(x), A1(x)] using dk/dA = int c^{-1/2} dy
    = 1 / (2 Phi).  Raises NoSolutionError when k exceeds the action at
    A1(x), i.e. x lies beyond the turning point of this k.
    """
    k_arr, x_arr = np.broadcast_arrays(np.asarray(k, dtype=float), np.asarray(x, dtype=float))
    scalar = k_arr.ndim == 0
    k_arr = np.atleast_1d(k_arr).astype(float)
    x_arr = np.atleast_1d(x_arr).astype(float)
    if np.any(k_arr < 0):
        raise NoSolutionError("the action k must be non-negative")
    A1, A2 = boundary_envelopes(x_arr)
    k_top = action_integral(A1, x_arr)
    over = k_arr > k_top * (1.0 + 1e-13) + 1e-300
    if np.any(over):
        bad = x_arr[over][0]
        raise NoSolutionError(f"k exceeds the action at A1(x) for x = {bad!r}: beyond the turning point")

    lo = A2.copy()
    hi = A1.copy()
    # initial guess from linear interpolation of k(A) between its end values
    frac = np.where(k_top > 0, k_arr / np.where(k_top > 0, k_top, 1.0), 0.0)
    A = A2 + np.clip(frac, 0.0, 1.0) * (A1 - A2)
    A = np.clip(A, lo, hi)
    active = np.ones(A.shape, dtype=bool)
    target_tol = tol * np.maximum(1.0, k_arr)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Ai, xi, ki = A[idx], x_arr[idx], k_arr[idx]
        orb = _orbit(Ai, xi)
        kv = _action_from_orbit(orb, refine=False)
        res = kv - ki
        done = np.abs(res) <= target_tol[idx]
        hi[idx] = np.where(res > 0, Ai, hi[idx])
        lo[idx] = np.where(res <= 0, Ai, lo[idx])
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = np.where(orb.gap_low > 0, _half_period_integral_safe(orb), np.inf)
            step = res / slope
        cand = Ai - step
        inside = (cand > lo[idx]) & (cand < hi[idx]) & np.isfinite(cand)
        cand = np.where(inside, cand, 0.5 * (lo[idx] + hi[idx]))
        stalled = (hi[idx] - lo[idx]) <= 4e-16 * np.maximum(1.0, np.abs(Ai))
        A[idx] = np.where(done, Ai, cand)
        active[idx] = ~(done | stalled)
    out = A
    return float(out[0]) if scalar else out.reshape(np.shape(np.broadcast_arrays(np.asarray(k), np.asarray(x))[0]))


def _action_from_orbit(orb: _Orbit, refine: bool = True):
    d = orb.gap_low[..., None]
    L = orb.width[..., None]

    def f(theta):
        sn2 = np.sin(theta) ** 2
        return 4.0 * L**2 * sn2 * (1.0 - sn2) * np.sqrt((2.0 / 3.0) * (d + L * sn2))

    # continuous as d -> 0 (tends to sqrt(L) sin(theta)), so shallow grading suffices
    return integrate_graded(
        f,
        np.full(np.shape(orb.width), HALF_PI),
        _singular_scale(orb, HALF_PI),
        n=24,
        max_n=96 if refine else 24,
        max_depth=12,
    )


def _half_period_integral_safe(orb: _Orbit):
    safe = _Orbit(orb.Y0, orb.Y1, orb.Y2, np.where(orb.gap_low > 0, orb.gap_low, 1.0), orb.width)
    return _half_period_integral(safe, refine=False)


# --------------------------------------------------------------------------
# turning points and the slow phase
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TurningPointInfo:
    x_star: float
    A_at_star: float


@lru_cache(maxsize=None)
def k1() -> float:
    """Action at which the turning points sit exactly at x = +-1."""
    return float(action_envelope(1.0))


@lru_cache(maxsize=None)
def k0() -> float:
    """Action for which A(+-1) = 0, i.e. Y = Y_X = 0 at the boundary."""
    return float(action_integral(0.0, 1.0))


@lru_cache(maxsize=None)
def k_max() -> float:
    """Action of the largest orbit at x = 0; beyond it no oscillation exists."""
    return float(action_envelope(0.0))


@lru_cache(maxsize=4096)
def _turning_point_cached(k: float) -> TurningPointInfo | None:
    if k <= k1():
        return None
    if k >= k_max():
        return TurningPointInfo(0.0, float(boundary_envelopes(0.0)[0]))
    x_star = brentq(lambda xx: float(action_envelope(xx)) - k, 0.0, 1.0, xtol=1e-14, rtol=1e-15)
    return TurningPointInfo(float(x_star), float(boundary_envelopes(x_star)[0]))


def turning_point(k: float) -> TurningPointInfo | None:
    """Location x* > 0 where A(x*) = A1(x*), or None when k <= k1."""
    return _turning_point_cached(float(k))


def oscillation_extent(k: float) -> float:
    """Right end of the oscillatory region: 1 if there is no turning point, else x*."""
    tp = turning_point(k)
    return 1.0 if tp is None else tp.x_star


def _wavenumber(k, s):
    """Phi(A(s), s) along the solution with action k; zero at a turning point."""
    s = np.asarray(s, dtype=float)
    A = amplitude_from_k(np.full(s.shape, k), s)
    orb = _orbit(A, s)
    out = np.zeros(s.shape)
    ok = orb.gap_low > 0
    if np.any(ok):
        sub = _Orbit(*(np.asarray(f)[ok] for f in orb))
        out[ok] = 0.5 / _half_period_integral(sub, refine=False)
    return out


def _end_scale(k: float, x_hi: float, ext: float) -> float:
    """Relative distance from x_hi to the nearest wavenumber singularity."""
    if x_hi < ext:
        return (ext - x_hi) / x_hi
    if ext < 1.0 or k >= 0.5 * k1():
        return 1e-12
    return 1.0


def _phase_from_zero(k: float, x_hi: float, n: int = 8, rtol: float = 1e-12) -> float:
    """int_0^x_hi Phi(A(s), s) ds, with panels graded toward s = x_hi."""
    if x_hi == 0.0:
        return 0.0
    depth = grading_depth(_end_scale(k, x_hi, oscillation_extent(k)))

    def rule(order):
        t, w = graded_rule(depth, order)
        return x_hi * float(np.sum(w * _wavenumber(k, x_hi * (1.0 - t))))

    prev = rule(n)
    while n < 128:
        n *= 2
        cur = rule(n)
        if abs(cur - prev) <= rtol * abs(cur):
            return cur
        prev = cur
    return prev


@lru_cache(maxsize=8192)
def _phase_end_cached(k: float) -> float:
    return _phase_from_zero(k, oscillation_extent(k))


def phase_at_end(k: float) -> float:
    """phi at the end of the oscillatory region: phi(1) if k <= k1, else phi(x*)."""
    return _phase_end_cached(float(k))


def phase(k: float, x):
    """Slow phase phi(x) = int_0^x Phi(A(s), s) ds, odd in x, phi(0) = 0.

    Raises TurningPointError when |x| goes past the turning point of k.
    """
    k = float(k)
    x_arr = np.asarray(x, dtype=float)
    ext = oscillation_extent(k)
    ax = np.abs(x_arr)
    if np.any(ax > ext * (1.0 + 1e-14)):
        raise TurningPointError(f"x beyond the turning point x* = {ext!r} for k = {k!r}", x=ext)
    vals = [phase_at_end(k) if v >= ext else _phase_from_zero(k, float(v)) for v in ax.ravel()]
    out = np.asarray(vals).reshape(x_arr.shape) * np.sign(x_arr)
    return float(out) if out.ndim == 0 else out


def phase_table(k: float, x, n: int = 12):
    """phi on an array of abscissae by cumulative cell-wise quadrature.

    Faster than calling :func:`phase` pointwise when building profiles on a
    grid.  Each cell between consecutive sorted ``|x|`` values is graded
    toward its right end according to its distance from the turning point.
    """
    k = float(k)
    x_arr = np.asarray(x, dtype=float)
    ext = oscillation_extent(k)
    ax = np.abs(x_arr)
    if np.any(ax > ext * (1.0 + 1e-14)):
        raise TurningPointError(f"x beyond the turning point x* = {ext!r} for k = {k!r}", x=ext)
    ax = np.minimum(ax, ext)
    knots = np.unique(np.concatenate([[0.0], ax.ravel()]))
    a, b = knots[:-1], knots[1:]
    cells = np.zeros(a.shape)
    if a.size:
        near = np.array([_end_scale(k, float(bb), ext) * (bb / (bb - aa)) for aa, bb in zip(a, b)])
        depths = np.array([grading_depth(v) for v in near])
        for depth in np.unique(depths):
            sel = depths == depth
            t, w = graded_rule(int(depth), n)
            width = (b[sel] - a[sel])[:, None]
            pts = b[sel][:, None] - width * t[None, :]
            vals = _wavenumber(k, pts.ravel()).reshape(pts.shape)
            cells[sel] = np.sum(w * vals, axis=1) * width[:, 0]
    cum = np.concatenate([[0.0], np.cumsum(cells)])
    out = np.interp(ax, knots, cum)
    return out * np.sign(x_arr)


# --------------------------------------------------------------------------
# the unit-period profile Y and the boundary offset X0
# --------------------------------------------------------------------------


def _invert_incomplete(orb: _Orbit, Phi, target, tol: float = 1e-14, max_iter: int = 60):
    """theta with Phi * int_0^theta g = target, target in [0, 1/2]; Newton with bisection guard."""
    target = np.asarray(target, dtype=float)
    lo = np.zeros(target.shape)
    hi = np.full(target.shape, HALF_PI)
    theta = np.clip(np.pi * target, 0.0, HALF_PI)
    d, L = orb.gap_low, orb.width
    for _ in range(max_iter):
        val = Phi * _incomplete_integral(orb, theta) - target
        hi = np.where(val > 0, theta, hi)
        lo = np.where(val <= 0, theta, lo)
        deriv = Phi * 2.0 / np.sqrt((2.0 / 3.0) * (d + L * np.sin(theta) ** 2))
        cand = theta - val / deriv
        bad = ~((cand > lo) & (cand < hi) & np.isfinite(cand))
        cand = np.where(bad, 0.5 * (lo + hi), cand)
        if np.all(np.abs(val) <= tol):
            break
        theta = cand
    return theta


def profile_from_amplitude(X, x, A, Phi=None):
    """Y(X, x) for a given amplitude A(x); X is taken modulo 1."""
    X, x, A = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (X, x, A)))
    orb = _orbit(A, x)
    if Phi is None:
        Phi = _phi_from_orbit(orb)
    Xm = np.mod(X, 1.0)
    Xh = np.where(Xm > 0.5, 1.0 - Xm, Xm)
    theta = _invert_incomplete(orb, Phi, Xh)
    return orb.Y1 + orb.width * np.sin(theta) ** 2


def profile_Y(X, x, k):
    """Leading-order oscillation Y(X, x) on the solution with action k.

    Rises from Y1 at X = 0 to Y2 at X = 1/2 and is mirrored on [1/2, 1]:
    Y(X) = Y(1 - X), period 1 in X.
    """
    X_arr, x_arr = np.broadcast_arrays(np.asarray(X, dtype=float), np.asarray(x, dtype=float))
    A = amplitude_from_k(np.full(x_arr.shape, float(k)), x_arr)
    out = profile_from_amplitude(X_arr, x_arr, A)
    return float(out) if np.ndim(out) == 0 else out


@lru_cache(maxsize=8192)
def _x0_cached(k: float) -> float:
    A = amplitude_from_k(k, 1.0)
    if A < -1e-10:
        raise NoSolutionError(f"k = {k!r} < k0: the boundary orbit does not reach y = 0")
    if A <= 0.0:
        return 0.0
    orb = _orbit(A, 1.0)
    if orb.gap_low <= 0.0:
        # homoclinic boundary orbit (k = k1): X0 -> 1/2 in the limit
        return 0.5
    Phi = _phi_from_orbit(orb)
    frac = min(max(-float(orb.Y1) / float(orb.width), 0.0), 1.0)
    theta = np.arcsin(np.sqrt(frac))
    return float(Phi * _incomplete_integral(orb, theta))


def boundary_offset_X0(k: float) -> float:
    """Smaller zero X0 in [0, 1/2] of the unit-cell profile at x = 1."""
    return _x0_cached(float(k))


def central_derivative(f, k: float, rel_step: float = 1e-5, step: float | None = None) -> float:
    """df/dk by central differences with one Richardson extrapolation."""
    h = rel_step * k if step is None else step

    def D(hh):
        return (f(k + hh) - f(k - hh)) / (2.0 * hh)

    return (4.0 * D(0.5 * h) - D(h)) / 3.0


def forward_derivative(f, k: float, step: float) -> float:
    """Second-order one-sided difference with one Richardson step, for use at domain edges."""

    def D(hh):
        return (-3.0 * f(k) + 4.0 * f(k + hh) - f(k + 2.0 * hh)) / (2.0 * hh)

    return (4.0 * D(0.5 * step) - D(step)) / 3.0


# --------------------------------------------------------------------------
# data carriers
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CubicOrbit:
    A: float
    x: float
    Y0: float
    Y1: float
    Y2: float
    Phi: float

    @classmethod
    def at(cls, A: float, x: float) -> "CubicOrbit":
        Y0, Y1, Y2 = cubic_roots(A, x)
        return cls(float(A), float(x), float(Y0), float(Y1), float(Y2), float(period_function(A, x)))


FAMILIES = ("sym-min", "sym-max", "asym-plus", "asym-minus")


@dataclass
class KuzmakBranch:
    """One asymptotic solution family with its tabulated slow functions."""

    k: float
    mu: float
    family: str
    n: int
    x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    A_table: np.ndarray = field(default_factory=lambda: np.zeros(0))
    phi_table: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def tabulate(cls, k: float, mu: float, family: str, n: int, num: int = 201) -> "KuzmakBranch":
        if family not in FAMILIES:
            raise ValueError(f"unknown family {family!r}")
        ext = oscillation_extent(k)
        x = np.linspace(-ext, ext, num)
        A = amplitude_from_k(np.full(x.shape, k), x)
        return cls(k, mu % 1.0, family, n, x, A, phase_table(k, x))

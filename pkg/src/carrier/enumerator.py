"""Asymptotic census of Carrier's problem at a given eps.

Solutions without turning points are indexed by roots k in [k0, k1] of the
boundary conditions written through the end phase phi(1; k) and the
boundary offset X0(k); solutions with turning points by roots k > k1 of
2 phi(x*; k) / eps in Z.  Profiles are assembled from the Kuzmak
oscillation, the outer solution and the boundary-layer corrections.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import beta, betaincinv

from . import kuzmak
from .model import Grid

LOW_CONFIDENCE_EPS = 0.15
SCAN_POINTS = 400
TP_FAMILIES = ("turning-point-sym-min", "turning-point-sym-max")
ATANH_ROOT = float(np.arctanh(np.sqrt(2.0 / 3.0)))
# turning points closer than this many eps to the wall sit inside the boundary layer
LAYER_WIDTHS = 5.0


# --------------------------------------------------------------------------
# closed-form pieces
# --------------------------------------------------------------------------


def outer_solution(x):
    """Non-oscillatory outer solution x^2 - 1 - sqrt(x^4 - 2x^2 + 2)."""
    x = np.asarray(x, dtype=float)
    out = -1.0 + x * x - np.sqrt(x**4 - 2.0 * x * x + 2.0)
    return float(out) if out.ndim == 0 else out


def boundary_layer(x, side: str, sign: str, eps: float):
    """Additive boundary-layer correction 3 sech^2(+-X/sqrt(2) + atanh(sqrt(2/3))).

    ``X`` is the distance to the wall at ``side`` in units of eps.  With sign
    '+' the increment decays monotonically into the domain; with '-' it
    first rises to 3 at X = sqrt(2) atanh(sqrt(2/3)), a boundary spike.
    """
    if side not in ("left", "right") or sign not in ("+", "-"):
        raise ValueError("side must be left/right and sign +/-")
    if not eps > 0:
        raise ValueError("eps must be positive")
    x = np.asarray(x, dtype=float)
    X = (1.0 + x) / eps if side == "left" else (1.0 - x) / eps
    s = 1.0 if sign == "+" else -1.0
    out = 3.0 / np.cosh(s * X / np.sqrt(2.0) + ATANH_ROOT) ** 2
    return float(out) if out.ndim == 0 else out


def interior_spike(X):
    """Interior spike 3 sqrt(2) sech^2(2^(-1/4) X) - 1 - sqrt(2)."""
    X = np.asarray(X, dtype=float)
    out = 3.0 * np.sqrt(2.0) / np.cosh(2.0**-0.25 * X) ** 2 - 1.0 - np.sqrt(2.0)
    return float(out) if out.ndim == 0 else out


def large_eps_peak() -> float:
    """Maximum of y0'' + y0^2 = 0, y0(+-1) = 0: (3/2) (B(1/3, 1/2) / 3)^2."""
    return 1.5 * (beta(1.0 / 3.0, 0.5) / 3.0) ** 2


def large_eps_profiles(eps: float, which: str, x):
    """Leading-order profiles of the two solutions that exist for large eps.

    'small': eps^-2 (x^2 - 1) / 2.  'large': eps^2 y0(x) with y0 the positive
    solution of y0'' + y0^2 = 0, y0(+-1) = 0.  Its first integral gives
    |x| = 1 - I(1/3, 1/2; (y0 / y_max)^3) with I the regularized incomplete
    beta function, which is inverted in closed form.
    """
    x = np.asarray(x, dtype=float)
    if which == "small":
        out = (x * x - 1.0) / (2.0 * eps * eps)
    elif which == "large":
        u3 = betaincinv(1.0 / 3.0, 0.5, np.clip(1.0 - np.abs(x), 0.0, 1.0))
        out = eps * eps * large_eps_peak() * np.cbrt(u3)
    else:
        raise ValueError("which must be 'small' or 'large'")
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# tabulated slow quantities on k-grids
# --------------------------------------------------------------------------


def _clustered(a: float, b: float, num: int) -> np.ndarray:
    """Points on [a, b] clustered quadratically at a and logarithmically toward b."""
    t = np.linspace(0.0, 1.0, num)
    s = 0.5 - 0.5 * np.cos(np.pi * t)
    core = a + (b - a) * s**2 * (3.0 - 2.0 * s)
    tail = b - (b - a) * np.logspace(-2, -12, 40)
    return np.unique(np.clip(np.concatenate([core, tail]), a, b))


@lru_cache(maxsize=None)
def _full_domain_table(num: int = SCAN_POINTS):
    k0, k1 = kuzmak.k0(), kuzmak.k1()
    ks = _clustered(k0, k1, num)
    two_phi = np.array([2.0 * kuzmak.phase_at_end(k) for k in ks])
    two_x0 = np.array([2.0 * kuzmak.boundary_offset_X0(k) for k in ks])
    for arr in (ks, two_phi, two_x0):
        arr.setflags(write=False)
    return ks, two_phi, two_x0


@lru_cache(maxsize=None)
def _turning_point_table(num: int = SCAN_POINTS):
    k1, kmax = kuzmak.k1(), kuzmak.k_max()
    t = np.linspace(0.0, 1.0, num)
    ks = k1 + (kmax - k1) * (0.5 - 0.5 * np.cos(np.pi * t))
    head = k1 + (kmax - k1) * np.logspace(-12, -2, 40)
    ks = np.unique(np.concatenate([ks[1:-1], head]))
    two_phi = np.array([2.0 * kuzmak.phase_at_end(k) for k in ks])
    for arr in (ks, two_phi):
        arr.setflags(write=False)
    return ks, two_phi


def _scan_roots(func, ks: np.ndarray, vals: np.ndarray) -> list[float]:
    """Roots of ``func`` on [ks[0], ks[-1]] from tabulated values.

    Sign changes are refined by brentq.  Interior extrema of the table are
    refined by bounded minimization so that pairs of nearby roots inside one
    cell, as near a tangency, are not missed.
    """
    roots = []
    sgn = np.sign(vals)
    for i in range(ks.size - 1):
        if vals[i] == 0.0:
            roots.append(float(ks[i]))
        elif sgn[i] * sgn[i + 1] < 0:
            roots.append(brentq(func, ks[i], ks[i + 1], xtol=1e-13, rtol=1e-14))
    if vals[-1] == 0.0:
        roots.append(float(ks[-1]))
    d = np.diff(vals)
    for i in range(1, ks.size - 1):
        if d[i - 1] * d[i] >= 0:
            continue
        is_min = d[i - 1] < 0
        lo, hi = float(ks[i - 1]), float(ks[i + 1])
        res = minimize_scalar(lambda k: func(k) if is_min else -func(k), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-13})
        ke = float(res.x)
        fe = func(ke)
        if fe == 0.0:
            roots.append(ke)
            continue
        for a, b in ((lo, ke), (ke, hi)):
            fa, fb = func(a), func(b)
            if fa * fb < 0 and not any(a < r < b for r in roots):
                roots.append(brentq(func, a, b, xtol=1e-13, rtol=1e-14))
    return sorted(set(roots))


# --------------------------------------------------------------------------
# enumeration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AsymptoticSolution:
    """One leading-order asymptotic solution at a given eps."""

    family: str
    k: float
    mu: float
    n: float
    eps: float
    boundary_layer_signs: tuple | None = None
    mu_sign: str | None = None
    low_confidence: bool = False
    flags: tuple = field(default_factory=tuple)


def _check_eps(eps: float):
    if not eps > 0:
        raise ValueError("eps must be positive")


def _hand_off_dip(ks: np.ndarray, vals: np.ndarray):
    """Index of the minimum that precedes the final rise of ``vals`` toward k1, or None."""
    i = vals.size - 1
    while i > 0 and vals[i - 1] <= vals[i]:
        i -= 1
    return i if 0 < i < vals.size - 1 else None


def _drop_hand_off_pair(roots: list, ks: np.ndarray, vals: np.ndarray, N: int) -> list:
    """Remove the root pair straddling the dip of phi(1)/eps + X0 just below k1.

    As k -> k1 the offset X0 rises logarithmically to 1/2 and the curve
    turns up into its hand-off with the turning-point family.  Levels N
    crossed inside that dip would be counted twice more on top of the
    turning-point root at level N, so the two crossings nearest the dip
    are discarded.
    """
    j = _hand_off_dip(ks, vals)
    if j is None or not (vals[j] < N < vals[-1]):
        return roots
    k_dip = ks[j]
    left = [r for r in roots if r <= k_dip]
    right = [r for r in roots if r > k_dip]
    if left and right:
        return left[:-1] + right[1:]
    return roots


def enumerate_symmetric(eps: float) -> list[tuple]:
    """Roots of phi(1)/eps = n +- X0 (mu = 0) and phi(1)/eps = n - 1/2 +- X0 (mu = 1/2).

    Returns tuples (k, mu, n, sign) sorted by k, where n is the
    integer with phi(1)/eps + mu = n + sign X0.
    """
    _check_eps(eps)
    ks, two_phi, two_x0 = _full_domain_table()
    out = []
    for s in (1.0, -1.0):
        lhs = two_phi / eps - s * two_x0
        for N in range(int(np.floor(lhs.min())), int(np.ceil(lhs.max())) + 1):
            if N < 0:
                continue

            def g(k, N=N, s=s):
                return 2.0 * kuzmak.phase_at_end(k) / eps - s * 2.0 * kuzmak.boundary_offset_X0(k) - N

            roots = _scan_roots(g, ks, lhs - N)
            if s < 0:
                roots = _drop_hand_off_pair(roots, ks, lhs, N)
            for k in roots:
                mu = 0.0 if N % 2 == 0 else 0.5
                n = (N + 1) // 2 if mu else N // 2
                out.append((k, mu, n, "+" if s > 0 else "-"))
    # at k0 (X0 = 0) both signs give the same solution
    out.sort()
    dedup = []
    for item in out:
        if dedup and abs(item[0] - dedup[-1][0]) <= 1e-9 and item[1] == dedup[-1][1] and item[2] == dedup[-1][2]:
            continue
        dedup.append(item)
    return dedup


def enumerate_nonsymmetric(eps: float) -> list[tuple]:
    """Roots of 2 phi(1)/eps in Z on [k0, k1]; each gives mu = +-X0 - phi(1)/eps (mod 1).

    Returns tuples (k, mu, n) with two entries per root (the two offsets),
    where 2n = 2 phi(1)/eps.
    """
    _check_eps(eps)
    ks, two_phi, two_x0 = _full_domain_table()
    lhs = two_phi / eps
    out = []
    for N in range(max(int(np.floor(lhs.min())), 1), int(np.ceil(lhs.max())) + 1):

        def g(k, N=N):
            return 2.0 * kuzmak.phase_at_end(k) / eps - N

        for k in _scan_roots(g, ks, lhs - N):
            x0 = kuzmak.boundary_offset_X0(k)
            base = -0.5 * N
            for sgn in (1.0, -1.0):
                out.append((k, float((base + sgn * x0) % 1.0), 0.5 * N))
    out.sort()
    return out


def enumerate_turning_point(eps: float) -> list[tuple]:
    """Roots k > k1 of phi(x*)/eps + mu = n, mu in {0, 1/2}.

    Returns tuples (k, mu, n, signs) with the four boundary-layer sign
    pairs for each root.
    """
    _check_eps(eps)
    ks, two_phi = _turning_point_table()
    lhs = two_phi / eps
    out = []
    for N in range(1, int(np.ceil(lhs.max())) + 1):

        def g(k, N=N):
            return 2.0 * kuzmak.phase_at_end(k) / eps - N

        for k in _scan_roots(g, ks, lhs - N):
            mu = 0.0 if N % 2 == 0 else 0.5
            n = (N + 1) // 2 if mu else N // 2
            signs = [(a, b) for a in ("+", "-") for b in ("+", "-")]
            out.append((k, mu, n, signs))
    out.sort(key=lambda t: t[0])
    return out


def census(eps: float) -> list[AsymptoticSolution]:
    """All asymptotic solutions at ``eps`` with multiplicities expanded."""
    low = eps > LOW_CONFIDENCE_EPS
    sols = []
    for k, mu, n, sign in enumerate_symmetric(eps):
        fam = "sym-max" if mu == 0.5 else "sym-min"
        sols.append(AsymptoticSolution(fam, k, mu, n, eps, mu_sign=sign, low_confidence=low))
    for k, mu, n in enumerate_nonsymmetric(eps):
        x0 = kuzmak.boundary_offset_X0(k)
        plus = abs(((mu + n) - x0 + 0.5) % 1.0 - 0.5) < 1e-9
        fam = "asym-plus" if plus else "asym-minus"
        sols.append(AsymptoticSolution(fam, k, mu, n, eps, mu_sign="+" if plus else "-", low_confidence=low))
    for k, mu, n, signs in enumerate_turning_point(eps):
        fam = TP_FAMILIES[1] if mu == 0.5 else TP_FAMILIES[0]
        x_star = kuzmak.oscillation_extent(k)
        flags = ("turning-point-in-boundary-layer",) if (1.0 - x_star) < LAYER_WIDTHS * eps else ()
        for pair in signs:
            sols.append(AsymptoticSolution(fam, k, mu, n, eps, boundary_layer_signs=pair, low_confidence=low, flags=flags))
    return sols


@dataclass(frozen=True)
class CensusSummary:
    eps: float
    symmetric: int
    nonsymmetric: int
    turning_point: int
    low_confidence: bool

    @property
    def total(self) -> int:
        return self.symmetric + self.nonsymmetric + self.turning_point


def count_solutions(eps: float) -> CensusSummary:
    sols = census(eps)
    sym = sum(s.family.startswith("sym") for s in sols)
    asym = sum(s.family.startswith("asym") for s in sols)
    tp = sum(s.family.startswith("turning") for s in sols)
    return CensusSummary(eps, sym, asym, tp, eps > LOW_CONFIDENCE_EPS)


def max_spikes(eps: float) -> int:
    """floor(2 phi(1)|_{k0} / eps): the largest number of complete periods."""
    _check_eps(eps)
    return int(np.floor(2.0 * kuzmak.phase_at_end(kuzmak.k0()) / eps))


# --------------------------------------------------------------------------
# profiles
# --------------------------------------------------------------------------


@dataclass
class BuiltProfile:
    x: np.ndarray
    y: np.ndarray
    gradient_jump: float | None = None
    x_star: float | None = None


def _kuzmak_part(sol: AsymptoticSolution, eps: float, x: np.ndarray) -> np.ndarray:
    A = kuzmak.amplitude_from_k(np.full(x.shape, sol.k), x)
    phi = kuzmak.phase_table(sol.k, x)
    return kuzmak.profile_from_amplitude(phi / eps + sol.mu, x, A)


def build_profile(sol: AsymptoticSolution, eps: float, grid: Grid) -> BuiltProfile:
    """Sample the leading-order profile of ``sol`` on ``grid``.

    Full-domain families use Y(phi(x)/eps + mu, x).  Turning-point families
    use the oscillation on |x| <= x* and the outer solution plus the chosen
    boundary layers outside; the jump in the one-sided slopes at x* is
    reported because the matching there holds only at leading order.
    """
    x = grid.nodes
    if not sol.family.startswith("turning"):
        y = _kuzmak_part(sol, eps, x)
        return BuiltProfile(x, y)
    x_star = kuzmak.oscillation_extent(sol.k)
    inner = np.abs(x) <= x_star
    y = np.empty_like(x)
    y[inner] = _kuzmak_part(sol, eps, x[inner])
    left, right = sol.boundary_layer_signs
    xo = x[~inner]
    y[~inner] = outer_solution(xo) + boundary_layer(xo, "left", left, eps) + boundary_layer(xo, "right", right, eps)
    # one-sided slopes at x*: inner from the oscillation, outer from the closed forms
    h = 1e-6 * max(eps, 1e-3)
    inner_pts = np.array([x_star - 2 * h, x_star - h, x_star])
    yi = _kuzmak_part(sol, eps, inner_pts)
    slope_in = (3 * yi[2] - 4 * yi[1] + yi[0]) / (2 * h)
    outer_pts = np.array([x_star, x_star + h, x_star + 2 * h])
    yo = outer_solution(outer_pts) + boundary_layer(outer_pts, "left", left, eps) + boundary_layer(
        outer_pts, "right", right, eps
    )
    slope_out = (-3 * yo[0] + 4 * yo[1] - yo[2]) / (2 * h)
    return BuiltProfile(x, y, float(abs(slope_in - slope_out)), float(x_star))

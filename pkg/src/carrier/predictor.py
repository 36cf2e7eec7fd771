"""Fold and pitchfork positions predicted by the asymptotic boundary conditions."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import kuzmak
from .enumerator import _full_domain_table, _hand_off_dip
from .errors import NoSolutionError


@dataclass(frozen=True)
class PredictedBifurcation:
    kind: str
    n: int
    eps_exact: float | None
    eps_asym: float
    k_at_bif: float | None


@dataclass(frozen=True)
class AsymptoticConstants:
    """Constants of the small-eps expansions, all computed at k = k0."""

    two_phi_k0: float
    dphi_dk_k0: float
    a: float
    fold_shift: float
    gap_coeff: float
    proportion_coeff: float
    two_phi_k1: float


def x0_squared_slope() -> float:
    """a = d(X0^2)/dk at k0.

    Near k0 the boundary amplitude is A(1) ~ 2 Phi (k - k0) and the boundary
    zero sits at X0 ~ Phi sqrt(A(1)), so X0^2 ~ 2 Phi^3 (k - k0) with
    Phi = Phi(0, 1).
    """
    return 2.0 * float(kuzmak.period_function(0.0, 1.0)) ** 3


@lru_cache(maxsize=None)
def constants() -> AsymptoticConstants:
    k0 = kuzmak.k0()
    phi0 = kuzmak.phase_at_end(k0)
    dphi = kuzmak.central_derivative(kuzmak.phase_at_end, k0)
    a = x0_squared_slope()
    shift = -a * phi0 / dphi
    K = 2.0 * phi0
    return AsymptoticConstants(
        two_phi_k0=K,
        dphi_dk_k0=dphi,
        a=a,
        fold_shift=shift,
        gap_coeff=K * shift,
        proportion_coeff=shift / K**2,
        two_phi_k1=2.0 * kuzmak.phase_at_end(kuzmak.k1()),
    )


def predict_pitchfork(n: int) -> PredictedBifurcation:
    """Pitchfork of component n: X0 = 0 (k = k0) and 2 phi(1)/eps = n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    eps = constants().two_phi_k0 / n
    return PredictedBifurcation("pitchfork", n, eps, eps, kuzmak.k0())


def fold_asymptotic(n: int) -> float:
    c = constants()
    return c.two_phi_k0 / (n - c.fold_shift / n)


def _tangency_level(eps: float):
    """Interior maximum over k of 2 phi(1)/eps + 2 X0 near the nose, or None.

    Returns (k, value).  The maximum is searched on the tabulated k-grid up
    to the dip that precedes the hand-off at k1; if the curve only rises
    there is no tangency.
    """
    ks, two_phi, two_x0 = _full_domain_table()
    vals = two_phi / eps + two_x0
    stop = _hand_off_dip(ks, vals)
    stop = vals.size - 1 if stop is None else stop
    i = int(np.argmax(vals[: stop + 1]))
    if i == 0 or i >= stop:
        return None

    def neg(k):
        return -(2.0 * kuzmak.phase_at_end(k) / eps + 2.0 * kuzmak.boundary_offset_X0(k))

    res = minimize_scalar(neg, bounds=(float(ks[i - 1]), float(ks[i + 1])), method="bounded", options={"xatol": 1e-12})
    return float(res.x), -float(res.fun)


def predict_fold(n: int) -> PredictedBifurcation:
    """Fold of component n from the tangency conditions.

    The two conditions (1/eps) dphi(1)/dk = -dX0/dk and
    2 phi(1)/eps = n - 2 X0 say that n is the interior maximum over k of
    2 phi(1)/eps + 2 X0; that scalar condition is solved for eps by a
    bracketed root search.  ``eps_exact`` is None when no tangency exists
    for this n.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    eps_asym = fold_asymptotic(n)
    try:
        eps, k = fold_exact(n, eps_asym)
    except NoSolutionError:
        eps, k = None, None
    return PredictedBifurcation("fold", n, eps, eps_asym, k)


def fold_exact(n: int, eps_guess: float) -> tuple[float, float]:
    def level(eps):
        t = _tangency_level(eps)
        if t is None:
            raise NoSolutionError(f"no tangency at eps = {eps!r}")
        return t[1] - n

    lo, hi = 0.97 * eps_guess, 1.03 * eps_guess
    try:
        flo, fhi = level(lo), level(hi)
    except NoSolutionError as exc:
        raise NoSolutionError(f"no tangency point for n = {n}") from exc
    for _ in range(20):
        if flo * fhi < 0:
            break
        lo, hi = lo * 0.97, hi * 1.03
        try:
            flo, fhi = level(lo), level(hi)
        except NoSolutionError as exc:
            raise NoSolutionError(f"no tangency point for n = {n}") from exc
    else:
        raise NoSolutionError(f"no tangency point for n = {n}")
    eps = brentq(level, lo, hi, xtol=1e-13, rtol=1e-12)
    return float(eps), _tangency_level(eps)[0]


def gap_and_proportion(n: int) -> tuple[float, float]:
    """Asymptotic fold-pitchfork gap of component n and the proportion coefficient.

    The gap is eps_fold - eps_pitchfork from the closed forms.  Relative to
    eps it shrinks like C eps^2; the returned coefficient is
    gap / eps_pitchfork^3, which tends to C as n grows.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    gap = fold_asymptotic(n) - predict_pitchfork(n).eps_asym
    eps = predict_pitchfork(n).eps_asym
    return gap, gap / eps**3


def pitchfork_table(ns) -> list[PredictedBifurcation]:
    return [predict_pitchfork(int(n)) for n in ns]


def fold_table(ns) -> list[PredictedBifurcation]:
    return [predict_fold(int(n)) for n in ns]

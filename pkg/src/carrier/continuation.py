"""Deflated continuation in eps^2 and pseudo-arclength branch tracing."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import bmat, csc_matrix
from scipy.sparse.linalg import splu

from .deflation import DeflationSet, deflated_newton
from .errors import ConfigError
from .model import (
    Grid,
    State,
    count_interior_maxima,
    distance,
    eigenpairs_near_zero,
    eigenvector_parity,
    jacobian,
    newton_solve,
    parameter_derivative,
    positive_eigenvalue_count,
    residual,
    rounding_floor,
    sup_norm,
    symmetry_class,
)

log = logging.getLogger(__name__)

DEDUPE_TOL = 1e-4
SUBSTEPS = (4, 16)
PARTNER_AMPLITUDES = (1.0, -1.0, 3.0, -3.0)


@dataclass(frozen=True)
class SweepConfig:
    eps_sq_start: float = 0.5
    eps_sq_end: float = 0.0025
    step: float = 1e-4
    n_nodes: int = 2001
    power: float = 2.0
    shift: float = 1.0
    norm: str = "h1"
    tol: float = 1e-10
    max_iter: int = 50
    deflated_max_iter: int = 100
    extra_failures: int = 4
    max_solutions: int = 200
    store_every: int = 100
    seeds: tuple = (1.0, 0.0)
    perturbation: float = 1e-2

    def __post_init__(self):
        if not (self.eps_sq_start >= self.eps_sq_end > 0):
            raise ConfigError("need eps_sq_start >= eps_sq_end > 0")
        if not self.perturbation >= 0:
            raise ConfigError("perturbation must be non-negative")
        if not self.step > 0:
            raise ConfigError("step must be positive")
        if self.n_nodes < 3 or self.n_nodes % 2 == 0:
            raise ConfigError("n_nodes must be odd and >= 3")
        if self.norm not in ("h1", "l2"):
            raise ConfigError("norm must be h1 or l2")
        if not self.power > 0 or not self.shift >= 0:
            raise ConfigError("deflation power must be positive and shift non-negative")
        if self.tol <= 0 or self.max_iter < 1 or self.deflated_max_iter < 1:
            raise ConfigError("invalid solver tolerances")

    def schedule(self) -> np.ndarray:
        """Decreasing eps^2 values from start to end, both included."""
        span = self.eps_sq_start - self.eps_sq_end
        count = int(np.floor(span / self.step + 1e-9))
        values = self.eps_sq_start - self.step * np.arange(count + 1)
        if values[-1] > self.eps_sq_end * (1 + 1e-12) and span > 0:
            values = np.append(values, self.eps_sq_end)
        return values


@dataclass
class BifurcationEvent:
    """A fold or pitchfork bracketed between two computed points."""

    kind: str
    eps_estimate: float
    bracket: tuple
    branch_id: int | None = None
    component: int | None = None

    @property
    def eps_sq_bracket(self) -> tuple[float, float]:
        a, b = self.bracket
        return (a[0], b[0])


@dataclass
class Branch:
    """A traced curve of solutions."""

    id: int
    points: list = field(default_factory=list)
    M: int | None = None
    symmetry: str | None = None
    component: int | None = None
    events: list = field(default_factory=list)
    terminated_at: float | None = None
    tangents: list = field(default_factory=list)
    sturm: list = field(default_factory=list)

    def append(self, eps_sq: float, state: State | None):
        self.points.append((float(eps_sq), state))

    @property
    def eps_sq(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def last(self) -> State:
        for _, s in reversed(self.points):
            if s is not None:
                return s
        raise ValueError("branch holds no stored state")


@dataclass
class StepRecord:
    eps_sq: float
    solutions: list
    new_ids: list


@dataclass
class SweepResult:
    config: SweepConfig
    counts: list
    branches: dict
    events: list
    final: list

    def count_at(self, eps_sq: float) -> int:
        eps = np.array([c[0] for c in self.counts])
        i = int(np.argmin(np.abs(eps - eps_sq)))
        return self.counts[i][1]


def _extrapolate(prev: State, older: State | None, eps_sq: float) -> State:
    if older is None or older.eps_sq == prev.eps_sq:
        return prev.at(eps_sq)
    t = (eps_sq - prev.eps_sq) / (prev.eps_sq - older.eps_sq)
    y = prev.values + t * (prev.values - older.values)
    y[0] = y[-1] = 0.0
    return State(prev.grid, y, eps_sq)


def _march(prev: State, older: State | None, eps_sq: float, pieces: int, tol: float, max_iter: int) -> State | None:
    """Continue ``prev`` to ``eps_sq`` through ``pieces`` equal sub-steps."""
    cur, old = prev, older
    for target in np.linspace(prev.eps_sq, eps_sq, pieces + 1)[1:]:
        sol, rep = newton_solve(_extrapolate(cur, old, float(target)), tol, max_iter)
        if not rep.converged:
            return None
        old, cur = cur, sol
    return cur


def _partner_starts(sol: State) -> list:
    """Starts displaced along the symmetric mode nearest zero, where a fold partner lies."""
    vals, vecs = eigenpairs_near_zero(sol, count=2)
    sym = [j for j in np.argsort(np.abs(vals)) if eigenvector_parity(vecs[:, j]) == "symmetric"]
    if not sym:
        return []
    v = vecs[:, sym[0]] / np.abs(vecs[:, sym[0]]).max()
    return [sol.values + a * v for a in PARTNER_AMPLITUDES]


def _is_new(state: State, found: list, norm: str) -> bool:
    return all(distance(state, s, norm) >= DEDUPE_TOL for s in found)


def _pitchfork_check(prev: State, cur: State, count_prev: int, count_cur: int) -> bool:
    """True when a Sturm-count change on a symmetric branch has an antisymmetric mode."""
    if count_prev == count_cur:
        return False
    if symmetry_class(prev) != "symmetric" or symmetry_class(cur) != "symmetric":
        return False
    _, vecs = eigenpairs_near_zero(cur, count=1)
    return eigenvector_parity(vecs[:, 0]) == "antisymmetric"


def deflated_sweep(config: SweepConfig, journal=None, seeds=None) -> SweepResult:
    """Deflated continuation from eps_sq_start down to eps_sq_end.

    At each parameter value every live solution is continued by Newton from
    its extrapolated previous value (deflating the solutions already
    continued at this step), then deflated Newton is restarted from every
    previous solution, from the constant seeds and from starts derived from
    new finds, each until it fails, while the failure budget lasts.  ``journal(eps_sq, branch_id, state, new)`` is called for
    every stored solution.
    """
    grid = Grid(config.n_nodes)
    schedule = config.schedule()
    if seeds is None:
        seeds = config.seeds
    seed_values = [np.array(s.values) if isinstance(s, State) else np.full(grid.n_nodes, float(s)) for s in seeds]
    for v in seed_values:
        v[0] = v[-1] = 0.0
    antisym = np.sin(np.pi * grid.nodes)
    antisym[0] = antisym[-1] = 0.0

    branches: dict[int, Branch] = {}
    events: list[BifurcationEvent] = []
    counts: list[tuple[float, int]] = []
    live: dict[int, tuple[State, State | None]] = {}
    sturm: dict[int, int] = {}
    next_id = 0

    def empty_set():
        return DeflationSet((), config.power, config.shift, config.norm)

    for step_index, eps_sq in enumerate(schedule):
        eps_sq = float(eps_sq)
        dset = empty_set()
        found: list[tuple[int, State]] = []

        # continuation of live branches
        failed: list[int] = []
        for bid in sorted(live):
            prev, older = live[bid]
            guesses = [_extrapolate(prev, older, eps_sq)]
            if older is not None:
                guesses.append(prev.at(eps_sq))
            for guess in guesses:
                sol, rep = deflated_newton(guess, dset, config.tol, config.max_iter, stall_window=None)
                if rep.converged and _is_new(sol, dset.known, config.norm):
                    dset = dset.with_solution(sol)
                    found.append((bid, sol))
                    break
            else:
                # steep branches need shorter steps
                for pieces in SUBSTEPS:
                    end = _march(prev, older, eps_sq, pieces, config.tol, config.max_iter)
                    if end is None:
                        continue
                    sol, rep = deflated_newton(end, dset, config.tol, config.max_iter, stall_window=None)
                    if rep.converged and _is_new(sol, dset.known, config.norm):
                        dset = dset.with_solution(sol)
                        found.append((bid, sol))
                        break
                else:
                    failed.append(bid)

        # deflated search from previous solutions, constant seeds and new finds
        continued = len(found)
        queue = [live[bid][0].values for bid in failed]
        for _, (s, _) in sorted(live.items()):
            queue.append(s.values)
            if symmetry_class(s) == "symmetric":
                queue.append(s.values + config.perturbation * antisym)
        queue += seed_values
        failures = 0
        # every queued start gets one attempt, plus a few spare failures
        budget = len(queue) + config.extra_failures
        qi = 0
        while qi < len(queue) and failures <= budget and len(found) < config.max_solutions:
            guess = State(grid, queue[qi], eps_sq)
            qi += 1
            while failures <= budget and len(found) < config.max_solutions:
                sol, rep = deflated_newton(guess, dset, config.tol, config.deflated_max_iter)
                if not rep.converged or not _is_new(sol, dset.known, config.norm):
                    failures += 1
                    break
                dset = dset.with_solution(sol)
                found.append((None, sol))
                log.debug("eps^2=%.6g new solution from start %d of %d", eps_sq, qi - 1, len(queue))
                if symmetry_class(sol) == "symmetric":
                    queue.append(sol.values + config.perturbation * antisym)
                    queue += _partner_starts(sol)
                else:
                    # the mirror image of an asymmetric solution is a solution
                    queue.insert(qi, sol.values[::-1].copy())
                budget = len(queue) + config.extra_failures

        # nearest-predecessor matching relinks branches whose continuation failed
        prev_items = sorted(live.items())
        relinked = set()
        for i in range(continued, len(found)):
            sol = found[i][1]
            if failed and prev_items:
                dists = [distance(sol, p.at(eps_sq), config.norm) for _, (p, _) in prev_items]
                j = int(np.argmin(dists))
                cand = prev_items[j][0]
                if cand in failed and cand not in relinked:
                    relinked.add(cand)
                    found[i] = (cand, sol)
                    continue
            found[i] = (next_id, sol)
            next_id += 1
        for bid in failed:
            if bid in relinked:
                continue
            prev = live[bid][0]
            br = branches[bid]
            br.terminated_at = prev.eps_sq
            ev = BifurcationEvent("fold", 0.5 * (prev.eps + np.sqrt(eps_sq)), ((prev.eps_sq, prev), (eps_sq, None)), bid, br.M)
            br.events.append(ev)
            events.append(ev)

        new_ids = [bid for bid, _ in found[continued:] if bid not in relinked]
        for bid, sol in found[continued:]:
            if bid in relinked:
                continue
            br = Branch(bid, M=count_interior_maxima(sol), symmetry=symmetry_class(sol))
            br.component = br.M
            branches[bid] = br
            if step_index > 0:
                kind = "fold" if br.symmetry == "symmetric" else "pitchfork"
                prev_eps = float(schedule[step_index - 1])
                ev = BifurcationEvent(kind, 0.5 * (np.sqrt(prev_eps) + np.sqrt(eps_sq)), ((prev_eps, None), (eps_sq, sol)), bid, br.M)
                br.events.append(ev)
                events.append(ev)

        # bookkeeping, pitchfork monitoring on continued symmetric branches
        new_live = {}
        for bid, sol in found:
            br = branches[bid]
            keep = step_index % config.store_every == 0 or bid in new_ids or eps_sq == schedule[-1]
            br.append(eps_sq, sol if keep else None)
            if br.symmetry == "symmetric":
                cnt = positive_eigenvalue_count(sol)
                if bid in sturm and bid in live and _pitchfork_check(live[bid][0], sol, sturm[bid], cnt):
                    prev = live[bid][0]
                    ev = BifurcationEvent(
                        "pitchfork", 0.5 * (prev.eps + sol.eps), ((prev.eps_sq, prev), (eps_sq, sol)), bid, br.M
                    )
                    br.events.append(ev)
                    events.append(ev)
                sturm[bid] = cnt
            older = live[bid][0] if bid in live else None
            new_live[bid] = (sol, older)
            if journal is not None:
                journal(eps_sq, bid, sol, bid in new_ids)
        live = new_live
        counts.append((eps_sq, len(found)))
        log.debug("eps^2=%.6g solutions=%d new=%d", eps_sq, len(found), len(new_ids))

    final = [live[bid][0] for bid in sorted(live)]
    return SweepResult(config, counts, branches, events, final)


# --------------------------------------------------------------------------
# pseudo-arclength continuation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ArclengthConfig:
    ds: float = 0.01
    ds_min: float = 1e-6
    ds_max: float = 0.05
    max_steps: int = 2000
    eps_sq_min: float = 1e-4
    eps_sq_max: float = 1.0
    tol: float = 1e-10
    max_iter: int = 12
    track_spectrum: bool = True


def _weights(grid: Grid) -> np.ndarray:
    return grid.weights


def _tangent_norm(ty, tl, w) -> float:
    return float(np.sqrt(np.dot(w, ty * ty) + tl * tl))


def _bordered_solve(state: State, ty, tl, w, rhs_y, rhs_l):
    """Solve [[J, F_l], [w*ty^T, tl]] [dy, dl] = [rhs_y, rhs_l] with a sparse LU."""
    J = jacobian(state).tosparse()
    Fl = parameter_derivative(state)
    n = state.grid.n_nodes
    col = csc_matrix(Fl.reshape(n, 1))
    row = csc_matrix((w * ty).reshape(1, n))
    A = bmat([[J, col], [row, csc_matrix([[tl]])]], format="csc")
    sol = splu(A).solve(np.append(rhs_y, rhs_l))
    return sol[:n], float(sol[n])


def initial_tangent(state: State, direction: int):
    """Unit tangent (in the weighted norm) with d(eps^2)/ds of sign ``direction``."""
    w = _weights(state.grid)
    dy = jacobian(state).solve(-parameter_derivative(state))
    nrm = _tangent_norm(dy, 1.0, w)
    return direction * dy / nrm, direction / nrm


def arclength_continue(seed: State, direction: int, config: ArclengthConfig | None = None, branch_id: int = 0) -> Branch:
    """Pseudo-arclength continuation in (y, eps^2) from a converged ``seed``.

    Secant predictor, corrector constrained to the hyperplane orthogonal to
    the tangent through the predicted point, and step halving on corrector
    failure.  Stops at the eps^2 bounds, after ``max_steps`` or when the
    step falls below ``ds_min``.
    """
    cfg = config or ArclengthConfig()
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    br = Branch(branch_id, M=count_interior_maxima(seed), symmetry=symmetry_class(seed))
    br.component = br.M
    br.append(seed.eps_sq, seed)
    br.tangents = [initial_tangent(seed, direction)[1]]
    br.sturm = [positive_eigenvalue_count(seed)] if cfg.track_spectrum else []
    w = _weights(seed.grid)
    ty, tl = initial_tangent(seed, direction)
    cur = seed
    ds = cfg.ds
    if (tl > 0 and seed.eps_sq >= cfg.eps_sq_max) or (tl < 0 and seed.eps_sq <= cfg.eps_sq_min):
        return br
    for _ in range(cfg.max_steps):
        if not (cfg.eps_sq_min < cur.eps_sq < cfg.eps_sq_max) and len(br.points) > 1:
            break
        accepted = False
        while ds >= cfg.ds_min:
            lam_p = cur.eps_sq + ds * tl
            if lam_p <= 0:
                ds *= 0.5
                continue
            y = cur.values + ds * ty
            lam = lam_p
            y_p = y.copy()
            ok = False
            for it in range(cfg.max_iter):
                st = State(cur.grid, y, lam)
                F = residual(st)
                N = float(np.dot(w, ty * (y - y_p)) + tl * (lam - lam_p))
                if sup_norm(F) <= max(cfg.tol, rounding_floor(st)) and abs(N) <= 1e-12:
                    ok = True
                    break
                try:
                    dy, dl = _bordered_solve(st, ty, tl, w, -F, -N)
                except RuntimeError:
                    break
                y = y + dy
                lam = lam + dl
                if not (np.all(np.isfinite(y)) and lam > 0):
                    break
            if ok:
                accepted = True
                break
            ds *= 0.5
        if not accepted:
            br.terminated_at = cur.eps_sq
            break
        new = State(cur.grid, y, lam)
        sy = (new.values - cur.values) / ds
        sl = (new.eps_sq - cur.eps_sq) / ds
        nrm = _tangent_norm(sy, sl, w)
        ty, tl = sy / nrm, sl / nrm
        br.append(new.eps_sq, new)
        br.tangents.append(tl)
        if cfg.track_spectrum:
            br.sturm.append(positive_eigenvalue_count(new))
        cur = new
        if it <= 3:
            ds = min(ds * 1.5, cfg.ds_max)
        if not (cfg.eps_sq_min <= cur.eps_sq <= cfg.eps_sq_max):
            break
    return br


def _bisect_sturm(s0: State, s1: State, c0: int, width: float):
    """Shrink a bracket across which the Sturm count changes to ``width`` in eps^2."""
    while abs(s0.eps_sq - s1.eps_sq) > width:
        mid = 0.5 * (s0.eps_sq + s1.eps_sq)
        sol, rep = newton_solve(s0.at(mid))
        if not rep.converged:
            break
        if positive_eigenvalue_count(sol) == c0:
            s0 = sol
        else:
            s1 = sol
    return s0, s1


def detect_events(branch: Branch, bracket_width: float | None = 1e-4) -> list[BifurcationEvent]:
    """Folds from sign changes of d(eps^2)/ds, pitchforks from Sturm-count changes.

    A change in the number of positive eigenvalues between consecutive
    symmetric points counts as a pitchfork when the eigenvector nearest
    zero is antisymmetric; symmetric crossings coincide with folds.
    Pitchfork brackets are narrowed by bisection to ``bracket_width`` in
    eps^2 unless that is None.
    """
    pts = branch.points
    if len(pts) < 3:
        return []
    events = []
    tangents = branch.tangents
    if len(tangents) != len(pts):
        lam = np.array([p[0] for p in pts])
        tangents = np.gradient(lam)
    sturm = branch.sturm
    if len(sturm) != len(pts):
        sturm = [positive_eigenvalue_count(s) for _, s in pts]
    for i in range(1, len(pts)):
        (l0, s0), (l1, s1) = pts[i - 1], pts[i]
        if np.sign(tangents[i]) != np.sign(tangents[i - 1]) and tangents[i] != 0 and tangents[i - 1] != 0:
            # the fold lies near the parameter extreme of the bracketing triple
            lams = [pts[j][0] for j in range(max(i - 1, 0), min(i + 2, len(pts)))]
            ext = max(lams) if tangents[i - 1] > 0 else min(lams)
            events.append(BifurcationEvent("fold", float(np.sqrt(ext)), ((l0, s0), (l1, s1)), branch.id, branch.component))
        if sturm[i] != sturm[i - 1] and _pitchfork_check(s0, s1, sturm[i - 1], sturm[i]):
            if bracket_width is not None:
                s0, s1 = _bisect_sturm(s0, s1, sturm[i - 1], bracket_width)
                l0, l1 = s0.eps_sq, s1.eps_sq
            events.append(
                BifurcationEvent("pitchfork", 0.5 * (np.sqrt(l0) + np.sqrt(l1)), ((l0, s0), (l1, s1)), branch.id, branch.component)
            )
    branch.events = events
    return events

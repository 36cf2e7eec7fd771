"""Command-line entry point.

Exit status is 0 on success, 1 when a solver fails and 2 for invalid
configuration or input files.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import CarrierError, ConfigError, CorruptRecordError
from .io import FUNCTIONALS, Database, RunConfig, SolutionRecord, functionals, write_diagram
from .model import Grid, State, newton_solve

log = logging.getLogger("carrier")

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2


class _UsageError(ConfigError):
    pass


def parse_range(text: str) -> list[int]:
    """'1..4' -> [1, 2, 3, 4]; '2,5' -> [2, 5]."""
    out = []
    try:
        for part in text.split(","):
            if ".." in part:
                a, b = part.split("..")
                out.extend(range(int(a), int(b) + 1))
            elif part.strip():
                out.append(int(part))
    except ValueError as exc:
        raise _UsageError(f"cannot parse range {text!r}") from exc
    if not out:
        raise _UsageError("empty range")
    return out


def _load_config(args) -> RunConfig:
    base = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {}
    for name in ("n_nodes", "eps_sq_start", "eps_sq_end", "step", "extra_failures", "database"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if not overrides:
        return base
    data = {k: getattr(base, k) for k in base.__dataclass_fields__}
    data.update(overrides)
    return RunConfig.from_mapping(data)


def _open_output(path):
    if path is None or path == "-":
        return sys.stdout, False
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return open(p, "w", newline=""), True


def _events_path(db_path) -> Path:
    p = Path(db_path)
    return p.with_name(p.name + ".events.jsonl")


# --------------------------------------------------------------------------
# subcommands


def cmd_sweep(args) -> int:
    from .continuation import deflated_sweep

    cfg = _load_config(args)
    sweep_cfg = cfg.sweep_config()
    db = Database(cfg.database)
    run = db.start_run({"command": "sweep"})
    result = deflated_sweep(sweep_cfg)
    records = []
    for bid in sorted(result.branches):
        br = result.branches[bid]
        for _, st in br.points:
            if st is not None:
                records.append(SolutionRecord.from_state(st, bid, component=br.component, family=f"{br.symmetry}"))
    db.append(records)
    with open(_events_path(cfg.database), "a") as fh:
        for ev in result.events:
            (la, sa), (lb, sb) = ev.bracket
            st = sa if sa is not None else sb
            fh.write(
                json.dumps(
                    {
                        "run": run,
                        "kind": ev.kind,
                        "eps_estimate": float(ev.eps_estimate),
                        "eps_sq_bracket": [float(la), float(lb)],
                        "branch_id": ev.branch_id,
                        "component": ev.component,
                        "state_eps_sq": float(st.eps_sq) if st is not None else None,
                        "profile": db.write_profile(st.values) if st is not None else None,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    first, last = result.counts[0], result.counts[-1]
    print(f"eps_sq={first[0]:.6g} solutions={first[1]}")
    print(f"eps_sq={last[0]:.6g} solutions={last[1]}")
    for ev in result.events:
        print(f"{ev.kind:9s} component={ev.component} eps~{ev.eps_estimate:.6f} eps_sq in [{ev.eps_sq_bracket[1]:.6g}, {ev.eps_sq_bracket[0]:.6g}]")
    return EXIT_OK


def _record_state(db: Database, index: int) -> tuple[SolutionRecord, State]:
    records = db.read()
    if not records:
        raise _UsageError(f"database {db.path} holds no records")
    if not -len(records) <= index < len(records):
        raise _UsageError(f"record index {index} out of range ({len(records)} records)")
    rec = records[index]
    if rec.profile is None:
        raise _UsageError(f"record {index} carries no profile")
    return rec, State(Grid(rec.profile.size), rec.profile, rec.eps_sq)


def cmd_branch(args) -> int:
    from .continuation import ArclengthConfig, arclength_continue, detect_events

    cfg = _load_config(args)
    db = Database(cfg.database)
    rec, st = _record_state(db, args.record)
    st, rep = newton_solve(st, cfg.tol, cfg.max_iter)
    if not rep.converged:
        raise CarrierError(f"record {args.record} does not re-converge (residual {rep.residual:.3g})")
    acfg = ArclengthConfig(ds=cfg.ds, ds_max=cfg.ds_max, max_steps=args.max_steps or cfg.max_steps, tol=cfg.tol)
    br = arclength_continue(st, args.direction, acfg, branch_id=rec.branch_id)
    events = detect_events(br)
    fh, close = _open_output(args.out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("eps_sq",) + FUNCTIONALS)
        for lam, s in br.points:
            f = functionals(s.values, s.grid)
            w.writerow(["%.17g" % lam] + ["%.17g" % f[k] for k in FUNCTIONALS])
    finally:
        if close:
            fh.close()
    for ev in events:
        print(f"{ev.kind:9s} eps~{ev.eps_estimate:.6f} eps_sq in [{ev.eps_sq_bracket[0]:.6g}, {ev.eps_sq_bracket[1]:.6g}]", file=sys.stderr)
    if args.append:
        db.start_run({"command": "branch"})
        db.append(SolutionRecord.from_state(s, rec.branch_id, component=rec.component, family="arclength") for _, s in br.points)
    return EXIT_OK


def _load_events(path, db: Database):
    from .continuation import BifurcationEvent

    p = Path(path)
    if not p.exists():
        raise _UsageError(f"no events file {p}")
    out = []
    for i, line in enumerate(p.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorruptRecordError(f"not valid JSON: {exc.msg}", i) from exc
        if obj.get("profile") is None:
            continue
        values = db.read_profile(obj["profile"], i)
        st = State(Grid(values.size), values, obj["state_eps_sq"])
        la, lb = obj["eps_sq_bracket"]
        bracket = ((la, st if la == st.eps_sq else None), (lb, st if lb == st.eps_sq else None))
        out.append(BifurcationEvent(obj["kind"], obj["eps_estimate"], bracket, obj.get("branch_id"), obj.get("component")))
    return out


def cmd_locate(args) -> int:
    from .moore import locate

    cfg = _load_config(args)
    db = Database(cfg.database)
    events = _load_events(args.events or _events_path(cfg.database), db)
    if args.kind:
        events = [e for e in events if e.kind == args.kind]
    if args.component:
        wanted = set(parse_range(args.component))
        events = [e for e in events if e.component in wanted]
    grids = tuple(parse_range(args.grids)) if args.grids else cfg.grids
    ok = True
    fh, close = _open_output(args.out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "component", "eps", "error_estimate", "converged"] + [f"eps_{n}" for n in grids])
        for ev in events:
            res = locate(ev, grids, cfg.tol)
            ok = ok and res.converged
            w.writerow([res.kind, ev.component, "%.10f" % res.eps, "%.3e" % res.error_estimate, int(res.converged)] + ["%.10f" % e for _, e in res.per_grid])
    finally:
        if close:
            fh.close()
    if not ok:
        print("locate: Newton on the augmented system did not converge for every event", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_predict(args) -> int:
    from .predictor import fold_table, pitchfork_table

    ns = parse_range(args.n)
    kinds = ["pitchfork", "fold"] if args.kind == "both" else [args.kind]
    fh, close = _open_output(args.out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "n", "eps_asymptotic", "eps_exact", "k"])
        for kind in kinds:
            if kind == "fold" and min(ns) < 2:
                raise _UsageError("fold predictions need n >= 2")
            rows = pitchfork_table(ns) if kind == "pitchfork" else fold_table(ns)
            for p in rows:
                exact = "" if p.eps_exact is None else "%.8f" % p.eps_exact
                k = "" if p.k_at_bif is None else "%.8f" % p.k_at_bif
                w.writerow([p.kind, p.n, "%.8f" % p.eps_asym, exact, k])
    finally:
        if close:
            fh.close()
    return EXIT_OK


def cmd_enumerate(args) -> int:
    from .enumerator import census, count_solutions, max_spikes

    summary = count_solutions(args.eps)
    print(f"eps={args.eps:g}")
    print(f"symmetric      {summary.symmetric}")
    print(f"non-symmetric  {summary.nonsymmetric}")
    print(f"turning-point  {summary.turning_point}")
    print(f"total          {summary.total}")
    print(f"max spikes     {max_spikes(args.eps)}")
    if summary.low_confidence:
        print("warning: eps is outside the small-eps regime; counts are low confidence", file=sys.stderr)
    if args.list:
        for j, s in enumerate(census(args.eps)):
            signs = "" if s.boundary_layer_signs is None else "".join(s.boundary_layer_signs)
            print(f"{j:4d} {s.family:24s} k={s.k:.8f} mu={s.mu:.6f} n={s.n:g} {s.mu_sign or ''}{signs}")
    return EXIT_OK


def cmd_profile(args) -> int:
    from .enumerator import build_profile, census, large_eps_profiles

    cfg = _load_config(args)
    if args.record is not None:
        _, st = _record_state(Database(cfg.database), args.record)
        x, y = st.x, st.values
    else:
        if args.eps is None:
            raise _UsageError("profile needs --record or --eps")
        grid = Grid(cfg.n_nodes)
        if args.large:
            x, y = grid.nodes, large_eps_profiles(args.eps, args.large, grid.nodes)
        else:
            sols = census(args.eps)
            if not sols:
                raise _UsageError(f"no asymptotic solutions at eps = {args.eps}")
            if not 0 <= args.index < len(sols):
                raise _UsageError(f"index {args.index} out of range ({len(sols)} solutions)")
            built = build_profile(sols[args.index], args.eps, grid)
            x, y = built.x, built.y
    fh, close = _open_output(args.out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y"])
        for a, b in zip(np.asarray(x), np.asarray(y)):
            w.writerow(["%.17g" % a, "%.17g" % b])
    finally:
        if close:
            fh.close()
    return EXIT_OK


def cmd_diagram(args) -> int:
    cfg = _load_config(args)
    names = tuple(args.functionals.split(",")) if args.functionals else FUNCTIONALS
    bad = [n for n in names if n not in FUNCTIONALS]
    if bad:
        raise _UsageError(f"unknown functionals {bad}; choose from {FUNCTIONALS}")
    records = Database(cfg.database).read()
    text = write_diagram(records, None, names)
    fh, close = _open_output(args.out)
    try:
        fh.write(text)
    finally:
        if close:
            fh.close()
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="carrier", description="Solutions and bifurcations of eps^2 y'' + 2(1 - x^2) y + y^2 = 1, y(+-1) = 0.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more log output on standard error")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON run configuration")
    common.add_argument("--database", help="solution database (JSON lines)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", parents=[common], help="deflated continuation into the database")
    p.add_argument("--eps-sq-start", dest="eps_sq_start", type=float)
    p.add_argument("--eps-sq-end", dest="eps_sq_end", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--n-nodes", dest="n_nodes", type=int)
    p.add_argument("--extra-failures", dest="extra_failures", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("branch", parents=[common], help="pseudo-arclength continuation from a record")
    p.add_argument("--record", type=int, required=True, help="record index in the database")
    p.add_argument("--direction", type=int, choices=(-1, 1), default=1, help="initial sign of d(eps^2)/ds")
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--append", action="store_true", help="append the traced points to the database")
    p.add_argument("--out", help="branch CSV (default standard output)")
    p.set_defaults(func=cmd_branch)

    p = sub.add_parser("locate", parents=[common], help="refine sweep events with the augmented system")
    p.add_argument("--events", help="events file written by sweep")
    p.add_argument("--kind", choices=("fold", "pitchfork"))
    p.add_argument("--component", help="component numbers, e.g. 1..4")
    p.add_argument("--grids", help="grid sizes, e.g. 2001,4001,8001")
    p.add_argument("--out", help="table CSV (default standard output)")
    p.set_defaults(func=cmd_locate)

    p = sub.add_parser("predict", help="asymptotic fold and pitchfork positions")
    p.add_argument("--kind", choices=("pitchfork", "fold", "both"), default="both")
    p.add_argument("--n", default="1..4", help="component numbers, e.g. 1..4")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("enumerate", help="asymptotic census at one eps")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--list", action="store_true", help="list every solution")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("profile", parents=[common], help="sampled profile of a record or an asymptotic solution")
    p.add_argument("--record", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--index", type=int, default=0, help="census index (see enumerate --list)")
    p.add_argument("--large", choices=("small", "large"), help="large-eps branch instead of the census")
    p.add_argument("--n-nodes", dest="n_nodes", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("diagram", parents=[common], help="database to bifurcation-diagram CSV")
    p.add_argument("--functionals", help=f"comma-separated subset of {','.join(FUNCTIONALS)}")
    p.add_argument("--out")
    p.set_defaults(func=cmd_diagram)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, CorruptRecordError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CarrierError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

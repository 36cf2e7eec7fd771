"""Run configuration, the solution database and diagram export.

The database is a line-delimited JSON journal.  Every run appends one
header line carrying its run id and timestamp, followed by one line per
record.  Records never mention the run id; they are attached to the most
recent header, so the record lines of two identical runs are byte-identical.
Nodal profiles live in a sidecar directory as text files with 17
significant digits, named after the hash of their content.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io as _io
import json
import logging
import os
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, CorruptRecordError
from .model import Grid, State, count_interior_maxima, norms, symmetry_class

log = logging.getLogger(__name__)

FUNCTIONALS = ("sup", "h1", "y_mid", "dy_left")
SOURCES = ("numeric", "asymptotic")
SYMMETRIES = ("symmetric", "asymmetric")
CSV_HEADER = ("eps_sq", "functional_name", "value", "branch_id", "component", "M", "symmetry", "source")
FUNCTIONAL_RTOL = 1e-12


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class RunConfig:
    """Every tunable parameter of a run; loaded from YAML or JSON."""

    n_nodes: int = 2001
    eps_sq_start: float = 0.5
    eps_sq_end: float = 0.0025
    step: float = 1e-4
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
    ds: float = 0.01
    ds_max: float = 0.05
    max_steps: int = 2000
    grids: tuple = (2001, 4001, 8001)
    database: str = "solutions.jsonl"
    output: str = "out"

    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            default = f.default
            if isinstance(default, tuple):
                if not isinstance(value, (list, tuple)):
                    raise ConfigError(f"{f.name} must be a list")
                object.__setattr__(self, f.name, tuple(value))
            elif isinstance(default, bool) or isinstance(value, bool):
                raise ConfigError(f"{f.name} has the wrong type")
            elif isinstance(default, int):
                if not isinstance(value, int):
                    raise ConfigError(f"{f.name} must be an integer")
            elif isinstance(default, float):
                if not isinstance(value, (int, float)):
                    raise ConfigError(f"{f.name} must be a number")
                object.__setattr__(self, f.name, float(value))
            elif isinstance(default, str) and not isinstance(value, str):
                raise ConfigError(f"{f.name} must be a string")
        if self.n_nodes < 3:
            raise ConfigError("n_nodes must be at least 3")
        if self.norm not in ("h1", "l2"):
            raise ConfigError("norm must be 'h1' or 'l2'")
        if not (self.power > 0 and self.shift >= 0 and self.tol > 0 and self.step > 0):
            raise ConfigError("power, tol and step must be positive and shift non-negative")

    @classmethod
    def from_mapping(cls, data) -> "RunConfig":
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a mapping")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(map(str, unknown))}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse configuration {path}: {exc}") from exc
        return cls.from_mapping(data)

    def sweep_config(self):
        from .continuation import SweepConfig

        try:
            return SweepConfig(
                eps_sq_start=self.eps_sq_start,
                eps_sq_end=self.eps_sq_end,
                step=self.step,
                n_nodes=self.n_nodes,
                power=self.power,
                shift=self.shift,
                norm=self.norm,
                tol=self.tol,
                max_iter=self.max_iter,
                deflated_max_iter=self.deflated_max_iter,
                extra_failures=self.extra_failures,
                max_solutions=self.max_solutions,
                store_every=self.store_every,
                seeds=self.seeds,
                perturbation=self.perturbation,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


# --------------------------------------------------------------------------
# records


def functionals(values, grid: Grid | None = None) -> dict:
    """Sup norm, H1 norm, midpoint value and left-end slope of a nodal profile."""
    y = np.asarray(values, dtype=float)
    grid = grid if grid is not None else Grid(y.size)
    _, h1, sup = norms(y, grid)
    h = grid.h
    dy = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * h)
    return {"sup": sup, "h1": h1, "y_mid": float(y[y.size // 2]), "dy_left": float(dy)}


@dataclass
class SolutionRecord:
    eps_sq: float
    source: str
    branch_id: int
    component: int
    M: int
    symmetry: str
    family: str
    functionals: dict
    profile: np.ndarray | None = field(default=None, compare=False)
    run: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}")
        missing = [k for k in FUNCTIONALS if k not in self.functionals]
        if missing:
            raise ValueError(f"missing functionals: {missing}")

    @classmethod
    def from_state(cls, state: State, branch_id: int, component: int | None = None, family: str = "", source: str = "numeric", keep_profile: bool = True) -> "SolutionRecord":
        M = count_interior_maxima(state)
        return cls(
            eps_sq=float(state.eps_sq),
            source=source,
            branch_id=int(branch_id),
            component=int(M if component is None else component),
            M=int(M),
            symmetry=symmetry_class(state),
            family=family,
            functionals=functionals(state.values, state.grid),
            profile=np.array(state.values) if keep_profile else None,
        )

    @property
    def qualified_branch_id(self) -> str:
        return f"{self.run}:{self.branch_id}"

    def check_profile(self, line_number: int | None = None):
        if self.profile is None:
            return
        ref = functionals(self.profile)
        for k in FUNCTIONALS:
            a, b = float(self.functionals[k]), ref[k]
            if abs(a - b) > FUNCTIONAL_RTOL * max(1.0, abs(b)):
                raise CorruptRecordError(f"functional {k} = {a!r} disagrees with the stored profile ({b!r})", line_number)

    def same_as(self, other: "SolutionRecord") -> bool:
        if self != other:
            return False
        if (self.profile is None) != (other.profile is None):
            return False
        return self.profile is None or np.array_equal(self.profile, other.profile)


def profile_text(values) -> str:
    return "".join("%.17g\n" % v for v in np.asarray(values, dtype=float))


def profile_key(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:24]


# --------------------------------------------------------------------------
# database


class Database:
    """Append-only journal of solution records with profile sidecars."""

    def __init__(self, path):
        self.path = Path(path)
        self.profile_dir = self.path.with_name(self.path.name + ".profiles")

    def start_run(self, meta: dict | None = None) -> int:
        """Append a header line and return the run ordinal."""
        run = sum(1 for _ in self._headers())
        header = {"header": {"run": run, "run_id": uuid.uuid4().hex, "created": time.strftime("%Y-%m-%dT%H:%M:%S"), **(meta or {})}}
        self._append_lines([json.dumps(header, sort_keys=True)])
        return run

    def append(self, records):
        lines = []
        for rec in records:
            obj = {
                "eps_sq": rec.eps_sq,
                "source": rec.source,
                "branch_id": rec.branch_id,
                "component": rec.component,
                "M": rec.M,
                "symmetry": rec.symmetry,
                "family": rec.family,
                "functionals": {k: float(rec.functionals[k]) for k in FUNCTIONALS},
                "profile": None,
            }
            if rec.profile is not None:
                obj["profile"] = self.write_profile(rec.profile)
            lines.append(json.dumps(obj, sort_keys=True))
        if not any(True for _ in self._headers()):
            self.start_run()
        self._append_lines(lines)

    def write_profile(self, values) -> str:
        """Store a nodal profile in the sidecar directory and return its key."""
        text = profile_text(values)
        key = profile_key(text)
        self.profile_dir.mkdir(parents=True, exist_ok=True)
        target = self.profile_dir / f"{key}.txt"
        if not target.exists():
            target.write_text(text)
        return key

    def _append_lines(self, lines):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a") as fh:
            for line in lines:
                fh.write(line + "\n")

    def _lines(self):
        """Yield (line_number, text) for complete lines; warn on a partial tail."""
        if not self.path.exists():
            return
        with open(self.path) as fh:
            content = fh.read()
        parts = content.split("\n")
        tail = parts.pop()
        for i, line in enumerate(parts, start=1):
            if line.strip():
                yield i, line
        if tail.strip():
            log.warning("%s: ignoring partial trailing line %d", self.path, len(parts) + 1)

    def _headers(self):
        for _, line in self._lines():
            if line.startswith('{"header"'):
                yield line

    def headers(self) -> list[dict]:
        out = []
        for i, line in self._lines():
            obj = self._parse(line, i)
            if "header" in obj:
                out.append(obj["header"])
        return out

    @staticmethod
    def _parse(line: str, line_number: int) -> dict:
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorruptRecordError(f"not valid JSON: {exc.msg}", line_number) from exc
        if not isinstance(obj, dict):
            raise CorruptRecordError("not a JSON object", line_number)
        return obj

    def read(self) -> list[SolutionRecord]:
        records = []
        run = 0
        for i, line in self._lines():
            obj = self._parse(line, i)
            if "header" in obj:
                run = int(obj["header"].get("run", run))
                continue
            try:
                key = obj.pop("profile")
                profile = None
                if key is not None:
                    profile = self.read_profile(key, i)
                rec = SolutionRecord(profile=profile, run=run, **obj)
            except (KeyError, TypeError, ValueError) as exc:
                raise CorruptRecordError(f"not a valid record: {exc}", i) from exc
            rec.check_profile(i)
            records.append(rec)
        return records

    def read_profile(self, key: str, line_number: int | None = None) -> np.ndarray:
        target = self.profile_dir / f"{key}.txt"
        try:
            text = target.read_text()
        except OSError as exc:
            raise CorruptRecordError(f"profile {key} is missing", line_number) from exc
        if profile_key(text) != key:
            raise CorruptRecordError(f"profile {key} does not match its hash", line_number)
        return np.array([float(v) for v in text.split()])


# --------------------------------------------------------------------------
# diagram export


def diagram_rows(records, names=FUNCTIONALS):
    for rec in records:
        for name in names:
            yield (
                "%.17g" % rec.eps_sq,
                name,
                "%.17g" % float(rec.functionals[name]),
                rec.qualified_branch_id,
                rec.component,
                rec.M,
                rec.symmetry,
                rec.source,
            )


def write_diagram(records, path=None, names=FUNCTIONALS) -> str:
    """Write the diagram CSV to ``path`` (if given) and return its text."""
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in diagram_rows(records, names):
        writer.writerow(row)
    text = buf.getvalue()
    if path is not None:
        p = Path(path)
        if p.parent and not p.parent.exists():
            os.makedirs(p.parent, exist_ok=True)
        p.write_text(text)
    return text

from __future__ import annotations

import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carrier.errors import ConfigError, CorruptRecordError
from carrier.io import (
    CSV_HEADER,
    FUNCTIONALS,
    Database,
    RunConfig,
    SolutionRecord,
    functionals,
    profile_text,
    write_diagram,
)
from carrier.model import Grid, State


def make_record(rng, branch_id=0, n=21, profile=True):
    g = Grid(n)
    y = rng.standard_normal(n)
    y[0] = y[-1] = 0.0
    rec = SolutionRecord.from_state(State(g, y, float(rng.uniform(0.01, 0.5))), branch_id, family="test", keep_profile=profile)
    return rec


def test_functionals_of_known_profile():
    g = Grid(2001)
    y = 1.0 - g.nodes**2
    f = functionals(y, g)
    assert f["sup"] == pytest.approx(1.0)
    assert f["y_mid"] == 1.0
    assert f["dy_left"] == pytest.approx(2.0, rel=1e-9)
    assert f["h1"] == pytest.approx(np.sqrt(16 / 15 + 8 / 3), rel=1e-6)


def test_round_trip_1000_records(tmp_path, rng):
    db = Database(tmp_path / "db.jsonl")
    recs = [make_record(rng, branch_id=i % 7, profile=i % 3 != 0) for i in range(1000)]
    db.append(recs)
    back = db.read()
    assert len(back) == 1000
    for a, b in zip(recs, back):
        assert a.same_as(b)
        assert a.eps_sq == b.eps_sq
        assert a.functionals == b.functionals


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=3, max_size=30))
def test_profile_text_is_exact(values):
    text = profile_text(values)
    back = np.array([float(v) for v in text.split()])
    np.testing.assert_array_equal(back, np.asarray(values, dtype=float))


def test_corrupt_line_reports_line_number(tmp_path, rng):
    db = Database(tmp_path / "db.jsonl")
    db.append([make_record(rng), make_record(rng)])
    lines = db.path.read_text().splitlines()
    lines[2] = lines[2][:-5] + "garbage"
    db.path.write_text("\n".join(lines) + "\n")
    with pytest.raises(CorruptRecordError) as err:
        db.read()
    assert err.value.line_number == 3


def test_partial_trailing_line_is_ignored(tmp_path, rng, caplog):
    db = Database(tmp_path / "db.jsonl")
    db.append([make_record(rng), make_record(rng)])
    with open(db.path, "a") as fh:
        fh.write('{"eps_sq": 0.1, "sour')
    with caplog.at_level(logging.WARNING):
        back = db.read()
    assert len(back) == 2
    assert "partial" in caplog.text


def test_functional_mismatch_is_rejected(tmp_path, rng):
    db = Database(tmp_path / "db.jsonl")
    db.append([make_record(rng)])
    lines = db.path.read_text().splitlines()
    obj = json.loads(lines[1])
    obj["functionals"]["sup"] += 1e-6
    lines[1] = json.dumps(obj, sort_keys=True)
    db.path.write_text("\n".join(lines) + "\n")
    with pytest.raises(CorruptRecordError, match="sup"):
        db.read()


def test_tampered_profile_is_rejected(tmp_path, rng):
    db = Database(tmp_path / "db.jsonl")
    db.append([make_record(rng)])
    side = next(db.profile_dir.iterdir())
    side.write_text(side.read_text().replace("0\n", "1\n", 1))
    with pytest.raises(CorruptRecordError):
        db.read()


def test_record_lines_are_deterministic(tmp_path):
    a, b = Database(tmp_path / "a.jsonl"), Database(tmp_path / "b.jsonl")
    for db in (a, b):
        db.start_run({"command": "test"})
        db.append([make_record(np.random.default_rng(7)) for _ in range(5)])
    la, lb = (d.path.read_text().splitlines() for d in (a, b))
    assert la[0] != lb[0]
    assert la[1:] == lb[1:]


def test_two_runs_get_distinct_branch_namespaces(tmp_path, rng):
    db = Database(tmp_path / "db.jsonl")
    for _ in range(2):
        db.start_run()
        db.append([make_record(rng, branch_id=0)])
    recs = db.read()
    assert [r.qualified_branch_id for r in recs] == ["0:0", "1:0"]
    assert [h["run"] for h in db.headers()] == [0, 1]


def test_diagram_has_every_record_once_per_functional(tmp_path, rng):
    recs = [make_record(rng, branch_id=i) for i in range(6)]
    text = write_diagram(recs, tmp_path / "d.csv")
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 1 + 6 * len(FUNCTIONALS)
    rows = [l.split(",") for l in lines[1:]]
    for name in FUNCTIONALS:
        assert sorted(r[3] for r in rows if r[1] == name) == sorted(r.qualified_branch_id for r in recs)
    assert (tmp_path / "d.csv").read_text() == text


def test_empty_diagram():
    assert write_diagram([]) == ",".join(CSV_HEADER) + "\n"


def test_record_validation():
    with pytest.raises(ValueError):
        SolutionRecord(0.1, "guess", 0, 0, 0, "symmetric", "", {k: 0.0 for k in FUNCTIONALS})
    with pytest.raises(ValueError):
        SolutionRecord(0.1, "numeric", 0, 0, 0, "symmetric", "", {"sup": 0.0})


def test_run_config_loading(tmp_path):
    p = tmp_path / "cfg.yaml"
    p.write_text("n_nodes: 801\nstep: 0.001\nseeds: [1.0]\n")
    cfg = RunConfig.load(p)
    assert cfg.n_nodes == 801 and cfg.step == 0.001 and cfg.seeds == (1.0,)
    assert cfg.sweep_config().n_nodes == 801
    j = tmp_path / "cfg.json"
    j.write_text(json.dumps({"norm": "l2"}))
    assert RunConfig.load(j).norm == "l2"


@pytest.mark.parametrize(
    "text",
    ["bogus_key: 1\n", "n_nodes: fast\n", "norm: sup\n", "- 1\n- 2\n", "step: -1\n", "n_nodes: true\n", "seeds: 1.0\n"],
)
def test_run_config_rejects_bad_input(tmp_path, text):
    p = tmp_path / "cfg.yaml"
    p.write_text(text)
    with pytest.raises(ConfigError):
        RunConfig.load(p)


def test_run_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "none.yaml")

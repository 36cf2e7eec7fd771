from __future__ import annotations

import numpy as np
import pytest

from carrier.deflation import DeflationSet, deflated_newton
from carrier.model import Grid, State, newton_solve


@pytest.fixture(scope="session")
def grid_small():
    return Grid(401)


@pytest.fixture(scope="session")
def base_pair():
    """The two solutions at eps^2 = 0.5: Newton from y = 1, then deflated Newton from y = 1."""
    grid = Grid(2001)
    start = State.constant(grid, 1.0, 0.5)
    a, rep = newton_solve(start)
    assert rep.converged
    b, rep = deflated_newton(start, DeflationSet((a,)))
    assert rep.converged
    return [a, b]


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

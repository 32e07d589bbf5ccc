from __future__ import annotations

import numpy as np
import pytest

from oobvimp.dataset import ColumnSpec, Dataset
from oobvimp.regress import Design
from oobvimp.simulate import CoxSimParams, cox_design, simulate_cox_data


def make_cox_design(x, time, event, names=None) -> Design:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    names = names or [f"x{j}" for j in range(x.shape[1])]
    groups = tuple((nm, (j,)) for j, nm in enumerate(names))
    return Design(x, tuple(names), groups, "cox",
                  time=np.asarray(time, float), event=np.asarray(event, float))


def make_design(family, x, y, names=None) -> Design:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    names = names or [f"x{j}" for j in range(x.shape[1])]
    groups = tuple((nm, (j,)) for j, nm in enumerate(names))
    return Design(x, tuple(names), groups, family, response=np.asarray(y, float))


@pytest.fixture(scope="session")
def sim200() -> Dataset:
    return simulate_cox_data(CoxSimParams(n=200), seed=11)


@pytest.fixture(scope="session")
def cox200(sim200) -> Design:
    return cox_design(sim200)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def tiny_dataset() -> Dataset:
    specs = (ColumnSpec("x"), ColumnSpec("y", role="response"))
    return Dataset(specs, (np.array([1.0, 2.0, 3.0]), np.array([2.0, 4.0, 6.0])))


def pytest_terminal_summary(terminalreporter):
    from oracles import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

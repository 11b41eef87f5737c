import numpy as np
import pytest

from tecmrl import VitalSigns
from tecmrl.trajectory import Cohort, Episode, make_steps

from oracles import HEALTHY

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))


@pytest.fixture
def healthy():
    return VitalSigns(**HEALTHY)


def make_episode(eid, actions, platelets=None, died=False, los=3.0, pid=None):
    """Episode whose only varying vital is the platelet count."""
    n = len(actions)
    plt = platelets if platelets is not None else [200.0] * n
    vitals = [VitalSigns(**(HEALTHY | {"platelets": float(p)})) for p in plt]
    doses = [(0.0, 1.0, 1.6, 2.5, 4.0)[a] for a in actions]
    windows = list(range(n))
    return Episode(eid, pid or eid, make_steps(windows, vitals, doses, died), died, los)


@pytest.fixture
def episode_factory():
    return make_episode


class TableQ:
    """Q-function given directly as a function of platelets."""

    def __init__(self, fn):
        self.fn = fn

    def action_values(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.array([self.fn(row[2]) for row in x])


@pytest.fixture
def table_q():
    return TableQ


@pytest.fixture
def small_cohort():
    from tecmrl import SynthParams, synth_cohort

    return synth_cohort(SynthParams(n_patients=40), seed=3)


def cohort_of(*episodes):
    return Cohort(list(episodes), provenance="test")

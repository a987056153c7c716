import pytest

from valueramp.data import read_text
from valueramp.task import TaskModel, load_graph_task


def chain(n: int, M: int, start: int = 0) -> TaskModel:
    """Deterministic chain 0 -> 1 -> ... -> n-1 with one action; the last pair pays M and restarts."""
    tr = {(s, 0): [s + 1] for s in range(n - 1)}
    tr[(n - 1, 0)] = [start]
    return TaskModel.build(n, 1, [start], tr, {(n - 1, 0): M})


@pytest.fixture
def fluct():
    return load_graph_task(read_text("fluct.task"))


@pytest.fixture
def fluct_ids(fluct):
    names = {n: i for i, n in enumerate(fluct.state_names)}
    return names["1"], names["2"], names["3"], fluct.action_index("a"), fluct.action_index("b")


# lines reported by test_acceptance, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

import numpy as np
import pytest

from mixscope.trace import parse_trace

TINY_CSV = """timestamp,sender,receiver
0,alice,x
1,bob,y
2,alice,x
3,carol,x
3,alice,z
4,bob,y
5,carol,z
7,alice,x
"""


@pytest.fixture
def tiny_trace():
    return parse_trace(TINY_CSV)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_trace_csv(rng, n_events=200, n_senders=5, n_receivers=7):
    rows = ["timestamp,sender,receiver"]
    ts = np.sort(rng.integers(0, 10_000, size=n_events))
    for t in ts:
        rows.append(f"{t},s{rng.integers(n_senders)},r{rng.integers(n_receivers)}")
    return "\n".join(rows) + "\n"


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

import numpy as np
import pytest

from neyman_al.sampling import SamplePool

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def binary_pool(p1, labels=None, ids=None):
    p1 = np.asarray(p1, dtype=float)
    N = len(p1)
    if labels is None:
        labels = np.zeros(N, dtype=int)
    return SamplePool(ids=np.arange(N) if ids is None else ids, labels=labels,
                      scores=np.column_stack([1 - p1, p1]), K=2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

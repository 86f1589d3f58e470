import numpy as np
import pytest

from condmeta.core import Dataset, SideInfo, TaskInstance


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_task(rng, n=8, d=3, side="inputs", n_test=0):
    X = rng.standard_normal((n, d))
    y = rng.standard_normal(n)
    test = Dataset(rng.standard_normal((n_test, d)), rng.standard_normal(n_test)) if n_test else Dataset.empty(d)
    s = SideInfo(scalar=rng.uniform()) if side == "scalar" else SideInfo(inputs=X)
    return TaskInstance(Dataset(X, y), test, s, target=rng.standard_normal(d))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

import numpy as np
import pytest

from banditlab.core import PolicyTable


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_policy_table():
    # context 0: policy 0 -> action 0, policy 1 -> action 1; context 1 swapped
    return PolicyTable(np.array([[0, 1], [1, 0]]), 2)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)

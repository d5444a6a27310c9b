import numpy as np
import pytest

from regmdp import MdpModel
from oracles import random_model_arrays

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def chain():
    """s0 -> s1 (reward 1), s1 -> z (reward 2), z terminal, gamma 0.5."""
    P = np.zeros((1, 3, 3))
    R = np.zeros((1, 3, 3))
    P[0, 0, 1], R[0, 0, 1] = 1.0, 1.0
    P[0, 1, 2], R[0, 1, 2] = 1.0, 2.0
    P[0, 2, 2] = 1.0
    return MdpModel(P, R, 0.5, (2,))


def random_model(seed, S=4, A=2, gamma=0.9, terminal=True):
    rng = np.random.default_rng(seed)
    P, R, terms = random_model_arrays(rng, S, A, gamma, terminal)
    return MdpModel(P, R, gamma, terms)

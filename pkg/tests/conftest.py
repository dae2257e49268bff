import numpy as np
import pytest

from disco_s2.filters import KINDS, make_random_filter
from disco_s2.grid import build_grid


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=KINDS)
def kind(request):
    return request.param


def random_filter(kind, L, seed=7, width=3.0):
    return make_random_filter(kind, width * np.pi / L, 4, seed=seed)


@pytest.fixture
def grid8():
    return build_grid(8)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

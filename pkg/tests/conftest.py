import sys

import numpy as np
import pytest

from kdvcascade.gains import Plant
from kdvcascade.kernels import solve_kernel
from kdvcascade.transform import build_table

DEMO = dict(A=[[0.0, 1.0], [1.0, 0.0]], B=[[0.0], [1.0]], K=[[-3.0, -4.0]], l=1.0, lam=1.0)
# same (A, B) with A+BK eigenvalues -12, -15
FAST_K = [[-181.0, -27.0]]


@pytest.fixture(scope="session")
def demo():
    return Plant(**DEMO)


@pytest.fixture(scope="session")
def demo_kernels(demo):
    return solve_kernel(demo, "direct"), solve_kernel(demo, "inverse")


@pytest.fixture(scope="session")
def demo_table(demo, demo_kernels):
    q, h = demo_kernels
    return build_table(demo, q, h, 128)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

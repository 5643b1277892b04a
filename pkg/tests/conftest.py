import sys

import numpy as np
import pytest

from poisson_sparse.model import AffineRateModel


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_model(rng, n=6, p=3, low=0.5, high=2.0):
    return AffineRateModel(rng.uniform(low, high, n), rng.uniform(0.0, 1.0, (n, p)))


@pytest.fixture
def small_model(rng):
    return random_model(rng)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[num])

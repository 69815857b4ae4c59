import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from alignlab.data import generate_synthetic, select_alignment, split_dataset
from alignlab.noisegen import NoiseSpec, inject

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def make_noisy(n=600, rates=(0.2, 0.4), seed=0, fraction=0.1):
    r = np.random.default_rng(seed)
    data = generate_synthetic(n, 30, r)
    data = split_dataset(data, 0.2, r)
    data = select_alignment(data, fraction, None, r)
    return inject(data, NoiseSpec(rates, seed=seed))[0]


@pytest.fixture(scope="session")
def small_noisy():
    return make_noisy()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)

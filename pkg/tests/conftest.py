import numpy as np
import pytest

from homlab.harness import SweepConfig, run_sweep


@pytest.fixture(scope="session")
def linear_report():
    return run_sweep(SweepConfig())


@pytest.fixture(scope="session")
def power_report():
    return run_sweep(SweepConfig(source={"kind": "power", "h": 1.0, "gamma": 2.0}))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

import numpy as np
import pytest

from csiratio import noise_limited_schedule, paper_scenario


@pytest.fixture(scope="session")
def paper():
    """Reference scenario and prop3-style schedule used across the suite."""
    scenario, t0 = paper_scenario()
    schedule = noise_limited_schedule(512, 128, t0)
    return scenario, schedule


@pytest.fixture()
def rng():
    return np.random.default_rng(20240613)

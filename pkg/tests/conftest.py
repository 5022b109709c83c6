import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_rows(rng, followers=3, agents=4, low=0.0):
    """Row-stochastic follower rows with every entry at least ``low``."""
    return low + (1.0 - agents * low) * rng.dirichlet(np.ones(agents), size=followers)


SMALL_OVERRIDES = ["scenario.name=small", "scenario.steps=6", "scenario.target_x=1", "scenario.target_y=5",
                   "solver.multistart_count=3"]


@pytest.fixture(scope="session")
def small_scenario():
    from roverswarm.config import load_scenario

    return load_scenario("sim1", SMALL_OVERRIDES)


@pytest.fixture(scope="session")
def small_bundle(small_scenario):
    from roverswarm.runner import run_scenario

    return run_scenario(small_scenario)


@functools.lru_cache(maxsize=None)
def solved(name):
    """Result bundle of a built-in scenario, solved once per test session."""
    from roverswarm.config import builtin_scenarios
    from roverswarm.runner import run_scenario

    return run_scenario(builtin_scenarios()[name])

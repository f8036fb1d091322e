import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def small_sim():
    """A 6-year, 4-covariate synthetic panel with well-separated states."""
    from rrmix import synthgen

    tr = synthgen.default_truth(K=4, gap=2.0, seed=1)
    ds, gt = synthgen.generate(tr, [40] * 6, cov_spec=synthgen.gaussian_spec(4), seed=5,
                               S=[0, 1, 1, 0, 1, 0])
    return ds, gt


@pytest.fixture(scope="session")
def dynamic_chain(small_sim):
    from rrmix import engine

    return engine.fit(small_sim[0], engine.FitConfig(draws=400, burnin=100, seed=3))


@pytest.fixture(scope="session")
def static_chain(small_sim):
    from rrmix import engine

    return engine.fit(small_sim[0], engine.FitConfig(model="static", draws=400, burnin=100,
                                                     seed=3))

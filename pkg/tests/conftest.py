import numpy as np
import pytest
from hypothesis import settings

from plmix.core import MixtureParams, StructureDistribution, StructureId

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

THETA_1 = [0.1, 0.2, 0.3, 0.4]
THETA_2 = [0.2, 0.2, 0.3, 0.3]


@pytest.fixture
def example1():
    """The four-alternative, two-component model with four structures."""
    m = 4
    phi = StructureDistribution(m, {
        StructureId.top(3, m): 0.2,
        StructureId.top(2, m): 0.1,
        StructureId.way({1, 3, 4}): 0.3,
        StructureId.choice({1, 2, 3}): 0.4,
    })
    return MixtureParams([0.2, 0.8], (THETA_1, THETA_2), phi)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_theta(rng, m):
    # keep entries away from zero so relative tolerances stay meaningful
    x = rng.uniform(0.05, 1.0, size=m)
    return x / x.sum()


def random_mixture(rng, m, k):
    a = rng.uniform(0.05, 1.0, size=k)
    return MixtureParams(a / a.sum(), tuple(random_theta(rng, m) for _ in range(k)))


@pytest.fixture(scope="session")
def study_rows():
    """The desk-scale study: both partial settings over the n grid, plus the
    two linear settings at n = 10^4. Shared by the bench and acceptance tests."""
    from plmix.bench import BenchConfig, run_experiment, run_trial

    config = BenchConfig(m=10, settings=["top2_2way", "choice234"], n_grid=[1000, 10000, 100000],
                         trials=50, seed=2024)
    rows = run_experiment(config)
    for setting in ("linear_top2_2way", "linear_choice234"):
        rows += [run_trial(config, setting, 10000, t) for t in range(config.trials)]
    return rows

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from relsynth import datasets

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def toy_db():
    return datasets.load_toy()


@pytest.fixture(scope="session")
def tiny_db():
    return datasets.tiny_hetero()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ALL_DATASETS = ["toy_store", "planted_correlation", "f1_like", "cora_like", "berka_like", "self_ref", "snowflake",
                "tiny_hetero"]


@pytest.fixture(scope="session")
def dataset_cache():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = datasets.GENERATORS[name]()
        return cache[name]

    return get

import numpy as np
import pytest

from neyman import data


@pytest.fixture(scope="session")
def table1_pop():
    return data.table1_population(n_per_arm=40, seed=0)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


def scaled_sample(rng, n: int, target_sd: float, mean: float = 0.0) -> np.ndarray:
    """A length-n sample whose sample sd (ddof=1) is exactly target_sd."""
    x = rng.standard_normal(n)
    x = (x - x.mean()) / x.std(ddof=1)
    return mean + target_sd * x

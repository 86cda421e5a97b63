import os

import numpy as np
import pytest

from fdpv_hurst.variance import cached_variance_table


@pytest.fixture(scope="session")
def variance_table(tmp_path_factory):
    """Default 19-point "mc" table (R=2000, n=2**14), calibrated once per session.

    Set FDPV_HURST_CACHE to reuse it across sessions.
    """
    cache = os.environ.get("FDPV_HURST_CACHE") or tmp_path_factory.mktemp("variance-cache")
    return cached_variance_table(cache_dir=cache)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def integrate_second_differences(d):
    """Path with X[0] = X[1] = 0 whose second differences are ``d``."""
    x = np.zeros(len(d) + 2)
    for k, v in enumerate(d):
        x[k + 2] = v + 2 * x[k + 1] - x[k]
    return x

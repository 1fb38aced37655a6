from pathlib import Path

import numpy as np
import pytest

from mjlsq import two_mode_benchmark, value_iteration
from mjlsq.model import identity_weights, random_model

MODELS = Path(__file__).resolve().parents[1] / "demos" / "models"


@pytest.fixture(scope="session")
def benchmark():
    return two_mode_benchmark()


@pytest.fixture(scope="session")
def oracle(benchmark):
    model, weights = benchmark
    return value_iteration(model, weights, tol=1e-12)


@pytest.fixture
def models_dir():
    return MODELS


def random_plants(count, seed=2024):
    """Random (model, weights) pairs with n <= 3, m <= 2, N <= 3."""
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n, m, N = (int(v) for v in (rng.integers(1, 4), rng.integers(1, 3), rng.integers(1, 4)))
        yield random_model(rng, n, m, N), identity_weights(n, m, N)

import hypothesis
import numpy as np
import pytest

# jit warm-up and quadrature make per-example timing noisy
hypothesis.settings.register_profile("default", deadline=None, max_examples=50)
hypothesis.settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20250801)

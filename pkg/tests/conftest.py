import numpy as np
import pytest

from repseg.types import FrameSeries


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_series(n=20, n_lm=4, fps=25.0, seed=0):
    r = np.random.default_rng(seed)
    return FrameSeries(fps, r.normal(100.0, 20.0, (n, n_lm, 2)))

import numpy as np
import pytest
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays


def random_joint(rng, nx, ny, zero_frac=0.0):
    P = rng.random((nx, ny)) ** 2
    if zero_frac:
        P[rng.random((nx, ny)) < zero_frac] = 0.0
        # keep every marginal positive
        P[np.arange(nx), rng.integers(0, ny, nx)] += 0.05
        P[rng.integers(0, nx, ny), np.arange(ny)] += 0.05
    return P / P.sum()


@st.composite
def joints(draw, max_x=6, max_y=5):
    nx = draw(st.integers(2, max_x))
    ny = draw(st.integers(2, max_y))
    cells = draw(arrays(np.float64, (nx, ny), elements=st.floats(0.01, 1.0)))
    return cells / cells.sum()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

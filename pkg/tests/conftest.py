import numpy as np
import pytest
import torch

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


class ForcedRng:
    """Stands in for a numpy Generator with scripted draws."""

    def __init__(self, uniform=None, start=0):
        self._uniform = uniform
        self._start = start

    def uniform(self, lo, hi):
        return hi if self._uniform is None else self._uniform

    def integers(self, lo, hi):
        return min(self._start, hi - 1)


@pytest.fixture
def forced_rng():
    return ForcedRng

import numpy as np
import pytest
import torch

from dacad.core import TimeSeries, make_windows
from dacad.model import DACAD, ModelConfig

torch.set_num_threads(1)


def tiny_config(**kw) -> ModelConfig:
    base = dict(input_dims=3, window_size=16, channels=[4, 4, 8], repr_dim=8, head_hidden=8, head_dim=4, disc_hidden=6)
    base.update(kw)
    return ModelConfig(**base)


@pytest.fixture
def tiny_model():
    return DACAD(tiny_config())


@pytest.fixture
def labelled_series():
    rng = np.random.default_rng(0)
    t = np.arange(400)[:, None]
    values = np.sin(2 * np.pi * t / np.array([12.0, 17.0, 23.0])) + 0.1 * rng.standard_normal((400, 3))
    labels = np.zeros(400, dtype=int)
    for a in (60, 180, 300):
        values[a : a + 6, 0] += 4.0
        labels[a : a + 6] = 1
    return TimeSeries("src", values, labels, "train")


@pytest.fixture
def unlabelled_series():
    rng = np.random.default_rng(1)
    t = np.arange(300)[:, None]
    values = 1.5 * np.sin(2 * np.pi * t / np.array([11.0, 19.0, 29.0])) + 0.2 * rng.standard_normal((300, 3))
    return TimeSeries("trg", values, None, "train")


@pytest.fixture
def window_factory():
    def make(n=20, ws=16, dims=3, seed=0):
        rng = np.random.default_rng(seed)
        series = TimeSeries("w", rng.standard_normal((n + ws - 1, dims)), np.zeros(n + ws - 1, dtype=int))
        return make_windows(series, ws)

    return make

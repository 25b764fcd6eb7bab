import numpy as np
import pytest

from patchad.data import LabeledSeries
from patchad.model import ModelConfig, PatchADModel


@pytest.fixture()
def rng():
    return np.random.default_rng(0)


@pytest.fixture()
def tiny_config():
    return ModelConfig(
        channels=2, window=12, patch_sizes=(3, 4), d_model=6, layers=2, seed=0
    )


@pytest.fixture()
def tiny_model(tiny_config):
    return PatchADModel(tiny_config)


@pytest.fixture()
def sine_series():
    t = np.arange(240)
    values = np.stack([np.sin(2 * np.pi * t / 24), np.cos(2 * np.pi * t / 12)])
    return LabeledSeries(values=values)


@pytest.fixture()
def labelled_csv(tmp_path):
    path = tmp_path / "series.csv"
    path.write_text("a,b,label\n1.5,2,0\n-3,4e-3,1\n0.25,7,0\n", encoding="utf-8")
    return path

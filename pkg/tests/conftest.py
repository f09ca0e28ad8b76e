import numpy as np
import pytest
import torch


@pytest.fixture(autouse=True)
def _two_threads():
    torch.set_num_threads(2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def decaying_sine(freq: float, n: int = 16000, sr: int = 16000,
                  decay_s: float = 0.25, amp: float = 0.8) -> np.ndarray:
    t = np.arange(n) / sr
    return amp * np.exp(-t / decay_s) * np.sin(2 * np.pi * freq * t)


@pytest.fixture
def oracle_dataset_8(tmp_path):
    from psynth.dataset import build_oracle_dataset, load_dataset

    build_oracle_dataset(8, seed=7, out_dir=tmp_path / "data8")
    return (tmp_path / "data8", *load_dataset(tmp_path / "data8"))

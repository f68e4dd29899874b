import numpy as np
import pytest
import torch

from partvid.config import TrainConfig
from partvid.synthetic import generate_corpus

torch.set_num_threads(1)


def tiny_config(dataset_root: str = "", **overrides) -> TrainConfig:
    """Small model/config used by most engine tests."""
    base = dict(
        dataset_root=dataset_root,
        backbone="resnet18",
        fpn_channels=64,
        compressed_channels=32,
        parts_p=3,
        input_size=64,
        batch_size=2,
        epochs=1,
        crop_scale_range=(1.0, 1.0),
        hflip_probability=0.0,
        seed=7,
    )
    base.update(overrides)
    return TrainConfig(**base)


@pytest.fixture(scope="session")
def corpus_root(tmp_path_factory):
    """Shared synthetic corpus: 3 train + 1 test clips of 8 frames at 64x64."""
    root = tmp_path_factory.mktemp("corpus")
    generate_corpus(root, train_clips=3, test_clips=1, frames=8, size=64, seed=11)
    return root


@pytest.fixture
def rng():
    return np.random.default_rng(123)

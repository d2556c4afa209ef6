"""Shared fixtures: small deterministic scenes, datasets, and configs.

Everything here is sized for speed — a handful of bands and pixels is
enough to exercise every code path.
"""

import numpy as np
import pytest

from beetlemap.contrastive import AugmentationConfig, FinetuneConfig, PretrainConfig
from beetlemap.data import Dataset
from beetlemap.nn import EncoderModel
from beetlemap.synth import SceneConfig, generate_scene, sample_labeled

TINY_BANDS = 24


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_scene():
    cfg = SceneConfig(height=10, width=10, bands=TINY_BANDS, noise_std=0.005, seed=7)
    return generate_scene(cfg)


@pytest.fixture(scope="session")
def tiny_dataset(tiny_scene):
    labeled = sample_labeled(tiny_scene, 15, seed=7)
    return Dataset(
        band_count=TINY_BANDS,
        labeled=labeled,
        unlabeled=tiny_scene.cube.reshape(-1, TINY_BANDS),
    )


@pytest.fixture()
def tiny_encoder():
    return EncoderModel.initialize(TINY_BANDS, seed=3)


@pytest.fixture()
def quick_pretrain_cfg():
    return PretrainConfig(batch_size=16, epochs=1, max_samples=32)


@pytest.fixture()
def quick_finetune_cfg():
    return FinetuneConfig(epochs=5)


@pytest.fixture()
def quick_aug_cfg():
    return AugmentationConfig(seed=11)

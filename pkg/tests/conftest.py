import numpy as np
import pytest
import torch

from slcgan.config import build_config
from slcgan.data import derive_rng, open_dataset
from slcgan.trainer import Trainer


def tiny_raw(mode="slcgan", **overrides):
    """Raw config for a fast mlp run on a small ring mixture."""
    raw = {
        "run.mode": mode,
        "run.seed": "7",
        "run.total_iterations": "4",
        "run.batch_size": "32",
        "model.family": "mlp",
        "model.k": "4",
        "model.width": "32",
        "model.c_width": "16",
        "model.c_feature_dim": "16",
        "data.source": "gmm",
        "data.gmm_centers": "ring:4:1.0",
        "data.gmm_sigma": "0.05",
        "data.size": "512",
        "augment.jitter": "0.05",
    }
    raw.update({k: str(v) for k, v in overrides.items()})
    return raw


def make_trainer(mode="slcgan", run_dir=None, **overrides):
    cfg = build_config(tiny_raw(mode=mode, **overrides))
    dataset = open_dataset(cfg, derive_rng(cfg.seed, 1))
    return Trainer(cfg, dataset, run_dir=run_dir)


@pytest.fixture
def tiny_trainer():
    return make_trainer()


@pytest.fixture(autouse=True)
def _fixed_torch_threads():
    # keep matmul partitioning stable so bitwise checks hold regardless of host
    torch.set_num_threads(1)
    yield


def conv_raw(mode="slcgan", **overrides):
    """Raw config for a tiny 8x8 conv-family run on a disk image directory."""
    raw = {
        "run.mode": mode,
        "run.seed": "5",
        "run.total_iterations": "1",
        "run.batch_size": "8",
        "model.family": "conv",
        "model.k": "3",
        "model.d_z": "16",
        "model.embed_dim": "8",
        "model.width": "8",
        "model.image_size": "8",
        "model.image_channels": "3",
        "model.c_width": "8",
        "model.c_feature_dim": "24",
        "data.source": "dir",
    }
    raw.update({k: str(v) for k, v in overrides.items()})
    return raw


def write_image_dir(root, n_per_class=6, classes=("a", "b", "c"), size=8, rng_seed=0):
    """Create a labeled directory of random RGB images; returns the path."""
    from PIL import Image
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    root.mkdir(parents=True, exist_ok=True)
    for cls in classes:
        sub = root / cls
        sub.mkdir(exist_ok=True)
        for i in range(n_per_class):
            arr = rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
            Image.fromarray(arr, mode="RGB").save(sub / f"img_{i}.png")
    return str(root)

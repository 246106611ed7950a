"""Self-labeled conditional GAN training, clustering, and evaluation toolkit."""

from .config import RunConfig, build_config, load_config
from .data import (
    AugmentationPolicy,
    ConditioningCode,
    Dataset,
    GaussianMixtureSpec,
    augment,
    gmm_sample,
    iterate_batches,
    make_rng,
    open_dataset,
    ring_spec,
    sample_condition,
    sample_latent,
)
from .losses import (
    LossBreakdown,
    NetworkObjectives,
    aug_consistency_loss,
    c_adv_loss,
    combine,
    d_hinge_loss,
    g_adv_loss,
    mi_loss,
)
from .models import ModelConfig, ScorePair, build_networks, spectral_normalize
from .trainer import Trainer, generate_samples, load_networks

__version__ = "0.1.0"

__all__ = [
    "AugmentationPolicy",
    "ConditioningCode",
    "Dataset",
    "GaussianMixtureSpec",
    "LossBreakdown",
    "ModelConfig",
    "NetworkObjectives",
    "RunConfig",
    "ScorePair",
    "Trainer",
    "augment",
    "aug_consistency_loss",
    "build_config",
    "build_networks",
    "c_adv_loss",
    "combine",
    "d_hinge_loss",
    "g_adv_loss",
    "generate_samples",
    "gmm_sample",
    "iterate_batches",
    "load_config",
    "load_networks",
    "make_rng",
    "mi_loss",
    "open_dataset",
    "ring_spec",
    "sample_condition",
    "sample_latent",
    "spectral_normalize",
]

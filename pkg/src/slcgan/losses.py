"""Scalar training objectives for the three-network adversarial game.

All reductions are batch means. The discriminator trains a hinge loss split
across unary and joint score terms; the generator descends the negated fake
scores plus a label-recovery cross-entropy through the clustering network;
the clustering network descends the real joint score plus an augmentation
consistency cross-entropy whose target branch carries no gradient.
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .models.networks import ScorePair

LOG_EPS = 1e-12  # clamp inside logs so saturated softmax rows stay finite


def _check_nonempty(t: torch.Tensor, what: str):
    if t.numel() == 0:
        raise ValueError(f"{what}: empty batch")


def d_hinge_loss(real: ScorePair, fake: ScorePair) -> torch.Tensor:
    """Mean of max(0,1-u_r) + max(0,1-s_r) + max(0,1+u_f) + max(0,1+s_f).

    When the score pairs carry no joint component (unconditional mode)
    only the unary terms contribute.
    """
    _check_nonempty(real.unary, "d_hinge_loss")
    _check_nonempty(fake.unary, "d_hinge_loss")
    loss = F.relu(1.0 - real.unary) + F.relu(1.0 + fake.unary)
    if real.joint is not None:
        loss = loss + F.relu(1.0 - real.joint)
    if fake.joint is not None:
        loss = loss + F.relu(1.0 + fake.joint)
    return loss.mean()


def g_adv_loss(fake: ScorePair) -> torch.Tensor:
    """Mean of -(u_f + s_f); unary-only in unconditional mode."""
    _check_nonempty(fake.unary, "g_adv_loss")
    loss = -fake.unary
    if fake.joint is not None:
        loss = loss - fake.joint
    return loss.mean()


def mi_loss(fake_probs: torch.Tensor, cond_index: torch.Tensor) -> torch.Tensor:
    """Mean of -log p(y = c | G(z, c)): the label-recovery bound.

    ``fake_probs`` come from the clustering network evaluated on generated
    samples; gradients are meant to reach the generator through those
    samples only (the caller never steps the clustering parameters on it).
    """
    _check_nonempty(fake_probs, "mi_loss")
    picked = fake_probs.gather(1, cond_index.view(-1, 1).long()).squeeze(1)
    return -torch.log(picked.clamp_min(LOG_EPS)).mean()


def aug_consistency_loss(p: torch.Tensor, q: torch.Tensor) -> torch.Tensor:
    """Mean cross-entropy H(q, p) between a prediction and its augmented view.

    ``q`` (the augmented-view prediction) is detached and acts as a constant
    target; only ``p`` carries gradient.
    """
    _check_nonempty(p, "aug_consistency_loss")
    q = q.detach()
    return -(q * torch.log(p.clamp_min(LOG_EPS))).sum(dim=1).mean()


def c_adv_loss(real: ScorePair) -> torch.Tensor:
    """Mean of the real joint score s_r, descended by the clustering network."""
    if real.joint is None:
        raise ValueError("c_adv_loss requires joint scores")
    _check_nonempty(real.joint, "c_adv_loss")
    return real.joint.mean()


@dataclass
class LossBreakdown:
    """The five per-step loss values plus the objective weights."""

    d_hinge: float = 0.0
    g_adv: float = 0.0
    g_mi: float = 0.0
    c_adv: float = 0.0
    c_aug: float = 0.0
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0)

    CSV_FIELDS = ("d_hinge", "g_adv", "g_mi", "c_adv", "c_aug")


@dataclass
class NetworkObjectives:
    d: float = 0.0
    g: float = 0.0
    c: float = 0.0


def combine(breakdown: LossBreakdown) -> NetworkObjectives:
    """Weighted per-network objectives: the adversarial weight scales every
    game term, the other two scale the label-recovery and consistency terms."""
    l_adv, l_mi, l_aug = breakdown.weights
    return NetworkObjectives(
        d=l_adv * breakdown.d_hinge,
        g=l_adv * breakdown.g_adv + l_mi * breakdown.g_mi,
        c=l_adv * breakdown.c_adv + l_aug * breakdown.c_aug,
    )

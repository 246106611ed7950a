"""Conditioning and block layers shared by the generator and discriminator."""

import torch.nn as nn
import torch.nn.functional as F

from .spectral import SNConv2d, SNLinear


class LabelEmbedding(nn.Module):
    """Linear map from a K-dim label vector (one-hot or soft) to a dense code.

    A class-level call counter backs the mode-reduction checks: unconditional
    training must never touch an embedding.
    """

    forward_count = 0

    def __init__(self, num_classes, embed_dim, spectral_norm=False):
        super().__init__()
        self.num_classes = num_classes
        self.proj = SNLinear(num_classes, embed_dim, bias=False, spectral_norm=spectral_norm)

    def forward(self, label):
        if label.dim() != 2 or label.shape[1] != self.num_classes:
            from ..errors import ConfigError
            raise ConfigError(
                f"label has shape {tuple(label.shape)}, expected (batch, {self.num_classes})")
        LabelEmbedding.forward_count += 1
        return self.proj(label)


class ConditionalBatchNorm2d(nn.Module):
    """BatchNorm whose gain and bias are linear in a conditioning vector."""

    def __init__(self, num_features, cond_dim):
        super().__init__()
        self.bn = nn.BatchNorm2d(num_features, affine=False)
        self.gain = nn.Linear(cond_dim, num_features)
        self.bias = nn.Linear(cond_dim, num_features)

    def forward(self, x, cond):
        out = self.bn(x)
        gamma = 1.0 + self.gain(cond)
        beta = self.bias(cond)
        return out * gamma[:, :, None, None] + beta[:, :, None, None]


class GenBlock(nn.Module):
    """Upsampling residual generator block with (optionally conditional) BN."""

    def __init__(self, in_ch, out_ch, cond_dim=None, spectral_norm=True):
        super().__init__()
        self.conditional = cond_dim is not None
        if self.conditional:
            self.bn1 = ConditionalBatchNorm2d(in_ch, cond_dim)
            self.bn2 = ConditionalBatchNorm2d(out_ch, cond_dim)
        else:
            self.bn1 = nn.BatchNorm2d(in_ch)
            self.bn2 = nn.BatchNorm2d(out_ch)
        self.conv1 = SNConv2d(in_ch, out_ch, 3, padding=1, spectral_norm=spectral_norm)
        self.conv2 = SNConv2d(out_ch, out_ch, 3, padding=1, spectral_norm=spectral_norm)
        self.skip = SNConv2d(in_ch, out_ch, 1, spectral_norm=spectral_norm)

    def forward(self, x, cond=None):
        h = self.bn1(x, cond) if self.conditional else self.bn1(x)
        h = F.interpolate(F.relu(h), scale_factor=2, mode="nearest")
        h = self.conv1(h)
        h = self.bn2(h, cond) if self.conditional else self.bn2(h)
        h = self.conv2(F.relu(h))
        sc = self.skip(F.interpolate(x, scale_factor=2, mode="nearest"))
        return h + sc


class DiscBlock(nn.Module):
    """Downsampling residual discriminator block (pre-activation except first)."""

    def __init__(self, in_ch, out_ch, first=False, spectral_norm=True):
        super().__init__()
        self.first = first
        self.conv1 = SNConv2d(in_ch, out_ch, 3, padding=1, spectral_norm=spectral_norm)
        self.conv2 = SNConv2d(out_ch, out_ch, 3, padding=1, spectral_norm=spectral_norm)
        self.skip = SNConv2d(in_ch, out_ch, 1, spectral_norm=spectral_norm)

    def forward(self, x):
        h = x if self.first else F.relu(x)
        h = self.conv2(F.relu(self.conv1(h)))
        h = F.avg_pool2d(h, 2)
        sc = F.avg_pool2d(self.skip(x), 2)
        return h + sc

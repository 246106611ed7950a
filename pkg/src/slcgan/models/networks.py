"""Generator, discriminator, and clustering network definitions.

Two families share the same conditioning machinery:

* ``conv`` — reduced BigGAN-style residual networks for square images
  (one block per stage, configurable channel multiplier). The generator
  injects the embedded label through class-conditional batch norm, the
  discriminator through a projection term added to its unary score.
* ``mlp`` — dense networks over 2D points used by the synthetic
  mode-coverage benchmark; the label embedding is concatenated with the
  latent code, the discriminator keeps the same projection form.

Forward passes are pure functions of (inputs, parameters, train/eval flag)
and safe to run concurrently on disjoint parameter sets; the mutable bits
(power-iteration vectors, batch-norm statistics) only update in training
mode and belong to the single training thread.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ConfigError
from .layers import ConditionalBatchNorm2d, DiscBlock, GenBlock, LabelEmbedding
from .spectral import SNConv2d, SNLinear


class ScorePair(NamedTuple):
    """Per-sample discriminator outputs: image-only and image+label scores."""

    unary: torch.Tensor
    joint: Optional[torch.Tensor]


@dataclass(frozen=True)
class ModelConfig:
    family: str
    k: int
    d_z: int
    embed_dim: int
    width: int
    image_size: int = 32
    image_channels: int = 3
    c_width: int = 32
    c_feature_dim: int = 128
    sn_g: bool = True
    sn_d: bool = True
    sn_c: bool = False

    @property
    def data_shape(self) -> tuple[int, ...]:
        if self.family == "mlp":
            return (2,)
        return (self.image_channels, self.image_size, self.image_size)


def model_config_from_run(cfg) -> ModelConfig:
    return ModelConfig(
        family=cfg.family, k=cfg.k, d_z=cfg.d_z, embed_dim=cfg.embed_dim,
        width=cfg.width, image_size=cfg.image_size, image_channels=cfg.image_channels,
        c_width=cfg.c_width, c_feature_dim=cfg.c_feature_dim,
        sn_g=cfg.sn_g, sn_d=cfg.sn_d, sn_c=cfg.sn_c)


def _check_batch(z, label):
    if label is not None and label.shape[0] != z.shape[0]:
        raise ConfigError(
            f"latent batch {z.shape[0]} does not match label batch {label.shape[0]}")


class ConvGenerator(nn.Module):
    def __init__(self, arch: ModelConfig, conditional: bool):
        super().__init__()
        self.arch = arch
        self.conditional = conditional
        self.bottom = 4
        n_stages = int(math.log2(arch.image_size // self.bottom))
        chans = [arch.width * 2 ** (n_stages - i) for i in range(n_stages + 1)]
        self.embed = LabelEmbedding(arch.k, arch.embed_dim) if conditional else None
        cond_dim = arch.embed_dim if conditional else None
        self.fc = SNLinear(arch.d_z, chans[0] * self.bottom ** 2, spectral_norm=arch.sn_g)
        self.blocks = nn.ModuleList([
            GenBlock(chans[i], chans[i + 1], cond_dim=cond_dim, spectral_norm=arch.sn_g)
            for i in range(n_stages)])
        self.out_bn = nn.BatchNorm2d(chans[-1])
        self.out_conv = SNConv2d(chans[-1], arch.image_channels, 3, padding=1,
                                 spectral_norm=arch.sn_g)

    def forward(self, z, label=None):
        if z.shape[1] != self.arch.d_z:
            raise ConfigError(f"latent dim {z.shape[1]} != configured d_z {self.arch.d_z}")
        if self.conditional:
            if label is None:
                raise ConfigError("conditional generator requires a label input")
            _check_batch(z, label)
            cond = self.embed(label)
        else:
            cond = None
        h = self.fc(z).view(z.shape[0], -1, self.bottom, self.bottom)
        for block in self.blocks:
            h = block(h, cond)
        h = F.relu(self.out_bn(h))
        return torch.tanh(self.out_conv(h))


class MLPGenerator(nn.Module):
    out_dim = 2

    def __init__(self, arch: ModelConfig, conditional: bool):
        super().__init__()
        self.arch = arch
        self.conditional = conditional
        self.embed = LabelEmbedding(arch.k, arch.embed_dim) if conditional else None
        in_dim = arch.d_z + (arch.embed_dim if conditional else 0)
        sn = arch.sn_g
        self.fc1 = SNLinear(in_dim, arch.width, spectral_norm=sn)
        self.fc2 = SNLinear(arch.width, arch.width, spectral_norm=sn)
        self.fc3 = SNLinear(arch.width, self.out_dim, spectral_norm=sn)

    def forward(self, z, label=None):
        if z.shape[1] != self.arch.d_z:
            raise ConfigError(f"latent dim {z.shape[1]} != configured d_z {self.arch.d_z}")
        if self.conditional:
            if label is None:
                raise ConfigError("conditional generator requires a label input")
            _check_batch(z, label)
            h = torch.cat([z, self.embed(label)], dim=1)
        else:
            h = z
        h = F.relu(self.fc1(h))
        h = F.relu(self.fc2(h))
        return torch.tanh(self.fc3(h))


class ConvDiscriminator(nn.Module):
    def __init__(self, arch: ModelConfig, conditional: bool):
        super().__init__()
        self.arch = arch
        self.conditional = conditional
        n_blocks = int(math.log2(arch.image_size // 4)) + 1
        chans = [arch.width * 2 ** i for i in range(n_blocks)]
        blocks = [DiscBlock(arch.image_channels, chans[0], first=True, spectral_norm=arch.sn_d)]
        blocks += [DiscBlock(chans[i], chans[i + 1], spectral_norm=arch.sn_d)
                   for i in range(n_blocks - 1)]
        self.blocks = nn.ModuleList(blocks)
        self.feat_dim = chans[-1]
        self.head = SNLinear(self.feat_dim, 1, spectral_norm=arch.sn_d)
        self.embed = (LabelEmbedding(arch.k, self.feat_dim, spectral_norm=arch.sn_d)
                      if conditional else None)

    def image_features(self, x):
        h = x
        for block in self.blocks:
            h = block(h)
        return F.relu(h).sum(dim=(2, 3))

    def forward(self, x, label=None) -> ScorePair:
        phi = self.image_features(x)
        unary = self.head(phi).squeeze(1)
        if not self.conditional:
            if label is not None:
                raise ConfigError("unconditional discriminator got a label input")
            return ScorePair(unary, None)
        if label is None:
            raise ConfigError("conditional discriminator requires a label input")
        joint = unary + (self.embed(label) * phi).sum(dim=1)
        return ScorePair(unary, joint)


class MLPDiscriminator(nn.Module):
    in_dim = 2

    def __init__(self, arch: ModelConfig, conditional: bool):
        super().__init__()
        self.arch = arch
        self.conditional = conditional
        sn = arch.sn_d
        self.fc1 = SNLinear(self.in_dim, arch.width, spectral_norm=sn)
        self.fc2 = SNLinear(arch.width, arch.width, spectral_norm=sn)
        self.head = SNLinear(arch.width, 1, spectral_norm=sn)
        self.embed = LabelEmbedding(arch.k, arch.width, spectral_norm=sn) if conditional else None

    def image_features(self, x):
        h = F.leaky_relu(self.fc1(x), 0.2)
        return F.leaky_relu(self.fc2(h), 0.2)

    def forward(self, x, label=None) -> ScorePair:
        phi = self.image_features(x)
        unary = self.head(phi).squeeze(1)
        if not self.conditional:
            if label is not None:
                raise ConfigError("unconditional discriminator got a label input")
            return ScorePair(unary, None)
        if label is None:
            raise ConfigError("conditional discriminator requires a label input")
        joint = unary + (self.embed(label) * phi).sum(dim=1)
        return ScorePair(unary, joint)


class ClusteringNetwork(nn.Module):
    """Assigns a K-way cluster probability vector to each input.

    ``forward`` returns row-stochastic probabilities, ``logits`` the
    pre-softmax scores, and ``features`` the penultimate activations (the
    input to the final linear layer) used by the linear probe and the
    k-means baseline. A class-level counter records every evaluation for
    the mode-reduction checks.
    """

    forward_count = 0

    def __init__(self, arch: ModelConfig):
        super().__init__()
        self.arch = arch
        self.k = arch.k
        self.feature_dim = arch.c_feature_dim
        sn = arch.sn_c
        if arch.family == "mlp":
            self.trunk = None
            self.fc1 = SNLinear(2, arch.c_width, spectral_norm=sn)
            self.fc2 = SNLinear(arch.c_width, arch.c_feature_dim, spectral_norm=sn)
        else:
            chans = [arch.c_width, 2 * arch.c_width, 4 * arch.c_width, 4 * arch.c_width]
            layers = []
            in_ch = arch.image_channels
            for ch in chans:
                layers.append(SNConv2d(in_ch, ch, 3, stride=2, padding=1, spectral_norm=sn))
                layers.append(nn.GroupNorm(8 if ch % 8 == 0 else 1, ch))
                layers.append(nn.ReLU())
                in_ch = ch
            self.trunk = nn.Sequential(*layers)
            self.fc2 = SNLinear(chans[-1], arch.c_feature_dim, spectral_norm=sn)
        self.out = SNLinear(arch.c_feature_dim, arch.k, spectral_norm=sn)

    def features(self, x):
        ClusteringNetwork.forward_count += 1
        if self.trunk is None:
            h = F.relu(self.fc1(x))
        else:
            h = self.trunk(x)
            h = h.mean(dim=(2, 3))
        return F.relu(self.fc2(h))

    def logits(self, x):
        return self.out(self.features(x))

    def forward(self, x):
        return F.softmax(self.logits(x), dim=1)


def _orthogonal_matrix(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    rows, cols = shape[0], int(np.prod(shape[1:]))
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(q[:rows, :cols]).reshape(shape)


def initialize_network(net: nn.Module, rng: np.random.Generator, scheme: str) -> None:
    """Fill weights in registration order from ``rng``.

    ``scheme`` is ``orthogonal`` (generator/discriminator) or ``fan_in``
    (clustering network). Conditional batch-norm gain/bias maps start at
    zero so normalization begins as identity-affine, and power-iteration
    state vectors get normalized Gaussian starts.
    """
    cbn_linears = set()
    for m in net.modules():
        if isinstance(m, ConditionalBatchNorm2d):
            for lin in (m.gain, m.bias):
                nn.init.zeros_(lin.weight)
                nn.init.zeros_(lin.bias)
                cbn_linears.add(id(lin))
    with torch.no_grad():
        for m in net.modules():
            if id(m) in cbn_linears:
                continue
            if isinstance(m, (nn.Linear, nn.Conv2d)):
                shape = tuple(m.weight.shape)
                if scheme == "orthogonal":
                    w = _orthogonal_matrix(rng, shape)
                else:
                    fan_in = int(np.prod(shape[1:]))
                    w = rng.standard_normal(shape) / math.sqrt(fan_in)
                m.weight.copy_(torch.from_numpy(w).to(m.weight.dtype))
                if m.bias is not None:
                    nn.init.zeros_(m.bias)
            if isinstance(m, (SNLinear, SNConv2d)) and m.sn_enabled:
                u = rng.standard_normal(m.weight_u.shape[0])
                u = u / max(np.linalg.norm(u), 1e-12)
                m.weight_u.copy_(torch.from_numpy(u).to(m.weight_u.dtype))


def build_networks(arch: ModelConfig, mode: str, rng: np.random.Generator):
    """Construct (generator, discriminator, clustering) for a training mode.

    The clustering network exists only in self-labeled mode; unconditional
    mode builds label-free G and D (no embedding modules anywhere).
    """
    conditional = mode in ("cgan", "slcgan")
    if arch.family == "mlp":
        g = MLPGenerator(arch, conditional)
        d = MLPDiscriminator(arch, conditional)
    else:
        g = ConvGenerator(arch, conditional)
        d = ConvDiscriminator(arch, conditional)
    initialize_network(g, rng, "orthogonal")
    initialize_network(d, rng, "orthogonal")
    c = None
    if mode == "slcgan":
        c = ClusteringNetwork(arch)
        initialize_network(c, rng, "fan_in")
    return g, d, c

"""Pluggable feature extractors backing the Fréchet and inception-style scores.

The classifier those scores were defined around is an external asset, so
the metric code only requires a deterministic map from inputs to feature
vectors and class-probability vectors. Desk-scale runs use a fixed-seed
random projection network or the raw inputs; a trained clustering network
can also serve as the extractor. Scores are only comparable within one
fixed extractor.
"""

import numpy as np
import torch
import torch.nn as nn

from .errors import ConfigError
from .models.networks import ClusteringNetwork

_BATCH = 256


class FeatureExtractor:
    """Deterministic map from a data batch to features and class probabilities."""

    feature_dim: int
    num_classes: int

    def features(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def class_probs(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class IdentityFeatures(FeatureExtractor):
    """Flattened inputs as features; probabilities via a fixed random head."""

    def __init__(self, data_shape: tuple[int, ...], num_classes: int = 10, seed: int = 0):
        self.feature_dim = int(np.prod(data_shape))
        self.num_classes = num_classes
        rng = np.random.Generator(np.random.PCG64(seed))
        self._head = rng.standard_normal((self.feature_dim, num_classes)) / np.sqrt(self.feature_dim)

    def features(self, x):
        return np.asarray(x, dtype=np.float64).reshape(len(x), -1)

    def class_probs(self, x):
        return _softmax(self.features(x) @ self._head)


class RandomConvFeatures(FeatureExtractor):
    """Fixed-seed random convolutional projector for image batches."""

    def __init__(self, data_shape: tuple[int, ...], feature_dim: int = 64,
                 num_classes: int = 10, seed: int = 0):
        if len(data_shape) != 3:
            raise ConfigError("random_conv extractor needs image-shaped data")
        channels = data_shape[0]
        self.feature_dim = feature_dim
        self.num_classes = num_classes
        rng = np.random.Generator(np.random.PCG64(seed))
        self._net = nn.Sequential(
            nn.Conv2d(channels, 32, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(32, 64, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(64, feature_dim, 3, stride=2, padding=1), nn.ReLU(),
            nn.AdaptiveAvgPool2d(1), nn.Flatten(),
        )
        self._head = nn.Linear(feature_dim, num_classes)
        with torch.no_grad():
            for m in list(self._net.modules()) + [self._head]:
                if isinstance(m, (nn.Conv2d, nn.Linear)):
                    fan_in = int(np.prod(m.weight.shape[1:]))
                    w = rng.standard_normal(tuple(m.weight.shape)) / np.sqrt(fan_in)
                    m.weight.copy_(torch.from_numpy(w).float())
                    nn.init.zeros_(m.bias)
        self._net.eval()
        self._head.eval()

    def _forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        feats, logits = [], []
        with torch.no_grad():
            for start in range(0, len(x), _BATCH):
                batch = torch.as_tensor(np.asarray(x[start:start + _BATCH]), dtype=torch.float32)
                f = self._net(batch)
                feats.append(f.numpy().astype(np.float64))
                logits.append(self._head(f).numpy().astype(np.float64))
        return np.concatenate(feats), np.concatenate(logits)

    def features(self, x):
        return self._forward(x)[0]

    def class_probs(self, x):
        return _softmax(self._forward(x)[1])


class ClusteringFeatures(FeatureExtractor):
    """Adapter exposing a trained clustering network as an extractor."""

    def __init__(self, net: ClusteringNetwork):
        self._net = net
        self.feature_dim = net.feature_dim
        self.num_classes = net.k

    def _batches(self, x):
        for start in range(0, len(x), _BATCH):
            yield torch.as_tensor(np.asarray(x[start:start + _BATCH]), dtype=torch.float32)

    def features(self, x):
        was_training = self._net.training
        self._net.eval()
        try:
            with torch.no_grad():
                out = [self._net.features(b).numpy().astype(np.float64) for b in self._batches(x)]
        finally:
            self._net.train(was_training)
        return np.concatenate(out)

    def class_probs(self, x):
        was_training = self._net.training
        self._net.eval()
        try:
            with torch.no_grad():
                out = [self._net(b).numpy().astype(np.float64) for b in self._batches(x)]
        finally:
            self._net.train(was_training)
        return np.concatenate(out)


def build_feature_extractor(name: str, data_shape: tuple[int, ...],
                            clustering_net: ClusteringNetwork | None = None) -> FeatureExtractor:
    """Resolve an eval.feature_extractor setting to an extractor instance."""
    if name == "none":
        raise ConfigError(
            "this metric needs a feature extractor; set eval.feature_extractor "
            "(identity, random_conv, or clustering)")
    if name == "identity":
        return IdentityFeatures(data_shape)
    if name == "random_conv":
        return RandomConvFeatures(data_shape)
    if name == "clustering":
        if clustering_net is None:
            raise ConfigError("feature extractor 'clustering' needs a checkpoint with a clustering network")
        return ClusteringFeatures(clustering_net)
    raise ConfigError(f"unknown feature extractor {name!r}")

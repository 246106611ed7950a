import numpy as np
import pytest
import torch

from slcgan.data import make_rng
from slcgan.errors import ConfigError
from slcgan.features import (
    ClusteringFeatures,
    IdentityFeatures,
    RandomConvFeatures,
    build_feature_extractor,
)
from slcgan.models import ModelConfig, build_networks


def test_identity_features_flatten_inputs():
    ex = IdentityFeatures((3, 4, 4))
    x = make_rng(0).standard_normal((5, 3, 4, 4))
    feats = ex.features(x)
    assert feats.shape == (5, 48)
    assert np.array_equal(feats, x.reshape(5, -1))
    probs = ex.class_probs(x)
    assert probs.shape == (5, 10)
    assert np.allclose(probs.sum(axis=1), 1.0)


def test_identity_on_points():
    ex = IdentityFeatures((2,))
    pts = make_rng(1).standard_normal((7, 2))
    assert np.array_equal(ex.features(pts), pts)


def test_random_conv_deterministic():
    ex1 = RandomConvFeatures((3, 16, 16), feature_dim=32)
    ex2 = RandomConvFeatures((3, 16, 16), feature_dim=32)
    x = make_rng(2).standard_normal((4, 3, 16, 16)).astype(np.float32)
    f1, f2 = ex1.features(x), ex2.features(x)
    assert f1.shape == (4, 32)
    assert np.array_equal(f1, f2)
    assert np.array_equal(ex1.class_probs(x), ex2.class_probs(x))


def test_random_conv_rejects_points():
    with pytest.raises(ConfigError, match="image"):
        RandomConvFeatures((2,))


def test_clustering_adapter_matches_network():
    arch = ModelConfig(family="mlp", k=4, d_z=8, embed_dim=4, width=16,
                       c_width=8, c_feature_dim=8)
    _, _, c = build_networks(arch, "slcgan", make_rng(3))
    ex = ClusteringFeatures(c)
    assert ex.feature_dim == 8 and ex.num_classes == 4
    x = make_rng(4).standard_normal((6, 2)).astype(np.float32)
    c.eval()
    with torch.no_grad():
        expected_probs = c(torch.as_tensor(x)).numpy()
        expected_feats = c.features(torch.as_tensor(x)).numpy()
    assert np.allclose(ex.class_probs(x), expected_probs)
    assert np.allclose(ex.features(x), expected_feats)


def test_registry_errors_name_the_missing_component():
    with pytest.raises(ConfigError, match="feature extractor"):
        build_feature_extractor("none", (2,))
    with pytest.raises(ConfigError, match="clustering"):
        build_feature_extractor("clustering", (2,), clustering_net=None)


def test_registry_builds_by_name():
    assert isinstance(build_feature_extractor("identity", (2,)), IdentityFeatures)
    assert isinstance(build_feature_extractor("random_conv", (3, 8, 8)), RandomConvFeatures)

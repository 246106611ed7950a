from .layers import ConditionalBatchNorm2d, LabelEmbedding
from .networks import (
    ClusteringNetwork,
    ConvDiscriminator,
    ConvGenerator,
    MLPDiscriminator,
    MLPGenerator,
    ModelConfig,
    ScorePair,
    build_networks,
    initialize_network,
    model_config_from_run,
)
from .spectral import SNConv2d, SNLinear, spectral_normalize

__all__ = [
    "ClusteringNetwork",
    "ConditionalBatchNorm2d",
    "ConvDiscriminator",
    "ConvGenerator",
    "LabelEmbedding",
    "MLPDiscriminator",
    "MLPGenerator",
    "ModelConfig",
    "SNConv2d",
    "SNLinear",
    "ScorePair",
    "build_networks",
    "initialize_network",
    "model_config_from_run",
    "spectral_normalize",
]

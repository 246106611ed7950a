"""Run configuration.

Config files are flat, human-readable ``key = value`` text with dotted
section prefixes::

    run.mode = slcgan
    model.family = mlp
    data.gmm_centers = ring:8:1.0

Lines starting with ``#`` (or anything after an inline ``#``) are comments.
Every key is validated against the schema below; unknown keys are rejected
by name.  A few model defaults depend on ``model.family`` and are resolved
when the config is built, so the resolved config written back to a run
directory always contains concrete values for every key.
"""

import hashlib
from dataclasses import dataclass, fields

from .errors import ConfigError

MODES = ("ugan", "cgan", "slcgan")
FAMILIES = ("mlp", "conv")
DATA_SOURCES = ("gmm", "dir", "mnist")
FEATURE_EXTRACTORS = ("none", "identity", "random_conv", "clustering")
IMAGE_SIZES = (8, 16, 32, 64)


@dataclass
class RunConfig:
    """Fully resolved configuration for one run.

    Attribute names map 1:1 onto dotted config keys (see ``_SCHEMA``).
    """

    # run.*
    mode: str = "slcgan"
    seed: int = 0
    deterministic: bool = True
    device: str = "cpu"
    out_dir: str = "runs/run"
    total_iterations: int = 1000
    batch_size: int = 256
    checkpoint_every: int = 0
    sample_every: int = 0
    eval_every: int = 0
    # train.*
    learning_rate: float = 1e-4
    beta1: float = 0.0
    beta2: float = 0.999
    d_steps_per_g: int = 2
    lambda_adv: float = 1.0
    lambda_mi: float = 1.0
    lambda_aug: float = 1.0
    mi_updates_c: bool = False
    # model.*
    family: str = "conv"
    k: int = 10
    d_z: int = -1
    embed_dim: int = -1
    width: int = -1
    image_size: int = 32
    image_channels: int = 3
    c_width: int = -1
    c_feature_dim: int = -1
    sn_g: bool = True
    sn_d: bool = True
    sn_c: bool = False
    # data.*
    data_source: str = "gmm"
    data_path: str = ""
    data_size: int = 8192
    gmm_centers: str = "ring:8:1.0"
    gmm_sigma: float = 0.05
    gmm_weights: str = "uniform"
    # augment.*
    crop_low: float = 0.8
    crop_high: float = 1.0
    jitter: float = 0.4
    hflip: float = -1.0
    # eval.*
    feature_extractor: str = "none"
    fid_samples: int = 10000
    is_splits: int = 1
    probe_test_fraction: float = 0.25
    coverage_samples: int = 10000


# key -> (attribute, type tag, choices or None)
_SCHEMA = {
    "run.mode": ("mode", "choice", MODES),
    "run.seed": ("seed", "int", None),
    "run.deterministic": ("deterministic", "bool", None),
    "run.device": ("device", "str", None),
    "run.out_dir": ("out_dir", "str", None),
    "run.total_iterations": ("total_iterations", "int", None),
    "run.batch_size": ("batch_size", "int", None),
    "run.checkpoint_every": ("checkpoint_every", "int", None),
    "run.sample_every": ("sample_every", "int", None),
    "run.eval_every": ("eval_every", "int", None),
    "train.learning_rate": ("learning_rate", "float", None),
    "train.beta1": ("beta1", "float", None),
    "train.beta2": ("beta2", "float", None),
    "train.d_steps_per_g": ("d_steps_per_g", "int", None),
    "train.lambda_adv": ("lambda_adv", "float", None),
    "train.lambda_mi": ("lambda_mi", "float", None),
    "train.lambda_aug": ("lambda_aug", "float", None),
    "train.mi_updates_c": ("mi_updates_c", "bool", None),
    "model.family": ("family", "choice", FAMILIES),
    "model.k": ("k", "int", None),
    "model.d_z": ("d_z", "int", None),
    "model.embed_dim": ("embed_dim", "int", None),
    "model.width": ("width", "int", None),
    "model.image_size": ("image_size", "int", None),
    "model.image_channels": ("image_channels", "int", None),
    "model.c_width": ("c_width", "int", None),
    "model.c_feature_dim": ("c_feature_dim", "int", None),
    "model.spectral_norm_g": ("sn_g", "bool", None),
    "model.spectral_norm_d": ("sn_d", "bool", None),
    "model.spectral_norm_c": ("sn_c", "bool", None),
    "data.source": ("data_source", "choice", DATA_SOURCES),
    "data.path": ("data_path", "str", None),
    "data.size": ("data_size", "int", None),
    "data.gmm_centers": ("gmm_centers", "str", None),
    "data.gmm_sigma": ("gmm_sigma", "float", None),
    "data.gmm_weights": ("gmm_weights", "str", None),
    "augment.crop_low": ("crop_low", "float", None),
    "augment.crop_high": ("crop_high", "float", None),
    "augment.jitter": ("jitter", "float", None),
    "augment.hflip": ("hflip", "float", None),
    "eval.feature_extractor": ("feature_extractor", "choice", FEATURE_EXTRACTORS),
    "eval.fid_samples": ("fid_samples", "int", None),
    "eval.is_splits": ("is_splits", "int", None),
    "eval.probe_test_fraction": ("probe_test_fraction", "float", None),
    "eval.coverage_samples": ("coverage_samples", "int", None),
}

_ATTR_TO_KEY = {attr: key for key, (attr, _, _) in _SCHEMA.items()}

# model.* defaults that depend on model.family (conv, mlp)
_FAMILY_DEFAULTS = {
    "d_z": (128, 8),
    "embed_dim": (128, 16),
    "width": (32, 128),
    "c_width": (32, 64),
    "c_feature_dim": (128, 64),
}


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines into a raw string dict.

    Raises ConfigError for malformed lines, unknown keys, and duplicates.
    """
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown config key '{key}'")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate config key '{key}'")
        raw[key] = value
    return raw


def _convert(key: str, value: str):
    _, kind, choices = _SCHEMA[key]
    if kind == "int":
        try:
            return int(value)
        except ValueError:
            raise ConfigError(f"{key}: expected integer, got {value!r}") from None
    if kind == "float":
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"{key}: expected number, got {value!r}") from None
    if kind == "bool":
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected true/false, got {value!r}")
    if kind == "choice":
        if value not in choices:
            raise ConfigError(f"{key}: must be one of {choices}, got {value!r}")
    return value


def build_config(raw: dict[str, str], overrides: dict[str, object] | None = None) -> RunConfig:
    """Convert raw strings into a validated RunConfig with defaults resolved.

    ``overrides`` maps attribute names (e.g. from CLI flags) onto final
    values and is applied after the file contents.
    """
    cfg = RunConfig()
    for key, value in raw.items():
        setattr(cfg, _SCHEMA[key][0], _convert(key, value))
    for attr, value in (overrides or {}).items():
        if not hasattr(cfg, attr):
            raise ConfigError(f"unknown config attribute '{attr}'")
        setattr(cfg, attr, value)
    _resolve_defaults(cfg)
    validate_config(cfg)
    return cfg


def load_config(path: str, overrides: dict[str, object] | None = None) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return build_config(parse_config_text(text), overrides)


def _resolve_defaults(cfg: RunConfig) -> None:
    idx = 0 if cfg.family == "conv" else 1
    for attr, values in _FAMILY_DEFAULTS.items():
        if getattr(cfg, attr) < 0:
            setattr(cfg, attr, values[idx])
    if cfg.hflip < 0:
        # flips change digit identity, so digit-like datasets default to none
        cfg.hflip = 0.0 if cfg.data_source == "mnist" else 0.5


def validate_config(cfg: RunConfig) -> None:
    def require(cond: bool, key: str, why: str):
        if not cond:
            raise ConfigError(f"{key}: {why} (got {getattr(cfg, _SCHEMA[key][0])!r})")

    require(cfg.seed >= 0, "run.seed", "must be >= 0")
    require(cfg.total_iterations >= 0, "run.total_iterations", "must be >= 0")
    require(cfg.batch_size >= 1, "run.batch_size", "must be >= 1")
    require(cfg.checkpoint_every >= 0, "run.checkpoint_every", "must be >= 0")
    require(cfg.sample_every >= 0, "run.sample_every", "must be >= 0")
    require(cfg.eval_every >= 0, "run.eval_every", "must be >= 0")
    require(cfg.learning_rate > 0, "train.learning_rate", "must be > 0")
    require(0 <= cfg.beta1 < 1, "train.beta1", "must be in [0, 1)")
    require(0 <= cfg.beta2 < 1, "train.beta2", "must be in [0, 1)")
    require(cfg.d_steps_per_g >= 1, "train.d_steps_per_g", "must be >= 1")
    require(cfg.lambda_adv >= 0, "train.lambda_adv", "must be >= 0")
    require(cfg.lambda_mi >= 0, "train.lambda_mi", "must be >= 0")
    require(cfg.lambda_aug >= 0, "train.lambda_aug", "must be >= 0")
    require(cfg.k >= 1, "model.k", "must be >= 1")
    require(cfg.d_z >= 1, "model.d_z", "must be >= 1")
    require(cfg.embed_dim >= 1, "model.embed_dim", "must be >= 1")
    require(cfg.width >= 1, "model.width", "must be >= 1")
    require(cfg.c_width >= 1, "model.c_width", "must be >= 1")
    require(cfg.c_feature_dim >= 1, "model.c_feature_dim", "must be >= 1")
    require(cfg.image_size in IMAGE_SIZES, "model.image_size", f"must be one of {IMAGE_SIZES}")
    require(cfg.image_channels >= 1, "model.image_channels", "must be >= 1")
    require(cfg.data_size >= 1, "data.size", "must be >= 1")
    require(cfg.gmm_sigma > 0, "data.gmm_sigma", "must be > 0")
    require(0 < cfg.crop_low <= cfg.crop_high <= 1, "augment.crop_low",
            "crop range must satisfy 0 < low <= high <= 1")
    require(cfg.jitter >= 0, "augment.jitter", "must be >= 0")
    require(0 <= cfg.hflip <= 1, "augment.hflip", "must be in [0, 1]")
    require(cfg.fid_samples >= 2, "eval.fid_samples", "must be >= 2")
    require(cfg.is_splits >= 1, "eval.is_splits", "must be >= 1")
    require(0 < cfg.probe_test_fraction < 1, "eval.probe_test_fraction", "must be in (0, 1)")
    require(cfg.coverage_samples >= 1, "eval.coverage_samples", "must be >= 1")
    if cfg.data_source in ("dir", "mnist") and cfg.family == "mlp":
        raise ConfigError("model.family: mlp family requires data.source = gmm")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_to_text(cfg: RunConfig, *, include_out_dir: bool = True) -> str:
    """Serialize a resolved config back into canonical key = value text."""
    lines = []
    for f in fields(cfg):
        key = _ATTR_TO_KEY[f.name]
        if not include_out_dir and key == "run.out_dir":
            continue
        lines.append(f"{key} = {_format_value(getattr(cfg, f.name))}")
    return "\n".join(sorted(lines)) + "\n"


def config_hash(cfg: RunConfig) -> str:
    """Hash of the resolved config, excluding the output directory."""
    text = config_to_text(cfg, include_out_dir=False)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()

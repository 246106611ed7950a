"""Priors, augmentation, the synthetic Gaussian-mixture benchmark, and
dataset ingestion.

All randomness flows through explicit ``numpy.random.Generator`` objects so
every sampling operation is reproducible under a fixed seed and the full
generator state can be serialized into checkpoints.
"""

import gzip
import math
import os
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Optional

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .errors import ConfigError, IngestionError

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")
DATA_ROOT_ENV = "SLCGAN_DATA_ROOT"


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def derive_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for a side stream (dataset, eval, exports).

    Keeps artifact exports from perturbing the training stream, so cadence
    settings never change the trajectory.
    """
    seq = np.random.SeedSequence(seed, spawn_key=tuple(stream))
    return np.random.Generator(np.random.PCG64(seq))


class ConditioningCode(NamedTuple):
    """Cluster indices with their one-hot encodings."""

    index: np.ndarray   # (n,) int64 in [0, K)
    onehot: np.ndarray  # (n, K) float64, exactly one 1.0 per row


def sample_latent(n: int, d_z: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n i.i.d. standard-normal latent codes of dimension d_z."""
    if n < 1 or d_z < 1:
        raise ValueError("sample_latent requires n >= 1 and d_z >= 1")
    return rng.standard_normal((n, d_z))


def sample_condition(n: int, k: int, rng: np.random.Generator) -> ConditioningCode:
    """Draw n cluster ids uniformly over [0, K) with one-hot encodings."""
    if n < 1 or k < 1:
        raise ValueError("sample_condition requires n >= 1 and k >= 1")
    index = rng.integers(0, k, size=n)
    onehot = np.zeros((n, k), dtype=np.float64)
    onehot[np.arange(n), index] = 1.0
    return ConditioningCode(index=index.astype(np.int64), onehot=onehot)


def onehot_from_index(index: np.ndarray, k: int) -> np.ndarray:
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= k):
        raise ValueError(f"cluster index out of range [0, {k})")
    onehot = np.zeros((index.shape[0], k), dtype=np.float64)
    onehot[np.arange(index.shape[0]), index] = 1.0
    return onehot


@dataclass
class AugmentationPolicy:
    """Random crop / color jitter / horizontal flip settings.

    ``crop_scale`` bounds the retained fraction of image area (aspect ratio
    fixed, crops resized back). ``jitter_strength`` s draws brightness,
    contrast, and saturation multipliers from [1-s, 1+s]; for 2D point
    batches it is instead the standard deviation of additive Gaussian
    noise (crop and flip do not apply to points).
    """

    crop_scale: tuple[float, float] = (0.8, 1.0)
    jitter_strength: float = 0.4
    hflip_prob: float = 0.5

    def __post_init__(self):
        lo, hi = self.crop_scale
        if not (0 < lo <= hi <= 1):
            raise ConfigError(f"crop_scale must satisfy 0 < low <= high <= 1, got {self.crop_scale}")
        if self.jitter_strength < 0:
            raise ConfigError("jitter_strength must be >= 0")
        if not (0 <= self.hflip_prob <= 1):
            raise ConfigError("hflip_prob must be in [0, 1]")


def identity_policy() -> AugmentationPolicy:
    return AugmentationPolicy(crop_scale=(1.0, 1.0), jitter_strength=0.0, hflip_prob=0.0)


def _augment_images(x: torch.Tensor, policy: AugmentationPolicy,
                    rng: np.random.Generator) -> torch.Tensor:
    b, c, h, w = x.shape
    out = x
    lo, hi = policy.crop_scale
    if (lo, hi) != (1.0, 1.0):
        pieces = []
        for i in range(b):
            side = math.sqrt(rng.uniform(lo, hi))
            ch = int(round(h * side))
            cw = int(round(w * side))
            if ch < 1 or cw < 1:
                raise ValueError(f"crop window {ch}x{cw} degenerates below 1 pixel")
            top = int(rng.integers(0, h - ch + 1))
            left = int(rng.integers(0, w - cw + 1))
            crop = out[i:i + 1, :, top:top + ch, left:left + cw]
            if (ch, cw) != (h, w):
                crop = F.interpolate(crop, size=(h, w), mode="bilinear", align_corners=False)
            pieces.append(crop)
        out = torch.cat(pieces, dim=0)
    s = policy.jitter_strength
    if s > 0:
        x01 = (out + 1.0) * 0.5
        def factors():
            f = rng.uniform(1.0 - s, 1.0 + s, size=b)
            return torch.as_tensor(f, dtype=x.dtype).view(b, 1, 1, 1)
        x01 = x01 * factors()
        mean = x01.mean(dim=(1, 2, 3), keepdim=True)
        x01 = (x01 - mean) * factors() + mean
        if c == 3:
            luma = (0.299 * x01[:, 0:1] + 0.587 * x01[:, 1:2] + 0.114 * x01[:, 2:3])
            x01 = luma + (x01 - luma) * factors()
        out = x01.clamp(0.0, 1.0) * 2.0 - 1.0
    if policy.hflip_prob > 0:
        flips = rng.random(b) < policy.hflip_prob
        if flips.any():
            out = out.clone()
            idx = torch.as_tensor(np.nonzero(flips)[0])
            out[idx] = torch.flip(out[idx], dims=[-1])
    return out.clamp(-1.0, 1.0)


def _augment_points(x: torch.Tensor, policy: AugmentationPolicy,
                    rng: np.random.Generator) -> torch.Tensor:
    if policy.jitter_strength <= 0:
        return x.clone()
    noise = rng.normal(0.0, policy.jitter_strength, size=tuple(x.shape))
    return x + torch.as_tensor(noise, dtype=x.dtype)


def augment(x: torch.Tensor, policy: AugmentationPolicy,
            rng: np.random.Generator) -> torch.Tensor:
    """Random multiple-view transform T.

    Image batches (rank 4, values in [-1, 1]) get crop/jitter/flip and are
    clipped back into range; 2D point batches (rank 2) get additive
    Gaussian noise only. The identity policy returns the input values
    unchanged bit for bit.
    """
    if x.dim() == 4:
        return _augment_images(x, policy, rng)
    if x.dim() == 2:
        return _augment_points(x, policy, rng)
    raise ValueError(f"augment expects rank-2 points or rank-4 images, got rank {x.dim()}")


@dataclass
class GaussianMixtureSpec:
    """Isotropic Gaussian mixture over 2D points."""

    centers: np.ndarray          # (k, 2)
    sigma: float
    weights: Optional[np.ndarray] = None  # (k,), sums to 1; None = uniform

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64)
        if self.centers.ndim != 2 or self.centers.shape[1] != 2 or self.centers.shape[0] < 1:
            raise ConfigError("GaussianMixtureSpec needs two-dimensional centers")
        if self.sigma <= 0:
            raise ConfigError("GaussianMixtureSpec sigma must be > 0")
        if self.weights is None:
            self.weights = np.full(len(self.centers), 1.0 / len(self.centers))
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (len(self.centers),):
            raise ConfigError("weights must have one entry per center")
        if abs(self.weights.sum() - 1.0) > 1e-9 or (self.weights < 0).any():
            raise ConfigError("weights must be nonnegative and sum to 1")

    @property
    def n_modes(self) -> int:
        return len(self.centers)


def ring_spec(k: int, radius: float, sigma: float) -> GaussianMixtureSpec:
    """k equally weighted modes evenly spaced on a circle."""
    angles = 2.0 * np.pi * np.arange(k) / k
    centers = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return GaussianMixtureSpec(centers=centers, sigma=sigma)


def gmm_spec_from_config(cfg) -> GaussianMixtureSpec:
    """Build the mixture described by data.gmm_* config keys.

    ``data.gmm_centers`` is either ``ring:<k>:<radius>`` or a semicolon
    list of ``x,y`` pairs; ``data.gmm_weights`` is ``uniform`` or a comma
    list summing to 1.
    """
    text = cfg.gmm_centers.strip()
    if text.startswith("ring:"):
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"data.gmm_centers: expected ring:<k>:<radius>, got {text!r}")
        try:
            k, radius = int(parts[1]), float(parts[2])
        except ValueError:
            raise ConfigError(f"data.gmm_centers: bad ring spec {text!r}") from None
        centers = ring_spec(k, radius, cfg.gmm_sigma).centers
    else:
        try:
            centers = np.array([[float(v) for v in pair.split(",")]
                                for pair in text.split(";") if pair.strip()])
        except ValueError:
            raise ConfigError(f"data.gmm_centers: cannot parse {text!r}") from None
    if cfg.gmm_weights.strip() == "uniform":
        weights = None
    else:
        try:
            weights = np.array([float(v) for v in cfg.gmm_weights.split(",")])
        except ValueError:
            raise ConfigError(f"data.gmm_weights: cannot parse {cfg.gmm_weights!r}") from None
    return GaussianMixtureSpec(centers=centers, sigma=cfg.gmm_sigma, weights=weights)


def augmentation_from_config(cfg) -> AugmentationPolicy:
    return AugmentationPolicy(crop_scale=(cfg.crop_low, cfg.crop_high),
                              jitter_strength=cfg.jitter, hflip_prob=cfg.hflip)


def gmm_sample(spec: GaussianMixtureSpec, n: int,
               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw n points from the mixture; returns (points, component labels)."""
    labels = rng.choice(spec.n_modes, size=n, p=spec.weights)
    points = spec.centers[labels] + rng.normal(0.0, spec.sigma, size=(n, 2))
    return points, labels.astype(np.int64)


@dataclass
class Dataset:
    """In-memory dataset with optional ground-truth labels."""

    kind: str                      # gmm | dir | mnist
    data: np.ndarray               # (N, 2) points or (N, C, H, W) images, float32 in [-1, 1] for images
    labels: Optional[np.ndarray]   # (N,) int64 or None
    data_shape: tuple[int, ...]
    gmm_spec: Optional[GaussianMixtureSpec] = None

    @property
    def n(self) -> int:
        return len(self.data)

    @property
    def n_classes(self) -> Optional[int]:
        if self.labels is None:
            return None
        return int(self.labels.max()) + 1


def iterate_batches(dataset: Dataset, batch_size: int, rng: np.random.Generator,
                    shuffle: bool = True, drop_last: bool = True) -> Iterator:
    """One epoch of (batch, labels-or-None) pairs.

    The order is a fresh permutation from ``rng`` each call; the final
    partial batch is dropped so batch statistics stay uniform.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = rng.permutation(dataset.n) if shuffle else np.arange(dataset.n)
    end = dataset.n - dataset.n % batch_size if drop_last else dataset.n
    for start in range(0, end, batch_size):
        idx = order[start:start + batch_size]
        labels = dataset.labels[idx] if dataset.labels is not None else None
        yield dataset.data[idx], labels


def _resolve_data_path(path: str) -> str:
    if os.path.exists(path):
        return path
    root = os.environ.get(DATA_ROOT_ENV)
    if root:
        candidate = os.path.join(root, path)
        if os.path.exists(candidate):
            return candidate
    raise IngestionError(f"dataset path not found: {path}"
                         + (f" (also tried under ${DATA_ROOT_ENV})" if root else ""))


def load_image_file(path: str) -> np.ndarray:
    """Decode one raster file to float32 (C, H, W) in [-1, 1]."""
    try:
        with Image.open(path) as img:
            if img.mode not in ("L", "RGB"):
                img = img.convert("RGB")
            arr = np.asarray(img, dtype=np.float32)
    except OSError as exc:
        raise IngestionError(f"cannot decode image {path}: {exc}") from exc
    if arr.ndim == 2:
        arr = arr[None, :, :]
    else:
        arr = arr.transpose(2, 0, 1)
    return arr / 255.0 * 2.0 - 1.0


def load_image_directory(path: str) -> Dataset:
    """Load a directory of images.

    One subdirectory per class gives a labeled dataset (class name = sorted
    directory name); a flat directory of files gives an unlabeled one.
    """
    path = _resolve_data_path(path)
    subdirs = sorted(d for d in os.listdir(path)
                     if os.path.isdir(os.path.join(path, d)))
    images, labels = [], []
    if subdirs:
        for label, sub in enumerate(subdirs):
            for name in sorted(os.listdir(os.path.join(path, sub))):
                if name.lower().endswith(IMAGE_EXTENSIONS):
                    images.append(load_image_file(os.path.join(path, sub, name)))
                    labels.append(label)
        label_arr = np.asarray(labels, dtype=np.int64)
    else:
        for name in sorted(os.listdir(path)):
            if name.lower().endswith(IMAGE_EXTENSIONS):
                images.append(load_image_file(os.path.join(path, name)))
        label_arr = None
    if not images:
        raise IngestionError(f"no decodable images under {path}")
    shapes = {img.shape for img in images}
    if len(shapes) != 1:
        raise IngestionError(f"inconsistent image sizes under {path}: {sorted(shapes)}")
    data = np.stack(images).astype(np.float32)
    return Dataset(kind="dir", data=data, labels=label_arr, data_shape=data.shape[1:])


def _read_idx(path: str) -> np.ndarray:
    opener = gzip.open if path.endswith(".gz") else open
    try:
        with opener(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    magic = int.from_bytes(raw[0:4], "big")
    ndim = magic & 0xFF
    dims = [int.from_bytes(raw[4 + 4 * i:8 + 4 * i], "big") for i in range(ndim)]
    return np.frombuffer(raw, dtype=np.uint8, offset=4 + 4 * ndim).reshape(dims)


def load_mnist(path: str, limit: int = 0) -> Dataset:
    """Load MNIST from IDX files (optionally gzipped) under ``path``.

    28x28 digits are zero-padded to 32x32 (background value -1) so they fit
    the power-of-two convolutional families.
    """
    path = _resolve_data_path(path)
    def find(stem):
        for name in (stem, stem + ".gz"):
            candidate = os.path.join(path, name)
            if os.path.exists(candidate):
                return candidate
        raise IngestionError(f"missing MNIST file {stem} under {path}")
    images = _read_idx(find("train-images-idx3-ubyte"))
    labels = _read_idx(find("train-labels-idx1-ubyte")).astype(np.int64)
    if limit:
        images, labels = images[:limit], labels[:limit]
    data = images.astype(np.float32) / 255.0 * 2.0 - 1.0
    data = np.pad(data[:, None, :, :], ((0, 0), (0, 0), (2, 2), (2, 2)),
                  constant_values=-1.0)
    return Dataset(kind="mnist", data=data, labels=labels, data_shape=data.shape[1:])


def open_dataset(cfg, rng: np.random.Generator) -> Dataset:
    """Materialize the dataset described by the data.* config keys."""
    if cfg.data_source == "gmm":
        spec = gmm_spec_from_config(cfg)
        points, labels = gmm_sample(spec, cfg.data_size, rng)
        return Dataset(kind="gmm", data=points.astype(np.float32), labels=labels,
                       data_shape=(2,), gmm_spec=spec)
    if cfg.data_source == "dir":
        return load_image_directory(cfg.data_path)
    if cfg.data_source == "mnist":
        return load_mnist(cfg.data_path or "mnist", limit=cfg.data_size)
    raise ConfigError(f"unknown data source {cfg.data_source!r}")

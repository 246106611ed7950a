"""Evaluation metrics for the generator and the learned clustering.

Covers the Fréchet distance between feature Gaussians, the
inception-style exp-KL score, permutation-matched clustering accuracy,
purity, cluster-length histograms with a k-means baseline, a linear
separability probe, and mode coverage on synthetic 2D mixtures.

Everything here is a pure float64 function of its inputs. Fréchet/IS
values depend on the feature extractor that produced the inputs and are
comparable only within one fixed extractor.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .data import GaussianMixtureSpec

EIG_FLOOR = -1e-6  # eigenvalues below this are treated as genuinely negative
FRECHET_FLOOR = -1e-6

PROBE_EPOCHS = 500
PROBE_LR = 0.1
PROBE_DECAY_EPOCH = 250  # learning rate drops to a tenth here
KMEANS_MAX_ITER = 300


@dataclass
class GaussianStats:
    """Sample mean and unbiased covariance of a feature cloud."""

    mean: np.ndarray
    cov: np.ndarray
    count: int

    @property
    def dim(self) -> int:
        return len(self.mean)


def gaussian_stats(features: np.ndarray) -> GaussianStats:
    """Fit mean and unbiased covariance to (n, d) features; needs n >= 2."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValueError("features must be a rank-2 array")
    n = features.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 samples for covariance, got {n}")
    mean = features.mean(axis=0)
    centered = features - mean
    cov = centered.T @ centered / (n - 1)
    cov = (cov + cov.T) * 0.5
    return GaussianStats(mean=mean, cov=cov, count=n)


def sqrtm_psd(matrix: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix via eigendecomposition.

    Eigenvalues in [-1e-6, 0) are clipped to zero; anything lower means
    the input was not PSD and raises.
    """
    sym = (matrix + matrix.T) * 0.5
    vals, vecs = np.linalg.eigh(sym)
    if vals.min() < EIG_FLOOR:
        raise ValueError(f"matrix is not positive semi-definite (min eigenvalue {vals.min():g})")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def product_matrix_sqrt(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Square root S of the product of two SPD matrices, with S @ S = a @ b.

    Uses the similarity a^(1/2) (a^(1/2) b a^(1/2))^(1/2) a^(-1/2), which
    keeps every eigendecomposition symmetric. Requires ``a`` invertible.
    """
    a_half = sqrtm_psd(a)
    inner = sqrtm_psd(a_half @ b @ a_half)
    return a_half @ inner @ np.linalg.inv(a_half)


def _trace_product_sqrt(a: np.ndarray, b: np.ndarray) -> float:
    # tr((a b)^(1/2)) without ever inverting: similar matrices share a spectrum
    a_half = sqrtm_psd(a)
    sym = a_half @ b @ a_half
    vals = np.linalg.eigvalsh((sym + sym.T) * 0.5)
    if vals.min() < EIG_FLOOR:
        raise ValueError("covariance product has a significantly negative spectrum")
    return float(np.sqrt(np.clip(vals, 0.0, None)).sum())


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """Fréchet distance between two Gaussians:
    |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)).

    Tiny negative results from rounding are clamped to zero.
    """
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    diff = a.mean - b.mean
    value = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov)
                  - 2.0 * _trace_product_sqrt(a.cov, b.cov))
    if value < FRECHET_FLOOR:
        raise ValueError(f"Fréchet distance came out significantly negative ({value:g})")
    return max(value, 0.0)


def inception_style_score(class_probs: np.ndarray, splits: int = 1) -> tuple[float, float]:
    """exp of the mean KL divergence between per-sample class posteriors and
    the split marginal; returns (mean, std) across splits.

    The sample set is divided evenly into ``splits`` chunks (remainder
    dropped). Scores always land in [1, number of classes].
    """
    probs = np.asarray(class_probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise ValueError("class_probs must be a nonempty rank-2 array")
    if splits < 1:
        raise ValueError("splits must be >= 1")
    per_split = probs.shape[0] // splits
    if per_split < 1:
        raise ValueError(f"cannot divide {probs.shape[0]} samples into {splits} splits")
    scores = []
    for s in range(splits):
        part = probs[s * per_split:(s + 1) * per_split]
        marginal = part.mean(axis=0)
        # wherever p > 0 the split marginal is positive too; 0 log 0 = 0
        log_p = np.log(np.where(part > 0, part, 1.0))
        log_m = np.log(np.where(marginal > 0, marginal, 1.0))
        kl = np.where(part > 0, part * (log_p - log_m), 0.0).sum(axis=1)
        scores.append(float(np.exp(kl.mean())))
    return float(np.mean(scores)), float(np.std(scores))


@dataclass
class ContingencyTable:
    """K x J count matrix between predicted clusters and ground-truth classes."""

    counts: np.ndarray  # (K, J) int64
    n: int

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def j(self) -> int:
        return self.counts.shape[1]


def build_contingency(assignments: np.ndarray, labels: np.ndarray,
                      k: Optional[int] = None, j: Optional[int] = None) -> ContingencyTable:
    assignments = np.asarray(assignments, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if assignments.shape != labels.shape:
        raise ValueError("assignments and labels must have equal length")
    k = k if k is not None else int(assignments.max()) + 1
    j = j if j is not None else int(labels.max()) + 1
    counts = np.zeros((k, j), dtype=np.int64)
    np.add.at(counts, (assignments, labels), 1)
    return ContingencyTable(counts=counts, n=len(assignments))


def clustering_accuracy(table: ContingencyTable) -> float:
    """Accuracy under the best injective cluster-to-class assignment.

    Solved by optimal linear assignment, which matches brute-force
    permutation search on square tables. K > J has no injective map and
    raises.
    """
    if table.k > table.j:
        raise ValueError(f"no injective assignment from {table.k} clusters to {table.j} classes")
    rows, cols = linear_sum_assignment(-table.counts)
    matched = int(table.counts[rows, cols].sum())
    return matched / table.n


def purity(table: ContingencyTable) -> float:
    """Fraction of points belonging to their cluster's most frequent class."""
    if table.n < 1:
        raise ValueError("purity needs at least one sample")
    return float(table.counts.max(axis=1).sum() / table.n)


def cluster_histogram(assignments: np.ndarray, k: int) -> np.ndarray:
    """Per-cluster sample counts, including zeros for empty clusters."""
    assignments = np.asarray(assignments, dtype=np.int64)
    if assignments.size and (assignments.min() < 0 or assignments.max() >= k):
        raise ValueError(f"assignments out of range [0, {k})")
    return np.bincount(assignments, minlength=k).astype(np.int64)


def _farthest_point_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = np.empty((k, x.shape[1]), dtype=np.float64)
    centers[0] = x[int(rng.integers(0, len(x)))]
    dist = ((x - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        centers[i] = x[int(dist.argmax())]
        dist = np.minimum(dist, ((x - centers[i]) ** 2).sum(axis=1))
    return centers


def kmeans(features: np.ndarray, k: int, rng: np.random.Generator,
           max_iter: int = KMEANS_MAX_ITER) -> np.ndarray:
    """Lloyd's algorithm with greedy farthest-point seeding.

    Runs until the assignment is a fixpoint or the iteration cap; empty
    clusters are reseeded at the point farthest from its center.
    Deterministic under the seed of ``rng``.
    """
    x = np.asarray(features, dtype=np.float64)
    n = len(x)
    if k > n:
        raise ValueError(f"k={k} exceeds number of points {n}")
    centers = _farthest_point_init(x, k, rng)
    assign = None
    for _ in range(max_iter):
        d2 = cdist(x, centers, metric="sqeuclidean")
        new_assign = d2.argmin(axis=1)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        own = d2[np.arange(n), assign]
        for j in range(k):
            mask = assign == j
            if mask.any():
                centers[j] = x[mask].mean(axis=0)
            else:
                centers[j] = x[int(own.argmax())]
    return assign.astype(np.int64)


def linear_probe(features: np.ndarray, labels: np.ndarray, test_fraction: float,
                 rng: np.random.Generator) -> float:
    """Held-out accuracy of a single linear layer trained with softmax
    cross-entropy by full-batch gradient descent.

    The optimization budget is fixed (500 epochs, lr 0.1 dropping to 0.01
    halfway) so the probe is a stable artifact metric; there is no hidden
    layer and no normalization anywhere. Raises if a class is missing from
    the training split.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    n = len(x)
    n_test = int(round(n * test_fraction))
    if n_test < 1 or n - n_test < 1:
        raise ValueError("split leaves an empty train or test set")
    perm = rng.permutation(n)
    test_idx, train_idx = perm[:n_test], perm[n_test:]
    classes = np.unique(y)
    if len(classes) < 2:
        raise ValueError("linear_probe needs at least 2 classes")
    missing = np.setdiff1d(classes, np.unique(y[train_idx]))
    if missing.size:
        raise ValueError(f"classes {missing.tolist()} absent from the training split")
    n_classes = int(y.max()) + 1
    xtr, ytr = x[train_idx], y[train_idx]
    w = np.zeros((n_classes, x.shape[1]))
    b = np.zeros(n_classes)
    onehot = np.zeros((len(ytr), n_classes))
    onehot[np.arange(len(ytr)), ytr] = 1.0
    for epoch in range(PROBE_EPOCHS):
        lr = PROBE_LR if epoch < PROBE_DECAY_EPOCH else PROBE_LR * 0.1
        logits = xtr @ w.T + b
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        grad = (p - onehot) / len(ytr)
        w -= lr * grad.T @ xtr
        b -= lr * grad.sum(axis=0)
    pred = (x[test_idx] @ w.T + b).argmax(axis=1)
    return float((pred == y[test_idx]).mean())


@dataclass
class ModeCoverage:
    """Coverage of a Gaussian mixture by a generated point cloud."""

    covered: int                      # modes with >= coverage_fraction of samples within the radius
    covered_mask: np.ndarray          # (n_modes,) bool
    within_fraction: np.ndarray       # (n_modes,) fraction of samples within the radius of each center
    purity: Optional[float]           # cluster-id -> nearest-mode purity, when generation ids are known
    table: Optional[ContingencyTable]


def mode_coverage(points: np.ndarray, spec: GaussianMixtureSpec,
                  gen_labels: Optional[np.ndarray] = None,
                  coverage_fraction: float = 0.01,
                  radius_sigmas: float = 3.0) -> ModeCoverage:
    """Count mixture modes reached by a sample cloud.

    A mode is covered when at least ``coverage_fraction`` of the samples
    fall within ``radius_sigmas * sigma`` of its center. When the cluster
    ids used at generation time are supplied, the purity of the
    (generation id -> nearest mode) contingency table is also reported.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be (n, 2)")
    dist = cdist(pts, spec.centers)
    within = dist <= radius_sigmas * spec.sigma
    within_fraction = within.mean(axis=0)
    covered_mask = within_fraction >= coverage_fraction
    table = None
    pur = None
    if gen_labels is not None:
        nearest = dist.argmin(axis=1)
        table = build_contingency(np.asarray(gen_labels), nearest,
                                  k=int(np.asarray(gen_labels).max()) + 1, j=spec.n_modes)
        pur = purity(table)
    return ModeCoverage(covered=int(covered_mask.sum()), covered_mask=covered_mask,
                        within_fraction=within_fraction, purity=pur, table=table)

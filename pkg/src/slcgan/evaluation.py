"""Checkpoint evaluation: runs requested metrics and writes report files.

Outputs per evaluation: a CSV of (iteration, metric, value) rows appended
to ``<out>/metrics.csv``, a ``summary.json`` snapshot, and per-histogram
``(cluster id, count)`` CSVs for plotting.
"""

import json
import os

import numpy as np
import torch

from .config import RunConfig
from .data import Dataset
from .errors import ConfigError
from .features import build_feature_extractor
from .metrics import (
    build_contingency,
    cluster_histogram,
    clustering_accuracy,
    gaussian_stats,
    frechet_distance,
    inception_style_score,
    kmeans,
    linear_probe,
    mode_coverage,
    purity,
)
from .trainer import generate_samples

METRIC_NAMES = ("fid", "is", "accuracy", "purity", "histogram", "kmeans", "probe",
                "mode_coverage")
_NEEDS_CLUSTERING = {"accuracy", "purity", "histogram", "kmeans", "probe"}
_NEEDS_LABELS = {"accuracy", "purity", "probe"}


def cluster_probs(c, data: np.ndarray, batch: int = 256) -> np.ndarray:
    was_training = c.training
    c.eval()
    try:
        with torch.no_grad():
            out = [c(torch.as_tensor(data[i:i + batch], dtype=torch.float32)).numpy()
                   for i in range(0, len(data), batch)]
    finally:
        c.train(was_training)
    return np.concatenate(out).astype(np.float64)


def cluster_features(c, data: np.ndarray, batch: int = 256) -> np.ndarray:
    was_training = c.training
    c.eval()
    try:
        with torch.no_grad():
            out = [c.features(torch.as_tensor(data[i:i + batch], dtype=torch.float32)).numpy()
                   for i in range(0, len(data), batch)]
    finally:
        c.train(was_training)
    return np.concatenate(out).astype(np.float64)


def _write_histogram_csv(path: str, counts: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("cluster_id,count\n")
        for cid, count in enumerate(counts):
            fh.write(f"{cid},{int(count)}\n")


def default_metric_names(config: RunConfig, dataset: Dataset, has_clustering: bool) -> list[str]:
    """Cheap metric set for periodic in-training evaluation."""
    names = []
    if has_clustering:
        names.append("histogram")
        if dataset.labels is not None:
            names.append("purity")
            if config.k <= dataset.n_classes:
                names.append("accuracy")
    if dataset.gmm_spec is not None:
        names.append("mode_coverage")
    return names


def run_evaluation(config: RunConfig, g, c, dataset: Dataset, metric_names,
                   out_dir: str, iteration: int, rng: np.random.Generator) -> dict:
    """Compute the requested metrics for one checkpoint.

    Raises ConfigError when a metric's requirements are not met (missing
    labels, missing clustering network, no feature extractor configured).
    """
    metric_names = list(metric_names)
    for name in metric_names:
        if name not in METRIC_NAMES:
            raise ConfigError(f"unknown metric {name!r}; choose from {METRIC_NAMES}")
        if name in _NEEDS_CLUSTERING and c is None:
            raise ConfigError(f"metric '{name}' needs a clustering network "
                              f"(mode {config.mode} has none)")
        if name in _NEEDS_LABELS and dataset.labels is None:
            raise ConfigError(f"metric '{name}' requires ground-truth labels, "
                              "but the dataset is unlabeled")
        if name == "accuracy" and dataset.labels is not None and config.k > dataset.n_classes:
            raise ConfigError(
                f"metric 'accuracy' needs k <= class count for an injective match "
                f"({config.k} > {dataset.n_classes}); use 'purity' when overclustering")
        if name == "mode_coverage" and dataset.gmm_spec is None:
            raise ConfigError("metric 'mode_coverage' only applies to synthetic mixture datasets")
    os.makedirs(out_dir, exist_ok=True)
    conditional = config.mode in ("cgan", "slcgan")
    summary: dict[str, float] = {}

    assignments = None
    if any(n in _NEEDS_CLUSTERING for n in metric_names):
        assignments = cluster_probs(c, dataset.data).argmax(axis=1)

    if "accuracy" in metric_names or "purity" in metric_names:
        table = build_contingency(assignments, dataset.labels,
                                  k=config.k, j=dataset.n_classes)
        if "accuracy" in metric_names:
            summary["accuracy"] = clustering_accuracy(table)
        if "purity" in metric_names:
            summary["purity"] = purity(table)

    if "histogram" in metric_names:
        counts = cluster_histogram(assignments, config.k)
        _write_histogram_csv(os.path.join(out_dir, "histogram.csv"), counts)
        summary["histogram"] = int((counts > 0).sum())

    if "kmeans" in metric_names:
        feats = cluster_features(c, dataset.data)
        km = kmeans(feats, config.k, rng)
        _write_histogram_csv(os.path.join(out_dir, "kmeans_histogram.csv"),
                             cluster_histogram(km, config.k))
        summary["kmeans"] = int((cluster_histogram(km, config.k) > 0).sum())
        if dataset.labels is not None:
            summary["kmeans_purity"] = purity(
                build_contingency(km, dataset.labels, k=config.k, j=dataset.n_classes))

    if "probe" in metric_names:
        feats = cluster_features(c, dataset.data)
        summary["probe"] = linear_probe(feats, dataset.labels,
                                        config.probe_test_fraction, rng)

    if "fid" in metric_names or "is" in metric_names:
        extractor = build_feature_extractor(config.feature_extractor,
                                            tuple(dataset.data_shape), clustering_net=c)
        n_gen = config.fid_samples
        fake, _ = generate_samples(g, config.d_z, config.k, conditional, n_gen, rng)
        if "fid" in metric_names:
            real = dataset.data[:n_gen]
            summary["fid"] = frechet_distance(gaussian_stats(extractor.features(real)),
                                              gaussian_stats(extractor.features(fake)))
        if "is" in metric_names:
            mean, std = inception_style_score(extractor.class_probs(fake), config.is_splits)
            summary["is"] = mean
            summary["is_std"] = std

    if "mode_coverage" in metric_names:
        samples, gen_ids = generate_samples(g, config.d_z, config.k, conditional,
                                            config.coverage_samples, rng)
        coverage = mode_coverage(samples, dataset.gmm_spec, gen_labels=gen_ids)
        summary["mode_coverage"] = coverage.covered
        if coverage.purity is not None:
            summary["mode_purity"] = coverage.purity

    csv_path = os.path.join(out_dir, "metrics.csv")
    fresh = not os.path.exists(csv_path) or os.path.getsize(csv_path) == 0
    with open(csv_path, "a", encoding="utf-8") as fh:
        if fresh:
            fh.write("iteration,metric,value\n")
        for name in sorted(summary):
            fh.write(f"{iteration},{name},{repr(float(summary[name]))}\n")
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump({"iteration": iteration, **{k: summary[k] for k in sorted(summary)}},
                  fh, indent=2)
        fh.write("\n")
    return summary

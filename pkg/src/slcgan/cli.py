"""Command-line entry points.

    slcgan train          --config run.cfg [--out DIR] [--seed N] [--deterministic]
    slcgan eval           --checkpoint CKPT --metrics a,b,c [--config FILE] [--out DIR]
    slcgan sample         --checkpoint CKPT [--rows R] [--cols C] [--out DIR]
    slcgan resample       --checkpoint CKPT --image FILE [--n N] [--out DIR]
    slcgan cluster-export --checkpoint CKPT [--clusters ids|all] [--top-n N] [--out DIR]

Exit codes: 0 success, 1 validation error (bad config, flags, or inputs),
2 runtime or numeric failure. ``SLCGAN_DATA_ROOT`` is consulted as a
fallback root for dataset paths.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np
import torch

from .config import build_config, config_to_text, load_config, parse_config_text
from .data import derive_rng, load_image_file, onehot_from_index, open_dataset, sample_latent
from .errors import CheckpointError, ConfigError, DivergenceError, IngestionError
from .evaluation import cluster_probs, default_metric_names, run_evaluation
from .imaging import image_grid, image_strip, point_scatter, save_png
from .trainer import Trainer, load_networks

log = logging.getLogger(__name__)

GENERATION_POOL = 40   # candidate pool per generated cluster panel
DEFAULT_TOP_N = 8
DEFAULT_RESAMPLE_N = 10

# rng side-stream ids (never the bare training stream)
_STREAM_DATA, _STREAM_EVAL, _STREAM_SAMPLE, _STREAM_RESAMPLE, _STREAM_EXPORT = 1, 2, 3, 4, 5


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with code 2; remap to validation
        raise ConfigError(message)


def _default_out(checkpoint_path: str, sub: str) -> str:
    parent = os.path.dirname(os.path.abspath(checkpoint_path))
    if os.path.basename(parent) == "checkpoints":
        return os.path.join(os.path.dirname(parent), sub)
    return os.path.join(os.getcwd(), sub)


def _apply_eval_overrides(config, path: str):
    """Merge a config file over a checkpoint's embedded config.

    Only data/eval/augment keys and run.seed may change; architecture and
    mode are pinned by the checkpoint.
    """
    with open(path, "r", encoding="utf-8") as fh:
        overrides = parse_config_text(fh.read())
    allowed = ("data.", "eval.", "augment.", "run.seed", "run.batch_size")
    for key in overrides:
        if not key.startswith(allowed):
            raise ConfigError(f"{key}: cannot be overridden at evaluation time "
                              "(architecture is pinned by the checkpoint)")
    merged = parse_config_text(config_to_text(config))
    merged.update(overrides)
    return build_config(merged)


def _export_samples(trainer: Trainer, tag: str):
    cfg = trainer.config
    rng = derive_rng(cfg.seed, _STREAM_EXPORT, trainer.iteration)
    out_dir = os.path.join(trainer.run_dir, "samples")
    if cfg.family == "mlp":
        points, ids = trainer.generate(2048, rng)
        save_png(point_scatter(points, ids), os.path.join(out_dir, f"scatter_{tag}.png"))
        return
    rows = min(cfg.k, 8) if trainer.conditional else 8
    cols = 8
    images = _conditional_grid_images(trainer.g, cfg, trainer.conditional, rows, cols, rng)
    save_png(image_grid(images, rows, cols), os.path.join(out_dir, f"grid_{tag}.png"))


def _conditional_grid_images(g, cfg, conditional: bool, rows: int, cols: int,
                             rng: np.random.Generator) -> np.ndarray:
    n = rows * cols
    z = torch.as_tensor(sample_latent(n, cfg.d_z, rng), dtype=torch.float32)
    label = None
    if conditional:
        ids = np.repeat(np.arange(rows, dtype=np.int64), cols)
        label = torch.as_tensor(onehot_from_index(ids, cfg.k), dtype=torch.float32)
    was_training = g.training
    g.eval()
    try:
        with torch.no_grad():
            images = g(z, label).numpy()
    finally:
        g.train(was_training)
    return images


def _make_hooks(trainer: Trainer):
    cfg = trainer.config
    hooks = []
    if cfg.sample_every:
        def sample_hook(tr):
            if tr.iteration % cfg.sample_every == 0:
                _export_samples(tr, f"{tr.iteration:07d}")
        hooks.append(sample_hook)
    if cfg.eval_every:
        def eval_hook(tr):
            if tr.iteration % cfg.eval_every == 0:
                names = default_metric_names(cfg, tr.dataset, tr.c is not None)
                if names:
                    run_evaluation(cfg, tr.g, tr.c, tr.dataset, names,
                                   os.path.join(tr.run_dir, "eval"), tr.iteration,
                                   derive_rng(cfg.seed, _STREAM_EVAL, tr.iteration))
        hooks.append(eval_hook)
    return hooks


def cmd_train(args) -> None:
    overrides = {}
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.deterministic is not None:
        overrides["deterministic"] = args.deterministic
    cfg = load_config(args.config, overrides)
    dataset = open_dataset(cfg, derive_rng(cfg.seed, _STREAM_DATA))
    trainer = Trainer(cfg, dataset, run_dir=cfg.out_dir)
    trainer.train_loop(hooks=_make_hooks(trainer))
    _export_samples(trainer, "final")
    print(cfg.out_dir)


def cmd_eval(args) -> None:
    config, g, _, c, iteration = load_networks(args.checkpoint)
    if args.config:
        config = _apply_eval_overrides(config, args.config)
    seed = args.seed if args.seed is not None else config.seed
    metric_names = [m.strip() for m in args.metrics.split(",") if m.strip()]
    if not metric_names:
        raise ConfigError("--metrics: expected a comma-separated metric list")
    dataset = open_dataset(config, derive_rng(seed, _STREAM_DATA))
    out_dir = args.out or _default_out(args.checkpoint, "eval")
    summary = run_evaluation(config, g, c, dataset, metric_names, out_dir, iteration,
                             derive_rng(seed, _STREAM_EVAL))
    print(json.dumps(summary, sort_keys=True))


def cmd_sample(args) -> None:
    config, g, _, _, iteration = load_networks(args.checkpoint)
    conditional = config.mode in ("cgan", "slcgan")
    if conditional and args.rows > config.k:
        raise ConfigError(f"--rows: {args.rows} exceeds the model's cluster count {config.k}")
    seed = args.seed if args.seed is not None else config.seed
    rng = derive_rng(seed, _STREAM_SAMPLE)
    out_dir = args.out or _default_out(args.checkpoint, "samples")
    os.makedirs(out_dir, exist_ok=True)
    if config.family == "mlp":
        n = args.rows * args.cols
        z = torch.as_tensor(sample_latent(n, config.d_z, rng), dtype=torch.float32)
        ids = None
        label = None
        if conditional:
            ids = np.repeat(np.arange(args.rows, dtype=np.int64), args.cols)
            label = torch.as_tensor(onehot_from_index(ids, config.k), dtype=torch.float32)
        with torch.no_grad():
            points = g(z, label).numpy()
        path = os.path.join(out_dir, "scatter.png")
        save_png(point_scatter(points, ids), path)
    else:
        images = _conditional_grid_images(g, config, conditional, args.rows, args.cols, rng)
        path = os.path.join(out_dir, "grid.png")
        save_png(image_grid(images, args.rows, args.cols), path)
    meta = {"mode": config.mode, "rows": args.rows, "cols": args.cols, "seed": seed,
            "iteration": iteration, "conditioned": conditional}
    if not conditional:
        meta["note"] = "unconditional checkpoint: rows are unconditioned draws"
    with open(os.path.join(out_dir, "grid.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(path)


def cmd_resample(args) -> None:
    config, g, _, c, _ = load_networks(args.checkpoint)
    if config.family != "conv":
        raise ConfigError("resampling needs an image-family checkpoint")
    if c is None:
        raise ConfigError(f"resampling needs a clustering network; mode {config.mode} has none")
    image = load_image_file(args.image)
    expected = (config.image_channels, config.image_size, config.image_size)
    if tuple(image.shape) != expected:
        raise ConfigError(f"input image shape {tuple(image.shape)} does not match "
                          f"the model's {expected}")
    with torch.no_grad():
        probs = c(torch.as_tensor(image[None], dtype=torch.float32))[0].numpy()
    cluster_id = int(probs.argmax())
    confidence = float(probs[cluster_id])
    seed = args.seed if args.seed is not None else config.seed
    rng = derive_rng(seed, _STREAM_RESAMPLE)
    z = torch.as_tensor(sample_latent(args.n, config.d_z, rng), dtype=torch.float32)
    label = torch.as_tensor(onehot_from_index(np.full(args.n, cluster_id), config.k),
                            dtype=torch.float32)
    with torch.no_grad():
        outputs = g(z, label).numpy()
    out_dir = args.out or _default_out(args.checkpoint, "samples")
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "resample.png")
    save_png(image_strip(outputs), path)
    with open(os.path.join(out_dir, "resample.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"cluster = {cluster_id}\n")
        fh.write(f"confidence = {confidence!r}\n")
        fh.write(f"n = {args.n}\n")
        fh.write(f"conditioning = all {args.n} samples conditioned on cluster {cluster_id}\n")
    print(path)


def export_cluster_panels(config, g, c, dataset, cluster_ids, top_n: int, out_dir: str,
                          rng: np.random.Generator) -> dict[int, dict]:
    """Write per-cluster real and generated panels ranked by confidence.

    Real panels take the top-n member images by the clustering confidence
    on their cluster; generated panels draw a 40-sample pool conditioned on
    the cluster and keep the top-n the same way. Empty clusters are skipped
    with a logged notice. Returns the kept confidences per cluster.
    """
    os.makedirs(out_dir, exist_ok=True)
    all_probs = cluster_probs(c, dataset.data)
    assignments = all_probs.argmax(axis=1)
    report: dict[int, dict] = {}
    for cid in cluster_ids:
        mask = assignments == cid
        if not mask.any():
            log.warning("cluster %d is empty; panel skipped", cid)
            continue
        member_idx = np.nonzero(mask)[0]
        order = np.argsort(-all_probs[member_idx, cid], kind="stable")
        keep = member_idx[order][:top_n]
        real_conf = all_probs[keep, cid]
        save_png(image_strip(dataset.data[keep]),
                 os.path.join(out_dir, f"cluster_{cid:04d}_real.png"))
        z = torch.as_tensor(sample_latent(GENERATION_POOL, config.d_z, rng),
                            dtype=torch.float32)
        label = torch.as_tensor(onehot_from_index(np.full(GENERATION_POOL, cid), config.k),
                                dtype=torch.float32)
        with torch.no_grad():
            pool = g(z, label).numpy()
        pool_conf = cluster_probs(c, pool)[:, cid]
        gen_order = np.argsort(-pool_conf, kind="stable")[:top_n]
        save_png(image_strip(pool[gen_order]),
                 os.path.join(out_dir, f"cluster_{cid:04d}_generated.png"))
        with open(os.path.join(out_dir, f"cluster_{cid:04d}.txt"), "w", encoding="utf-8") as fh:
            fh.write("real_confidence = " + ",".join(repr(float(v)) for v in real_conf) + "\n")
            fh.write("generated_confidence = "
                     + ",".join(repr(float(v)) for v in pool_conf[gen_order]) + "\n")
            fh.write(f"pool = {GENERATION_POOL}\n")
        report[cid] = {"real_confidence": real_conf.tolist(),
                       "generated_confidence": pool_conf[gen_order].tolist()}
    return report


def cmd_cluster_export(args) -> None:
    config, g, _, c, _ = load_networks(args.checkpoint)
    if c is None:
        raise ConfigError(f"cluster export needs a clustering network; mode {config.mode} has none")
    if config.family != "conv":
        raise ConfigError("cluster export needs an image-family checkpoint")
    if args.config:
        config = _apply_eval_overrides(config, args.config)
    if args.clusters.strip() == "all":
        cluster_ids = list(range(config.k))
    else:
        try:
            cluster_ids = [int(v) for v in args.clusters.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"--clusters: expected ids or 'all', got {args.clusters!r}") from None
        bad = [cid for cid in cluster_ids if not 0 <= cid < config.k]
        if bad:
            raise ConfigError(f"--clusters: ids {bad} outside [0, {config.k})")
    seed = args.seed if args.seed is not None else config.seed
    dataset = open_dataset(config, derive_rng(seed, _STREAM_DATA))
    out_dir = args.out or _default_out(args.checkpoint, "clusters")
    report = export_cluster_panels(config, g, c, dataset, cluster_ids, args.top_n, out_dir,
                                   derive_rng(seed, _STREAM_EXPORT))
    print(json.dumps({"clusters": sorted(report), "out": out_dir}, sort_keys=True))


def _build_parser() -> _Parser:
    parser = _Parser(prog="slcgan", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, checkpoint=False):
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the run seed")
        if checkpoint:
            p.add_argument("--checkpoint", required=True, help="checkpoint file")

    p_train = sub.add_parser("train", help="train a model from a config file")
    p_train.add_argument("--config", required=True, help="key = value config file")
    p_train.add_argument("--deterministic", action=argparse.BooleanOptionalAction,
                         default=None, help="override run.deterministic")
    common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--metrics", required=True,
                        help="comma-separated list, e.g. purity,accuracy,histogram")
    p_eval.add_argument("--config", default=None,
                        help="optional config file overriding data/eval keys")
    common(p_eval, checkpoint=True)
    p_eval.set_defaults(func=cmd_eval)

    p_sample = sub.add_parser("sample", help="write a conditional sample grid")
    p_sample.add_argument("--rows", type=int, default=8,
                          help="number of cluster rows (cluster ids 0..rows-1)")
    p_sample.add_argument("--cols", type=int, default=8, help="latent draws per row")
    common(p_sample, checkpoint=True)
    p_sample.set_defaults(func=cmd_sample)

    p_resample = sub.add_parser("resample", help="regenerate instances of an input's cluster")
    p_resample.add_argument("--image", required=True, help="input image file")
    p_resample.add_argument("--n", type=int, default=DEFAULT_RESAMPLE_N,
                            help="number of regenerated samples")
    common(p_resample, checkpoint=True)
    p_resample.set_defaults(func=cmd_resample)

    p_export = sub.add_parser("cluster-export", help="write ranked real/generated cluster panels")
    p_export.add_argument("--clusters", default="all", help="comma-separated ids or 'all'")
    p_export.add_argument("--top-n", type=int, default=DEFAULT_TOP_N, dest="top_n",
                          help="panel size")
    p_export.add_argument("--config", default=None,
                          help="optional config file overriding data/eval keys")
    common(p_export, checkpoint=True)
    p_export.set_defaults(func=cmd_cluster_export)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) is None:
            parser.print_help(sys.stderr)
            return 1
        args.func(args)
        return 0
    except (ConfigError, IngestionError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DivergenceError, ValueError, RuntimeError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

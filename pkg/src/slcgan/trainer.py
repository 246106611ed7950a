"""Three-network adversarial training loop.

Each iteration runs a configurable number of discriminator updates, one
generator update on freshly drawn latents and conditioning codes, and (in
self-labeled mode) one clustering update on a fresh real batch. Every
update touches exactly one network's parameters:

* the discriminator trains the split hinge loss against real pairs
  (image, clustering probabilities) and fake pairs (generated image,
  one-hot code), with generator and clustering outputs held constant;
* the generator descends the negated fake scores plus the label-recovery
  loss, whose gradient reaches it through the generated image while the
  clustering parameters stay fixed;
* the clustering network descends the real joint score through the label
  input of the discriminator plus the augmentation-consistency loss, and
  is therefore only ever updated via real images.

All randomness comes from a single serializable numpy generator, so a
checkpoint restores a run bit for bit.
"""

import hashlib
import math
import os

import numpy as np
import torch

from .checkpoint import read_checkpoint, write_checkpoint
from .config import RunConfig, config_to_text
from .data import (
    Dataset,
    augment,
    augmentation_from_config,
    make_rng,
    sample_condition,
    sample_latent,
)
from .errors import ConfigError, DivergenceError
from .losses import (
    LossBreakdown,
    aug_consistency_loss,
    c_adv_loss,
    d_hinge_loss,
    g_adv_loss,
    mi_loss,
)
from .models.networks import build_networks, model_config_from_run

CSV_HEADER = "iteration,d_hinge,g_adv,g_mi,c_adv,c_aug"


def generate_samples(g, d_z: int, k: int, conditional: bool, n: int,
                     rng: np.random.Generator, device="cpu", batch: int = 512):
    """Draw n samples from the generator in eval mode.

    Returns (samples, conditioning indices or None); conditioning codes are
    drawn from the uniform prior.
    """
    was_training = g.training
    g.eval()
    outs, ids = [], []
    try:
        with torch.no_grad():
            done = 0
            while done < n:
                m = min(batch, n - done)
                z = torch.as_tensor(sample_latent(m, d_z, rng), dtype=torch.float32,
                                    device=device)
                label = None
                if conditional:
                    cond = sample_condition(m, k, rng)
                    ids.append(cond.index)
                    label = torch.as_tensor(cond.onehot, dtype=torch.float32, device=device)
                outs.append(g(z, label).cpu().numpy())
                done += m
    finally:
        g.train(was_training)
    samples = np.concatenate(outs)
    return samples, (np.concatenate(ids) if conditional else None)


class Trainer:
    """Owns the networks, optimizers, RNG stream, and run-directory layout."""

    def __init__(self, config: RunConfig, dataset: Dataset, run_dir: str | None = None):
        self.config = config
        self.dataset = dataset
        self.device = torch.device(config.device)
        self._validate_dataset()
        self.rng = make_rng(config.seed)
        self.arch = model_config_from_run(config)
        self.g, self.d, self.c = build_networks(self.arch, config.mode, self.rng)
        self.g.to(self.device)
        self.d.to(self.device)
        if self.c is not None:
            self.c.to(self.device)
        betas = (config.beta1, config.beta2)
        self.opt_g = torch.optim.Adam(self.g.parameters(), lr=config.learning_rate, betas=betas)
        self.opt_d = torch.optim.Adam(self.d.parameters(), lr=config.learning_rate, betas=betas)
        self.opt_c = (torch.optim.Adam(self.c.parameters(), lr=config.learning_rate, betas=betas)
                      if self.c is not None else None)
        self.policy = augmentation_from_config(config)
        self.iteration = 0
        self.last_drawn: dict[str, dict[str, np.ndarray]] = {}
        self.run_dir = run_dir
        self._csv = None
        if run_dir is not None:
            self._init_run_dir()

    # ------------------------------------------------------------------ setup

    def _validate_dataset(self):
        cfg = self.config
        if self.dataset.n == 0:
            raise ConfigError("dataset is empty")
        if cfg.batch_size > self.dataset.n:
            raise ConfigError(
                f"run.batch_size: {cfg.batch_size} exceeds dataset size {self.dataset.n}")
        expected = (2,) if cfg.family == "mlp" else (cfg.image_channels, cfg.image_size,
                                                     cfg.image_size)
        if tuple(self.dataset.data_shape) != expected:
            raise ConfigError(
                f"model.family: dataset shape {tuple(self.dataset.data_shape)} does not match "
                f"configured shape {expected}")
        if cfg.mode == "cgan":
            if self.dataset.labels is None:
                raise ConfigError("run.mode: cgan requires a dataset with ground-truth labels")
            if self.dataset.n_classes != cfg.k:
                raise ConfigError(
                    f"model.k: cgan requires k == ground-truth class count "
                    f"({cfg.k} != {self.dataset.n_classes})")

    def _init_run_dir(self):
        for sub in ("checkpoints", "samples", "clusters", "eval"):
            os.makedirs(os.path.join(self.run_dir, sub), exist_ok=True)
        resolved = os.path.join(self.run_dir, "config.resolved")
        with open(resolved, "w", encoding="utf-8") as fh:
            fh.write(config_to_text(self.config))
        csv_path = os.path.join(self.run_dir, "metrics.csv")
        fresh = not os.path.exists(csv_path) or os.path.getsize(csv_path) == 0
        self._csv = open(csv_path, "a", encoding="utf-8")
        if fresh:
            self._csv.write(CSV_HEADER + "\n")
            self._csv.flush()

    @property
    def conditional(self) -> bool:
        return self.config.mode in ("cgan", "slcgan")

    def _named_nets(self):
        nets = [("g", self.g), ("d", self.d)]
        if self.c is not None:
            nets.append(("c", self.c))
        return nets

    def _opts(self):
        opts = {"g": self.opt_g, "d": self.opt_d}
        if self.opt_c is not None:
            opts["c"] = self.opt_c
        return opts

    # ------------------------------------------------------------- sampling

    def _real_batch(self):
        idx = self.rng.choice(self.dataset.n, size=self.config.batch_size, replace=False)
        x = torch.as_tensor(self.dataset.data[idx], dtype=torch.float32, device=self.device)
        labels = self.dataset.labels[idx] if self.dataset.labels is not None else None
        return x, labels

    def _draw_zc(self, n: int):
        z = torch.as_tensor(sample_latent(n, self.config.d_z, self.rng),
                            dtype=torch.float32, device=self.device)
        if not self.conditional:
            return z, None, None
        cond = sample_condition(n, self.config.k, self.rng)
        onehot = torch.as_tensor(cond.onehot, dtype=torch.float32, device=self.device)
        return z, cond, onehot

    def _real_label(self, x, labels):
        """Label vector paired with a real batch: C(x) in self-labeled mode,
        ground-truth one-hots in conditional mode, none otherwise."""
        if self.config.mode == "slcgan":
            with torch.no_grad():
                return self.c(x)
        if self.config.mode == "cgan":
            onehot = np.zeros((len(labels), self.config.k), dtype=np.float32)
            onehot[np.arange(len(labels)), labels] = 1.0
            return torch.as_tensor(onehot, device=self.device)
        return None

    # ---------------------------------------------------------------- steps

    def d_step(self, x: torch.Tensor, labels=None) -> float:
        """One discriminator update on a real batch; returns the hinge value."""
        n = x.shape[0]
        real_label = self._real_label(x, labels)
        with torch.no_grad():
            z, cond, fake_label = self._draw_zc(n)
            fake = self.g(z, fake_label)
        self.last_drawn["d"] = {
            "x": x.detach().cpu().numpy(), "z": z.cpu().numpy(),
            "c": cond.index.copy() if cond is not None else None}
        real_scores = self.d(x, real_label)
        fake_scores = self.d(fake, fake_label)
        loss = d_hinge_loss(real_scores, fake_scores)
        self.opt_d.zero_grad(set_to_none=True)
        (self.config.lambda_adv * loss).backward()
        self.opt_d.step()
        value = float(loss.detach())
        self._check_finite("d_hinge", value, self.d, "d")
        return value

    def g_step(self) -> tuple[float, float]:
        """One generator update on fresh latents; returns (adv, label-recovery)."""
        n = self.config.batch_size
        z, cond, label = self._draw_zc(n)
        self.last_drawn["g"] = {"z": z.cpu().numpy(),
                                "c": cond.index.copy() if cond is not None else None}
        fake = self.g(z, label)
        fake_scores = self.d(fake, label)
        adv = g_adv_loss(fake_scores)
        cfg = self.config
        total = cfg.lambda_adv * adv
        mi_value = 0.0
        if cfg.mode == "slcgan":
            index = torch.as_tensor(cond.index, device=self.device)
            if cfg.lambda_mi > 0:
                mi = mi_loss(self.c(fake), index)
                if cfg.mi_updates_c:
                    # opt-in InfoGAN-style coupling: the recovery loss also trains C
                    self.opt_c.zero_grad(set_to_none=True)
                total = total + cfg.lambda_mi * mi
                mi_value = float(mi.detach())
            else:
                with torch.no_grad():
                    mi_value = float(mi_loss(self.c(fake), index))
        self.opt_g.zero_grad(set_to_none=True)
        total.backward()
        self.opt_g.step()
        if cfg.mode == "slcgan" and cfg.mi_updates_c and cfg.lambda_mi > 0:
            self.opt_c.step()
        adv_value = float(adv.detach())
        self._check_finite("g_adv", adv_value, self.g, "g")
        self._check_finite("g_mi", mi_value, self.g, "g")
        return adv_value, mi_value

    def c_step(self, x: torch.Tensor) -> tuple[float, float]:
        """One clustering update on a fresh real batch; returns (adv, consistency).

        A no-op outside self-labeled mode.
        """
        if self.config.mode != "slcgan":
            return 0.0, 0.0
        self.last_drawn["c"] = {"x": x.detach().cpu().numpy()}
        probs = self.c(x)
        scores = self.d(x, probs)
        adv = c_adv_loss(scores)
        x_t = augment(x, self.policy, self.rng)
        with torch.no_grad():
            q = self.c(x_t)
        aug_loss = aug_consistency_loss(probs, q)
        cfg = self.config
        total = cfg.lambda_adv * adv + cfg.lambda_aug * aug_loss
        self.opt_c.zero_grad(set_to_none=True)
        total.backward()
        self.opt_c.step()
        adv_value, aug_value = float(adv.detach()), float(aug_loss.detach())
        self._check_finite("c_adv", adv_value, self.c, "c")
        self._check_finite("c_aug", aug_value, self.c, "c")
        return adv_value, aug_value

    def train_iteration(self) -> LossBreakdown:
        cfg = self.config
        d_value = 0.0
        for _ in range(cfg.d_steps_per_g):
            x, labels = self._real_batch()
            d_value = self.d_step(x, labels)
        g_adv, g_mi = self.g_step()
        c_adv = c_aug = 0.0
        if cfg.mode == "slcgan":
            x, _ = self._real_batch()
            c_adv, c_aug = self.c_step(x)
        self.iteration += 1
        return LossBreakdown(d_hinge=d_value, g_adv=g_adv, g_mi=g_mi,
                             c_adv=c_adv, c_aug=c_aug,
                             weights=(cfg.lambda_adv, cfg.lambda_mi, cfg.lambda_aug))

    def train_loop(self, hooks=()) -> list[LossBreakdown]:
        """Run until run.total_iterations, logging one CSV row per iteration.

        ``hooks`` are called as hook(trainer) after every iteration; the CLI
        uses them for sample grids and periodic evaluation.
        """
        rows = []
        while self.iteration < self.config.total_iterations:
            row = self.train_iteration()
            rows.append(row)
            self._write_row(row)
            if (self.config.checkpoint_every
                    and self.iteration % self.config.checkpoint_every == 0):
                self.save(os.path.join(self.run_dir, "checkpoints",
                                       f"ckpt_{self.iteration:07d}.bin"))
            for hook in hooks:
                hook(self)
        if self.run_dir is not None:
            self.save(os.path.join(self.run_dir, "checkpoints", "final.bin"))
        return rows

    def _write_row(self, row: LossBreakdown):
        if self._csv is None:
            return
        values = [str(self.iteration)]
        values += [repr(float(getattr(row, name))) for name in LossBreakdown.CSV_FIELDS]
        self._csv.write(",".join(values) + "\n")
        self._csv.flush()

    def _check_finite(self, what: str, value: float, net, name: str):
        if not math.isfinite(value):
            self._diverged(f"{what} is {value}")
        for p in net.parameters():
            if not torch.isfinite(p).all():
                self._diverged(f"non-finite parameter in network {name} after {what} update")

    def _diverged(self, what: str):
        if self.run_dir is not None:
            try:
                self.save(os.path.join(self.run_dir, "checkpoints",
                                       f"diverged_{self.iteration:07d}.bin"))
            except OSError:
                pass
        raise DivergenceError(self.iteration, what)

    # ----------------------------------------------------------- inspection

    def parameter_hashes(self) -> dict[str, str]:
        """SHA-256 of each network's parameter tensors, for isolation checks."""
        out = {}
        for name, net in self._named_nets():
            h = hashlib.sha256()
            for pname, p in sorted(net.named_parameters()):
                h.update(pname.encode("utf-8"))
                h.update(p.detach().cpu().numpy().tobytes())
            out[name] = h.hexdigest()
        return out

    def generate(self, n: int, rng: np.random.Generator):
        return generate_samples(self.g, self.config.d_z, self.config.k,
                                self.conditional, n, rng, device=self.device)

    # ---------------------------------------------------------- persistence

    def state_tensors(self) -> dict[str, torch.Tensor]:
        tensors = {}
        for name, net in self._named_nets():
            for key, t in net.state_dict().items():
                tensors[f"model.{name}.{key}"] = t
        for name, opt in self._opts().items():
            for idx, state in opt.state_dict()["state"].items():
                for field, value in state.items():
                    if not torch.is_tensor(value):
                        value = torch.tensor(float(value), dtype=torch.float64)
                    tensors[f"opt.{name}.{idx}.{field}"] = value
        return tensors

    def save(self, path: str) -> None:
        write_checkpoint(path, self.config, self.iteration, self.state_tensors(),
                         self.rng.bit_generator.state)

    def _restore(self, tensors: dict[str, torch.Tensor], rng_state: dict, iteration: int):
        for name, net in self._named_nets():
            prefix = f"model.{name}."
            state = {key[len(prefix):]: t for key, t in tensors.items()
                     if key.startswith(prefix)}
            net.load_state_dict(state, strict=True)
        for name, opt in self._opts().items():
            prefix = f"opt.{name}."
            per_param: dict[int, dict] = {}
            for key, t in tensors.items():
                if not key.startswith(prefix):
                    continue
                idx_str, field = key[len(prefix):].split(".", 1)
                per_param.setdefault(int(idx_str), {})[field] = t
            sd = opt.state_dict()
            sd["state"] = per_param
            opt.load_state_dict(sd)
        self.rng.bit_generator.state = rng_state
        self.iteration = iteration

    @classmethod
    def load(cls, path: str, dataset: Dataset, run_dir: str | None = None) -> "Trainer":
        """Rebuild a trainer from a checkpoint; continues bit-for-bit."""
        data = read_checkpoint(path)
        trainer = cls(data.config, dataset, run_dir=run_dir)
        trainer._restore(data.tensors, data.rng_state, data.iteration)
        return trainer


def load_networks(path: str):
    """Load a checkpoint for inference only.

    Returns (config, generator, discriminator, clustering-or-None,
    iteration) with all networks in eval mode. No dataset or optimizer
    state is needed.
    """
    data = read_checkpoint(path)
    arch = model_config_from_run(data.config)
    g, d, c = build_networks(arch, data.config.mode, make_rng(data.config.seed))
    named = [("g", g), ("d", d)] + ([("c", c)] if c is not None else [])
    for name, net in named:
        prefix = f"model.{name}."
        state = {key[len(prefix):]: t for key, t in data.tensors.items()
                 if key.startswith(prefix)}
        net.load_state_dict(state, strict=True)
        net.eval()
    return data.config, g, d, c, data.iteration

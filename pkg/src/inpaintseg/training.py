"""Losses and the adversarial training loop for the inpainting network.

Per step: sample a minibatch of healthy slices, erase one random square of
side gamma from each, reconstruct with the generator, then descend
``lambda_rec * L_rec + lambda_adv * L_adv`` for the generator and ascend
``E[log D(x)] + E[log(1 - D(x_hat))]`` for the discriminator, both with the
Adam optimizer. The reconstruction loss covers the full slice, not just the
masked region.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, asdict

import numpy as np
import torch

from .imagedata import as_slice
from .masking import random_mask
from .network import (
    DiscriminatorSpec,
    GeneratorSpec,
    ModelCheckpoint,
    build_discriminator,
    build_generator,
    config_digest,
)

LOG_EPS = 1e-7


@dataclass(frozen=True)
class TrainConfig:
    gamma: int
    batch_size: int = 16
    iterations: int = 30000
    lr_g: float = 1e-4
    lr_d: float = 1e-3
    lambda_rec: float = 50.0
    lambda_adv: float = 1.0
    seed: int = 0
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        for name in ("lr_g", "lr_d", "lambda_rec", "lambda_adv"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def digest(self) -> str:
        return config_digest(asdict(self))


@dataclass(frozen=True)
class TrainRecord:
    iteration: int
    l_rec: float
    l_adv: float
    l_g: float
    l_d: float


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def append(self, record: TrainRecord):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "l_rec", "l_adv", "l_g", "l_d"])
            for r in self.records:
                writer.writerow([r.iteration, repr(r.l_rec), repr(r.l_adv),
                                 repr(r.l_g), repr(r.l_d)])


class DivergenceError(RuntimeError):
    """Raised when a training loss goes non-finite; carries the partial log."""

    def __init__(self, iteration: int, log: TrainLog):
        super().__init__(f"non-finite loss at iteration {iteration}; training aborted")
        self.iteration = iteration
        self.log = log


def _pair(x, x_hat):
    x = torch.as_tensor(x)
    x_hat = torch.as_tensor(x_hat)
    if x.shape != x_hat.shape:
        raise ValueError(f"batch shapes differ: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    return x, x_hat


def reconstruction_loss(x, x_hat) -> torch.Tensor:
    """Mean absolute difference over all pixels and batch entries."""
    x, x_hat = _pair(x, x_hat)
    return torch.mean(torch.abs(x - x_hat))


def _clamped_log(t: torch.Tensor) -> torch.Tensor:
    return torch.log(torch.clamp(t, LOG_EPS, 1.0 - LOG_EPS))


def adversarial_loss_g(d_scores) -> torch.Tensor:
    """Mean log(1 - D(x_hat)); the generator descends this value.

    Scores are clamped to [1e-7, 1 - 1e-7] before the log, which is
    unbounded at the boundaries.
    """
    scores = torch.as_tensor(d_scores)
    return torch.mean(_clamped_log(1.0 - scores))


def generator_objective(l_rec, l_adv, cfg: TrainConfig):
    """Weighted sum lambda_rec * L_rec + lambda_adv * L_adv."""
    return cfg.lambda_rec * l_rec + cfg.lambda_adv * l_adv


def discriminator_loss(real_scores, fake_scores) -> torch.Tensor:
    """Mean log D(x) + mean log(1 - D(x_hat)); the discriminator ascends this."""
    real = torch.as_tensor(real_scores)
    fake = torch.as_tensor(fake_scores)
    return torch.mean(_clamped_log(real)) + torch.mean(_clamped_log(1.0 - fake))


def _stack_dataset(dataset, g_spec: GeneratorSpec) -> np.ndarray:
    slices = [as_slice(s) for s in dataset]
    if not slices:
        raise ValueError("training dataset is empty")
    shape = (g_spec.height, g_spec.width)
    for i, s in enumerate(slices):
        if s.shape != shape:
            raise ValueError(
                f"dataset slice {i} has shape {s.shape}, generator expects {shape}"
            )
    return np.stack(slices)


def train(dataset, g_spec: GeneratorSpec, d_spec: DiscriminatorSpec, cfg: TrainConfig):
    """Run the adversarial training loop on healthy slices in [0, 255].

    Returns (ModelCheckpoint, TrainLog). Deterministic for a fixed config,
    dataset and seed in single-worker mode. Raises DivergenceError (with the
    partial log attached) as soon as any loss is non-finite.
    """
    data = _stack_dataset(dataset, g_spec)
    if cfg.gamma > min(g_spec.width, g_spec.height):
        raise ValueError(f"gamma={cfg.gamma} larger than slice {g_spec.width}x{g_spec.height}")

    master = np.random.default_rng(cfg.seed)
    g_rng, d_rng, sample_rng = master.spawn(3)
    gen = build_generator(g_spec, g_rng)
    disc = build_discriminator(d_spec, d_rng)
    gen.train()
    disc.train()

    opt_g = torch.optim.Adam(gen.parameters(), lr=cfg.lr_g,
                             betas=(cfg.beta1, cfg.beta2), eps=cfg.epsilon)
    opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.lr_d,
                             betas=(cfg.beta1, cfg.beta2), eps=cfg.epsilon)

    log = TrainLog()
    n = len(data)
    for it in range(1, cfg.iterations + 1):
        idx = sample_rng.integers(0, n, size=cfg.batch_size)
        originals = data[idx]
        masked = np.stack([random_mask(s, cfg.gamma, sample_rng)[0] for s in originals])
        x = torch.from_numpy((originals / 255.0).astype(np.float32)).unsqueeze(1)
        x_masked = torch.from_numpy((masked / 255.0).astype(np.float32)).unsqueeze(1)

        x_hat = gen(x_masked)
        l_rec = reconstruction_loss(x, x_hat)
        l_adv = adversarial_loss_g(disc(x_hat))
        l_g = generator_objective(l_rec, l_adv, cfg)
        opt_g.zero_grad()
        l_g.backward()
        opt_g.step()

        l_d = discriminator_loss(disc(x), disc(x_hat.detach()))
        opt_d.zero_grad()
        (-l_d).backward()
        opt_d.step()

        record = TrainRecord(it, float(l_rec), float(l_adv), float(l_g), float(l_d))
        log.append(record)
        if not all(np.isfinite(v) for v in (record.l_rec, record.l_adv, record.l_g, record.l_d)):
            raise DivergenceError(it, log)

    gen.eval()
    disc.eval()
    ckpt = ModelCheckpoint(
        kind="generator",
        gamma=cfg.gamma,
        config_digest=cfg.digest(),
        g_spec=g_spec,
        d_spec=d_spec,
        g_state={k: v.detach().clone() for k, v in gen.state_dict().items()},
        d_state={k: v.detach().clone() for k, v in disc.state_dict().items()},
    )
    return ckpt, log

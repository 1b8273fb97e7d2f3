"""Epsilon-prediction training for the conditional denoiser."""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from ..errors import TrainingDivergenceError
from ..video import VideoSequence
from .network import Denoiser, DenoiserConfig
from .schedule import NoiseSchedule, make_schedule

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PredictorConfig:
    """Everything needed to rebuild a predictor: network shape plus schedule.

    ``beta_end`` defaults to 0.2 so that 100 linear steps end near pure noise
    (alpha_bar_T ~ 4.5e-5); with 0.02 the chain would stop at alpha_bar_T ~ 0.36.
    """

    n_cond: int = 2
    j: int = 4
    num_steps: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.2
    image_size: int = 16
    channels: int = 1
    n_future: int = 1
    width: int = 24
    time_dim: int = 64

    def __post_init__(self):
        if self.n_cond < 1 or self.j < 1:
            raise ValueError("n_cond and j must be >= 1")

    def denoiser_config(self) -> DenoiserConfig:
        return DenoiserConfig(n_cond=self.n_cond, n_future=self.n_future, channels=self.channels,
                              width=self.width, time_dim=self.time_dim)

    def schedule(self) -> NoiseSchedule:
        return make_schedule(self.num_steps, self.beta_start, self.beta_end)


def make_windows(dataset: Sequence[VideoSequence], n_cond: int, n_future: int = 1) -> tuple[torch.Tensor, torch.Tensor]:
    """Stack every (conditioning, target) window of the dataset.

    Returns float32 tensors ``cond`` of shape (N, n_cond*C, H, W) and
    ``target`` of shape (N, n_future*C, H, W) in the [-1, 1] domain.
    """
    conds, targets = [], []
    span = n_cond + n_future
    for video in dataset:
        if len(video) < span:
            raise ValueError(f"video of {len(video)} frames shorter than window {span}")
        arr = video.to_array().astype(np.float32) / 127.5 - 1.0
        t, c, h, w = arr.shape
        for i in range(t - span + 1):
            conds.append(arr[i:i + n_cond].reshape(n_cond * c, h, w))
            targets.append(arr[i + n_cond:i + span].reshape(n_future * c, h, w))
    return torch.from_numpy(np.stack(conds)), torch.from_numpy(np.stack(targets))


def denoising_loss(model, cond: torch.Tensor, target: torch.Tensor, t: torch.Tensor,
                   eps: torch.Tensor, schedule: NoiseSchedule) -> torch.Tensor:
    """Per-element mean of ``|eps - eps_theta(sqrt(ab) x + sqrt(1 - ab) eps | y, t)|^2``."""
    ab = torch.tensor(np.array(schedule.alpha_bar), dtype=target.dtype)[t][:, None, None, None]
    x_t = ab.sqrt() * target + (1.0 - ab).sqrt() * eps
    pred = model(x_t, cond, t)
    return torch.mean((eps - pred) ** 2)


def draw_noise(target: torch.Tensor, schedule: NoiseSchedule,
               generator: torch.Generator) -> tuple[torch.Tensor, torch.Tensor]:
    t = torch.randint(1, schedule.num_steps + 1, (target.shape[0],), generator=generator)
    eps = torch.randn(target.shape, generator=generator, dtype=target.dtype)
    return t, eps


def train_step(model, optimizer: torch.optim.Optimizer, cond: torch.Tensor, target: torch.Tensor,
               schedule: NoiseSchedule, generator: torch.Generator) -> float:
    """One seeded gradient step on a batch; returns the batch loss."""
    if cond.shape[0] == 0:
        raise ValueError("empty batch")
    model.train()
    t, eps = draw_noise(target, schedule, generator)
    loss = denoising_loss(model, cond, target, t, eps, schedule)
    value = float(loss.detach())
    if not math.isfinite(value):
        raise TrainingDivergenceError("non-finite training loss")
    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    optimizer.step()
    return value


@torch.no_grad()
def evaluate_loss(model, cond: torch.Tensor, target: torch.Tensor, schedule: NoiseSchedule,
                  seed: int = 0, batch_size: int = 256) -> float:
    """Loss on a fixed draw of (t, eps), comparable across checkpoints."""
    model.eval()
    g = torch.Generator().manual_seed(seed)
    t, eps = draw_noise(target, schedule, g)
    total = 0.0
    for i in range(0, target.shape[0], batch_size):
        sl = slice(i, i + batch_size)
        total += float(denoising_loss(model, cond[sl], target[sl], t[sl], eps[sl], schedule)) * target[sl].shape[0]
    return total / target.shape[0]


@dataclass
class TrainResult:
    model: Denoiser
    config: PredictorConfig
    initial_loss: float
    final_loss: float
    curve: list[tuple[int, float]] = field(default_factory=list)

    def write_curve(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "loss"])
            for epoch, loss in self.curve:
                w.writerow([epoch, repr(loss)])


def build_model(config: PredictorConfig, seed: int) -> Denoiser:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return Denoiser(config.denoiser_config())


def train_predictor(dataset: Sequence[VideoSequence], config: PredictorConfig, epochs: int, seed: int = 0,
                    batch_size: int = 64, lr: float = 2e-3, model: Denoiser | None = None,
                    eval_windows: int = 512) -> TrainResult:
    """Train from scratch (or continue ``model``) on every window of ``dataset``.

    The loss curve holds the fixed-draw evaluation loss at epoch 0 (before any
    update) and the mean training loss of every later epoch.
    """
    schedule = config.schedule()
    cond, target = make_windows(dataset, config.n_cond, config.n_future)
    if model is None:
        model = build_model(config, seed)
    g = torch.Generator().manual_seed(seed + 1)
    perm = torch.randperm(cond.shape[0], generator=g)
    ev = perm[:eval_windows]
    initial = evaluate_loss(model, cond[ev], target[ev], schedule, seed)
    curve = [(0, initial)]
    steps_per_epoch = max(1, math.ceil(cond.shape[0] / batch_size))
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=max(1, epochs * steps_per_epoch),
                                                       eta_min=lr * 0.05)
    last_finite = initial if math.isfinite(initial) else None
    for epoch in range(1, epochs + 1):
        order = torch.randperm(cond.shape[0], generator=g)
        total, n = 0.0, 0
        for i in range(0, cond.shape[0], batch_size):
            idx = order[i:i + batch_size]
            try:
                loss = train_step(model, optimizer, cond[idx], target[idx], schedule, g)
            except TrainingDivergenceError as exc:
                raise TrainingDivergenceError(f"diverged in epoch {epoch}", last_finite) from exc
            last_finite = loss
            sched.step()
            total += loss * idx.shape[0]
            n += idx.shape[0]
        curve.append((epoch, total / n))
        log.info("epoch %d loss %.5f", epoch, total / n)
    final = evaluate_loss(model, cond[ev], target[ev], schedule, seed)
    model.eval()
    return TrainResult(model, config, initial, final, curve)

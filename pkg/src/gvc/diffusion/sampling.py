"""Seeded ancestral sampling of future frames.

Noise stream: one ``numpy.random.default_rng(seed)`` per call. For every
generated block of ``n_future`` frames it yields the starting sample
``x_T`` and then one fresh ``z`` per reverse step ``t = T..2``, each of the
block's shape ``(n_future * C, H, W)``, in that order. The reverse
recursion itself runs in float64; only the noise estimate comes from the
network.
"""

from __future__ import annotations

import hashlib
from typing import Sequence

import numpy as np
import torch

from ..errors import DimensionMismatchError
from ..video import Frame
from .network import Denoiser
from .schedule import NoiseSchedule, posterior_mean, predict_x0


class TorchEpsModel:
    """Adapts a trained :class:`Denoiser` to the numpy sampler interface."""

    def __init__(self, model: Denoiser):
        self.model = model.eval()
        cfg = model.config
        self.n_cond, self.n_future, self.channels = cfg.n_cond, cfg.n_future, cfg.channels
        self._dtype = next(model.parameters()).dtype

    @torch.no_grad()
    def __call__(self, x_t: np.ndarray, cond: np.ndarray, t: int) -> np.ndarray:
        xt = torch.from_numpy(x_t[None]).to(self._dtype)
        c = torch.from_numpy(cond[None]).to(self._dtype)
        out = self.model(xt, c, torch.tensor([t]))
        return out[0].to(torch.float64).numpy()

    def fingerprint(self) -> bytes:
        h = hashlib.sha256()
        for name, p in self.model.state_dict().items():
            h.update(name.encode())
            h.update(p.detach().cpu().contiguous().numpy().tobytes())
        return h.digest()[:8]


class ZeroEpsModel:
    """Predicts zero noise everywhere; a stand-in for an untrained network."""

    def __init__(self, n_cond: int = 1, n_future: int = 1, channels: int = 1):
        self.n_cond, self.n_future, self.channels = n_cond, n_future, channels

    def __call__(self, x_t: np.ndarray, cond: np.ndarray, t: int) -> np.ndarray:
        return np.zeros_like(x_t)

    def fingerprint(self) -> bytes:
        return hashlib.sha256(f"zero-eps:{self.n_cond}:{self.n_future}:{self.channels}".encode()).digest()[:8]


def reverse_chain(eps_model, cond: np.ndarray, schedule: NoiseSchedule, rng: np.random.Generator,
                  shape: tuple[int, int, int], clip_x0: bool = True) -> np.ndarray:
    """Run x_T -> x_0 for one block; returns the final float64 sample."""
    x = rng.standard_normal(shape)
    for t in range(schedule.num_steps, 0, -1):
        eps = eps_model(x, cond, t)
        x0 = predict_x0(x, t, eps, schedule)
        if clip_x0:
            x0 = np.clip(x0, -1.0, 1.0)
        mean = posterior_mean(x, x0, t, schedule)
        if t > 1:
            x = mean + np.sqrt(schedule.beta_tilde[t]) * rng.standard_normal(shape)
        else:
            x = mean
    return x


def sample_next_frames(cond: Sequence[Frame], j: int, eps_model, schedule: NoiseSchedule, seed: int,
                       clip_x0: bool = True) -> list[Frame]:
    """Generate ``j`` frames following ``cond``.

    Only the last ``eps_model.n_cond`` frames condition each block. When ``j``
    exceeds the per-call output, generated frames are quantized to 8 bits
    and appended to the conditioning window before the next block.
    """
    n_cond, n_future, c = eps_model.n_cond, eps_model.n_future, eps_model.channels
    if j < 1:
        raise ValueError("j must be >= 1")
    if len(cond) < n_cond:
        raise DimensionMismatchError(f"need {n_cond} conditioning frames, got {len(cond)}")
    shape0 = cond[0].shape
    for f in cond:
        if f.shape != shape0:
            raise DimensionMismatchError("conditioning frames differ in shape")
    if shape0[0] != c:
        raise DimensionMismatchError(f"model expects {c} channels, frames have {shape0[0]}")
    _, h, w = shape0
    rng = np.random.default_rng(seed)
    window = [f.normalized() for f in cond[-n_cond:]]
    out: list[Frame] = []
    while len(out) < j:
        y = np.concatenate(window[-n_cond:], axis=0)
        x = reverse_chain(eps_model, y, schedule, rng, (n_future * c, h, w), clip_x0)
        for k in range(n_future):
            frame = Frame.from_normalized(x[k * c:(k + 1) * c])
            out.append(frame)
            window.append(frame.normalized())
    return out[:j]


class DiffusionPredictor:
    """Frame predictor G backed by a noise model and schedule."""

    def __init__(self, eps_model, schedule: NoiseSchedule, clip_x0: bool = True):
        self.eps_model = eps_model
        self.schedule = schedule
        self.clip_x0 = clip_x0
        self.n_cond = eps_model.n_cond
        self.channels = eps_model.channels

    def predict(self, cond: Sequence[Frame], n: int, seed: int) -> list[Frame]:
        return sample_next_frames(cond, n, self.eps_model, self.schedule, seed, self.clip_x0)

    def fingerprint(self) -> bytes:
        h = hashlib.sha256(self.eps_model.fingerprint())
        h.update(self.schedule.beta.tobytes())
        h.update(bytes([self.clip_x0]))
        return h.digest()[:8]

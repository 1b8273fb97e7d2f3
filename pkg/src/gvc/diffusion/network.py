"""Small conditional U-Net predicting the injected noise.

Input is the noisy target frames stacked on channels next to the
conditioning frames; the diffusion step enters through a sinusoidal
embedding that biases every residual block.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
from torch import nn
from torch.nn import functional as F


@dataclass(frozen=True)
class DenoiserConfig:
    n_cond: int = 2
    n_future: int = 1
    channels: int = 1
    width: int = 24
    time_dim: int = 64
    groups: int = 8

    def __post_init__(self):
        if self.n_cond < 1 or self.n_future < 1:
            raise ValueError("n_cond and n_future must be >= 1")
        if self.width % self.groups:
            raise ValueError("width must be a multiple of groups")

    def to_dict(self) -> dict:
        return asdict(self)


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half)
    args = t.to(torch.float64)[:, None] * freqs[None, :]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=1)
    if dim % 2:
        emb = F.pad(emb, (0, 1))
    return emb


class ResBlock(nn.Module):
    def __init__(self, cin: int, cout: int, time_dim: int, groups: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(min(groups, cin), cin)
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.temb = nn.Linear(time_dim, cout)
        self.norm2 = nn.GroupNorm(min(groups, cout), cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.temb(temb)[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return self.skip(x) + h


class Denoiser(nn.Module):
    def __init__(self, config: DenoiserConfig = DenoiserConfig()):
        super().__init__()
        self.config = config
        c, w, td, g = config.channels, config.width, config.time_dim, config.groups
        in_ch = (config.n_cond + config.n_future) * c
        self.time_mlp = nn.Sequential(nn.Linear(td, td), nn.SiLU(), nn.Linear(td, td))
        self.conv_in = nn.Conv2d(in_ch, w, 3, padding=1)
        self.res_hi = ResBlock(w, w, td, g)
        self.down = nn.Conv2d(w, 2 * w, 3, stride=2, padding=1)
        self.res_lo = ResBlock(2 * w, 2 * w, td, g)
        self.up = nn.Conv2d(2 * w, w, 3, padding=1)
        self.res_out = ResBlock(2 * w, w, td, g)
        self.norm_out = nn.GroupNorm(min(g, w), w)
        self.conv_out = nn.Conv2d(w, config.n_future * c, 3, padding=1)
        # zero-initialized head: the untrained net predicts eps = 0
        nn.init.zeros_(self.conv_out.weight)
        nn.init.zeros_(self.conv_out.bias)

    def forward(self, x_t: torch.Tensor, cond: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        temb = self.time_mlp(timestep_embedding(t, self.config.time_dim).to(x_t.dtype))
        h0 = self.conv_in(torch.cat([x_t, cond], dim=1))
        h1 = self.res_hi(h0, temb)
        h2 = self.res_lo(self.down(h1), temb)
        u = F.interpolate(h2, size=h1.shape[-2:], mode="nearest")
        u = self.up(u)
        h = self.res_out(torch.cat([u, h1], dim=1), temb)
        return self.conv_out(F.silu(self.norm_out(h)))


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())

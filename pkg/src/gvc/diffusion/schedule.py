"""Variance schedule and closed-form Gaussian diffusion quantities.

Arrays are indexed by diffusion step ``t = 1..T_diff`` and padded at index
0 with the boundary values ``beta_0 = 0``, ``alpha_bar_0 = 1`` and
``beta_tilde_0 = 0``, so ``alpha_bar[t - 1]`` is always valid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    beta_tilde: np.ndarray

    @property
    def num_steps(self) -> int:
        return self.beta.shape[0] - 1

    @classmethod
    def from_betas(cls, betas) -> "NoiseSchedule":
        b = np.asarray(betas, dtype=np.float64)
        if b.ndim != 1 or b.size < 1:
            raise ValueError("betas must be a non-empty 1-D sequence")
        if not np.all((b > 0) & (b < 1)):
            raise ValueError("every beta must lie in (0, 1)")
        beta = np.concatenate([[0.0], b])
        alpha = 1.0 - beta
        alpha_bar = np.cumprod(alpha)
        beta_tilde = np.zeros_like(beta)
        beta_tilde[1:] = (1.0 - alpha_bar[:-1]) / (1.0 - alpha_bar[1:]) * beta[1:]
        for a in (beta, alpha, alpha_bar, beta_tilde):
            a.setflags(write=False)
        return cls(beta, alpha, alpha_bar, beta_tilde)

    def check_step(self, t: int) -> None:
        if not 1 <= t <= self.num_steps:
            raise IndexError(f"diffusion step {t} outside [1, {self.num_steps}]")


def make_schedule(num_steps: int = 100, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Linear beta schedule from ``beta_start`` to ``beta_end`` over ``num_steps``."""
    if num_steps < 1:
        raise ValueError("num_steps must be >= 1")
    if not 0 < beta_start <= beta_end < 1:
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    return NoiseSchedule.from_betas(np.linspace(beta_start, beta_end, num_steps))


def forward_sample(x0, t: int, eps, schedule: NoiseSchedule):
    """Draw from q(x_t | x_0) given the unit-Gaussian noise ``eps``."""
    schedule.check_step(t)
    ab = schedule.alpha_bar[t]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def posterior_mean(xt, x0, t: int, schedule: NoiseSchedule):
    """Mean of q(x_{t-1} | x_t, x_0)."""
    schedule.check_step(t)
    ab, ab_prev = schedule.alpha_bar[t], schedule.alpha_bar[t - 1]
    beta = schedule.beta[t]
    c0 = np.sqrt(ab_prev) * beta / (1.0 - ab)
    ct = np.sqrt(schedule.alpha[t]) * (1.0 - ab_prev) / (1.0 - ab)
    return c0 * x0 + ct * xt


def posterior_variance(t: int, schedule: NoiseSchedule) -> float:
    schedule.check_step(t)
    return float(schedule.beta_tilde[t])


def predict_x0(xt, t: int, eps, schedule: NoiseSchedule):
    """Invert the forward marginal for x_0 given a noise estimate."""
    schedule.check_step(t)
    ab = schedule.alpha_bar[t]
    return (xt - np.sqrt(1.0 - ab) * eps) / np.sqrt(ab)

"""Distortion and perceptual measures.

The perceptual distance here is a deterministic, hand-built proxy: a
multi-scale blend of gradient-magnitude similarity and local structural
similarity. The Frechet distance is computed over handcrafted
spatiotemporal features. Neither is LPIPS or FVD and numbers produced with
them are labeled by their :class:`MetricSpec` names.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .errors import ConditioningError, DimensionMismatchError
from .video import Frame

PSNR_CAP_DB = 99.0
SHRINKAGE = 1e-6
DEGENERATE_EIGENVALUE = 1e-10


def _check_pair(a: Frame, b: Frame) -> None:
    if a.shape != b.shape:
        raise DimensionMismatchError(f"frame shapes differ: {a.shape} vs {b.shape}")


def mse(a: Frame, b: Frame) -> float:
    _check_pair(a, b)
    d = a.samples.astype(np.float64) - b.samples.astype(np.float64)
    return float(np.mean(d * d))


def psnr(a: Frame, b: Frame) -> float:
    """PSNR in dB on the 8-bit scale, capped at 99 dB (identical frames)."""
    m = mse(a, b)
    if m == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(255.0**2 / m))


def mean_abs_distance(a: Frame, b: Frame) -> float:
    """Mean absolute sample difference in 8-bit units."""
    _check_pair(a, b)
    return float(np.mean(np.abs(a.samples.astype(np.float64) - b.samples.astype(np.float64))))


def psnr_distance(a: Frame, b: Frame) -> float:
    """``(99 - PSNR) / 99``: 0 for identical frames, 1 at 0 dB."""
    return (PSNR_CAP_DB - psnr(a, b)) / PSNR_CAP_DB


# -- perceptual proxy -------------------------------------------------------

_GMS_C = 0.0026  # on [0, 1] intensities
_SSIM_C1 = 0.01**2
_SSIM_C2 = 0.03**2


def _downsample(x: np.ndarray) -> np.ndarray:
    h, w = x.shape
    h2, w2 = h - h % 2, w - w % 2
    x = x[:h2, :w2]
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


def _gradient_magnitude(x: np.ndarray) -> np.ndarray:
    gy = ndimage.prewitt(x, axis=0, mode="nearest") / 3.0
    gx = ndimage.prewitt(x, axis=1, mode="nearest") / 3.0
    return np.sqrt(gx * gx + gy * gy)


def _scale_terms(a: np.ndarray, b: np.ndarray, window: int) -> tuple[float, float]:
    ga, gb = _gradient_magnitude(a), _gradient_magnitude(b)
    gms = (2.0 * ga * gb + _GMS_C) / (ga * ga + gb * gb + _GMS_C)
    grad_term = float(np.mean(1.0 - gms))

    f = lambda x: ndimage.uniform_filter(x, size=window, mode="reflect")
    mu_a, mu_b = f(a), f(b)
    va = f(a * a) - mu_a * mu_a
    vb = f(b * b) - mu_b * mu_b
    cov = f(a * b) - mu_a * mu_b
    ssim = ((2 * mu_a * mu_b + _SSIM_C1) * (2 * cov + _SSIM_C2)) / (
        (mu_a * mu_a + mu_b * mu_b + _SSIM_C1) * (va + vb + _SSIM_C2)
    )
    struct_term = float(np.mean(np.clip((1.0 - ssim) / 2.0, 0.0, 1.0)))
    return grad_term, struct_term


@dataclass(frozen=True)
class PerceptualConfig:
    scales: int = 3
    window: int = 3
    # coarse scales carry more weight than pixel-level texture
    scale_weights: tuple[float, ...] = (0.1, 0.3, 0.6)
    grad_weight: float = 0.5

    def describe(self) -> str:
        w = ",".join(f"{x:g}" for x in self.scale_weights[: self.scales])
        return f"perceptual-proxy(scales={self.scales},window={self.window},weights={w},grad={self.grad_weight:g})"


def perceptual_distance(a: Frame, b: Frame, config: PerceptualConfig = PerceptualConfig()) -> float:
    """Multi-scale gradient/structure distance in [0, 1]; 0 iff the frames match."""
    _check_pair(a, b)
    if a == b:
        return 0.0
    weights = np.asarray(config.scale_weights[: config.scales], dtype=np.float64)
    weights = weights / weights.sum()
    total = 0.0
    for ca, cb in zip(a.samples, b.samples):
        x = ca.astype(np.float64) / 255.0
        y = cb.astype(np.float64) / 255.0
        d = 0.0
        for s, w in enumerate(weights):
            if s:
                if min(x.shape) < 2:
                    break
                x, y = _downsample(x), _downsample(y)
            g, st = _scale_terms(x, y, config.window)
            d += w * (config.grad_weight * g + (1.0 - config.grad_weight) * st)
        total += d
    return max(0.0, total / a.channels)


@dataclass(frozen=True)
class MetricSpec:
    """Names a frame distance D(a, b) and its parameters.

    ``kind`` is one of ``"perceptual"``, ``"psnr"`` (PSNR-derived distance),
    ``"mean_abs"`` or ``"external"`` (with ``fn`` supplied).
    """

    kind: str = "perceptual"
    perceptual: PerceptualConfig = PerceptualConfig()
    fn: Callable[[Frame, Frame], float] | None = field(default=None, compare=False)
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("perceptual", "psnr", "mean_abs", "external"):
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if self.kind == "external" and self.fn is None:
            raise ValueError("external metric needs fn")

    def __call__(self, a: Frame, b: Frame) -> float:
        if self.kind == "perceptual":
            return perceptual_distance(a, b, self.perceptual)
        if self.kind == "psnr":
            return psnr_distance(a, b)
        if self.kind == "mean_abs":
            return mean_abs_distance(a, b)
        return float(self.fn(a, b))  # type: ignore[misc]

    def describe(self) -> str:
        if self.kind == "perceptual":
            return self.perceptual.describe()
        if self.kind == "psnr":
            return "psnr-distance(cap=99)"
        if self.kind == "mean_abs":
            return "mean-abs(8bit)"
        return f"external({self.name or getattr(self.fn, '__name__', 'fn')})"


def make_metric(name: str) -> MetricSpec:
    return MetricSpec(kind=name)


# -- Frechet feature distance ----------------------------------------------


@dataclass(frozen=True)
class FeatureSummary:
    mean: np.ndarray
    cov: np.ndarray
    count: int

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def from_features(cls, feats: np.ndarray) -> "FeatureSummary":
        feats = np.asarray(feats, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats[:, None]
        n = feats.shape[0]
        mean = feats.mean(axis=0)
        if n > 1:
            cov = np.cov(feats, rowvar=False, ddof=1).reshape(feats.shape[1], feats.shape[1])
        else:
            cov = np.zeros((feats.shape[1], feats.shape[1]))
        return cls(mean, 0.5 * (cov + cov.T), n)


def _condition(cov: np.ndarray, shrink: bool) -> np.ndarray:
    lo = float(np.linalg.eigvalsh(cov).min())
    if lo < DEGENERATE_EIGENVALUE:
        if not shrink:
            raise ConditioningError(f"covariance min eigenvalue {lo:.3g} below {DEGENERATE_EIGENVALUE}")
        cov = cov + SHRINKAGE * np.eye(cov.shape[0])
    return cov


def _sqrtm_psd(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def frechet_distance(a: FeatureSummary, b: FeatureSummary, shrink: bool = True) -> float:
    """``|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2))``.

    The trace of the product square root is taken as the trace of
    ``(S_a^(1/2) S_b S_a^(1/2))^(1/2)``, which is symmetric PSD and shares
    its eigenvalues with ``(S_a S_b)^(1/2)``.
    """
    if a.dim != b.dim:
        raise DimensionMismatchError(f"feature dims differ: {a.dim} vs {b.dim}")
    sa = _condition(a.cov, shrink)
    sb = _condition(b.cov, shrink)
    diff = a.mean - b.mean
    root_a = _sqrtm_psd(sa)
    mid = root_a @ sb @ root_a
    tr_cross = float(np.sum(np.sqrt(np.clip(np.linalg.eigvalsh(0.5 * (mid + mid.T)), 0.0, None))))
    d = float(diff @ diff) + float(np.trace(sa)) + float(np.trace(sb)) - 2.0 * tr_cross
    return max(0.0, d)


@dataclass(frozen=True)
class FeatureConfig:
    """Handcrafted per-frame features for the Frechet proxy.

    Per frame (averaged over channels): ``grid x grid`` mean intensity,
    2x2-pooled gradient magnitude, and 2x2-pooled absolute difference to the
    previous frame of the sequence (zeros for the first frame). Intensities
    are on [0, 1].
    """

    grid: int = 4
    shrink: bool = True
    extractor: Callable[[Sequence[Frame]], np.ndarray] | None = field(default=None, compare=False)

    @property
    def dim(self) -> int:
        return self.grid * self.grid + 8

    def describe(self) -> str:
        if self.extractor is not None:
            return f"frechet-proxy(extractor={getattr(self.extractor, '__name__', 'custom')})"
        return f"frechet-proxy(grid={self.grid},d={self.dim},shrinkage={SHRINKAGE:g})"


def _pool(x: np.ndarray, n: int) -> np.ndarray:
    h, w = x.shape
    ys = np.linspace(0, h, n + 1).astype(int)
    xs = np.linspace(0, w, n + 1).astype(int)
    return np.array([[x[ys[i]:ys[i + 1], xs[j]:xs[j + 1]].mean() for j in range(n)] for i in range(n)]).ravel()


def frame_features(frames: Sequence[Frame], config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Feature matrix of shape ``(len(frames), d_f)``."""
    if config.extractor is not None:
        return np.asarray(config.extractor(frames), dtype=np.float64)
    rows = []
    prev = None
    for f in frames:
        x = f.samples.astype(np.float64).mean(axis=0) / 255.0
        g = _gradient_magnitude(x)
        t = np.abs(x - prev) if prev is not None else np.zeros_like(x)
        rows.append(np.concatenate([_pool(x, config.grid), _pool(g, 2), _pool(t, 2)]))
        prev = x
    return np.stack(rows)


def frechet_feature_distance(set_a: Sequence[Frame], set_b: Sequence[Frame],
                             config: FeatureConfig = FeatureConfig()) -> float:
    fa = FeatureSummary.from_features(frame_features(set_a, config))
    fb = FeatureSummary.from_features(frame_features(set_b, config))
    return frechet_distance(fa, fb, shrink=config.shrink)

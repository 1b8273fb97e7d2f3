import numpy as np
import pytest
import torch

from gvc.diffusion.network import Denoiser, DenoiserConfig
from gvc.diffusion.sampling import DiffusionPredictor, TorchEpsModel, ZeroEpsModel, sample_next_frames
from gvc.diffusion.schedule import NoiseSchedule, make_schedule
from gvc.errors import DimensionMismatchError
from gvc.video import Frame, synth_dataset


def zero_eps_oracle(betas, rng, shape):
    """Reverse chain for eps = 0, written out from the raw betas."""
    betas = np.asarray(betas, dtype=np.float64)
    abar = np.cumprod(1 - betas)
    x = rng.standard_normal(shape)
    T = len(betas)
    for t in range(T, 0, -1):
        ab = abar[t - 1]
        ab_prev = abar[t - 2] if t > 1 else 1.0
        b = betas[t - 1]
        x0 = np.clip(x / np.sqrt(ab), -1, 1)
        mean = np.sqrt(ab_prev) * b / (1 - ab) * x0 + np.sqrt(1 - b) * (1 - ab_prev) / (1 - ab) * x
        if t > 1:
            var = (1 - ab_prev) / (1 - ab) * b
            x = mean + np.sqrt(var) * rng.standard_normal(shape)
        else:
            x = mean
    return np.clip(np.rint((x + 1) * 127.5), 0, 255).astype(np.uint8)


def cond_frames(n=2, seed=0, size=8):
    v = synth_dataset(1, n, size, size, seed=seed)[0]
    return list(v)


def test_zero_eps_matches_scripted_recursion():
    betas = [0.05, 0.1, 0.2, 0.3]
    s = NoiseSchedule.from_betas(betas)
    out = sample_next_frames(cond_frames(), 1, ZeroEpsModel(2), s, seed=11)
    assert np.array_equal(out[0].samples, zero_eps_oracle(betas, np.random.default_rng(11), (1, 8, 8)))


def test_noise_stream_continues_across_blocks():
    # block 2 draws x_T and its z's from the same generator, right after block 1
    betas = [0.1, 0.2, 0.3]
    s = NoiseSchedule.from_betas(betas)
    out = sample_next_frames(cond_frames(), 2, ZeroEpsModel(2), s, seed=5)
    rng = np.random.default_rng(5)
    expect = [zero_eps_oracle(betas, rng, (1, 8, 8)) for _ in range(2)]
    assert [f.samples.tolist() for f in out] == [e.tolist() for e in expect]


class RecordingEps:
    n_cond, n_future, channels = 2, 1, 1

    def __init__(self):
        self.conds = []

    def __call__(self, x_t, cond, t):
        self.conds.append(cond.copy())
        return np.zeros_like(x_t)

    def fingerprint(self):
        return b"rec"


def test_rollout_feeds_back_quantized_frames():
    eps = RecordingEps()
    s = make_schedule(3, 0.1, 0.3)
    cond = cond_frames(3)
    out = sample_next_frames(cond, 3, eps, s, seed=0)
    blocks = eps.conds[::3]
    assert np.array_equal(blocks[0], np.concatenate([cond[1].normalized(), cond[2].normalized()]))
    assert np.array_equal(blocks[1], np.concatenate([cond[2].normalized(), out[0].normalized()]))
    assert np.array_equal(blocks[2], np.concatenate([out[0].normalized(), out[1].normalized()]))


def small_predictor(seed=0):
    torch.manual_seed(seed)
    net = Denoiser(DenoiserConfig(width=8, time_dim=8, groups=4))
    torch.nn.init.normal_(net.conv_out.weight, std=0.05)
    return DiffusionPredictor(TorchEpsModel(net), make_schedule(10, 1e-4, 0.2))


def test_same_seed_same_frames():
    p = small_predictor()
    cond = cond_frames()
    a = p.predict(cond, 3, seed=42)
    b = p.predict(cond, 3, seed=42)
    assert a == b
    assert p.predict(cond, 3, seed=43) != a


def test_output_is_8bit_frames():
    out = small_predictor().predict(cond_frames(), 2, seed=1)
    assert all(isinstance(f, Frame) and f.shape == (1, 8, 8) for f in out)


def test_fingerprint_tracks_weights_and_schedule():
    a, b = small_predictor(0), small_predictor(1)
    assert a.fingerprint() != b.fingerprint()
    assert a.fingerprint() == small_predictor(0).fingerprint()
    c = DiffusionPredictor(a.eps_model, make_schedule(11, 1e-4, 0.2))
    assert c.fingerprint() != a.fingerprint()


def test_input_validation():
    s = make_schedule(3)
    with pytest.raises(DimensionMismatchError):
        sample_next_frames(cond_frames()[:1], 1, ZeroEpsModel(2), s, 0)
    with pytest.raises(ValueError):
        sample_next_frames(cond_frames(), 0, ZeroEpsModel(2), s, 0)
    rgb = [Frame(np.zeros((3, 8, 8), dtype=np.uint8))] * 2
    with pytest.raises(DimensionMismatchError):
        sample_next_frames(rgb, 1, ZeroEpsModel(2), s, 0)

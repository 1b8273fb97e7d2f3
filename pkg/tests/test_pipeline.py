import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import textured_video
from traces import CASES
from gvc.codec.dct import BlockDCTCodec
from gvc.container import bpp, quantize_rho, read_container, write_container
from gvc.diffusion.sampling import DiffusionPredictor, ZeroEpsModel
from gvc.diffusion.schedule import make_schedule
from gvc.errors import DimensionMismatchError, IntegrityError, ReproducibilityError
from gvc.metrics import MetricSpec
from gvc.pipeline import (
    CopyLastPredictor,
    EncoderConfig,
    decode_video,
    derive_seed,
    encode_video,
    trace_from_container,
    verify_threshold,
)
from gvc.video import Frame, VideoSequence, synth_dataset

MEAN_ABS = MetricSpec("mean_abs")


def constant_video(values, size=8):
    return VideoSequence([Frame(np.full((1, size, size), v, dtype=np.uint8)) for v in values])


@pytest.mark.parametrize("case", CASES, ids=[c["name"] for c in CASES])
def test_hand_traces(case):
    video = constant_video(case["values"])
    cfg = EncoderConfig(n_cond=case["n_cond"], j=case["j"], rho=case["rho"], quality=9, metric=MEAN_ABS)
    container, trace = encode_video(video, cfg, CopyLastPredictor(1))
    assert container.intra_indices() == case["S"]
    assert trace.intra() == case["S"]
    assert trace.calls == case["calls"]
    got = {e.index: e.distance for e in trace.entries if e.decision == "GENERATED"}
    assert got.keys() == case["D"].keys()
    for i, d in case["D"].items():
        assert got[i] == pytest.approx(d, abs=1e-12)


class ShiftPredictor:
    """Deterministic stub: frame k of a call is the last frame brightened by 3(k+1)."""

    n_cond, channels = 1, 1

    def predict(self, cond, n, seed):
        base = cond[-1].samples.astype(int)
        return [Frame(np.clip(base + 3 * (k + 1), 0, 255).astype(np.uint8)) for k in range(n)]

    def fingerprint(self):
        return b"shift\x00\x00\x00"


def reference_encoder(originals, n, j, rho, predictor, codec, metric):
    """Literal per-frame transcription of the sequential encoder."""
    T = len(originals)
    recon, S, calls, dist = {}, [], [], {}

    def intra(a, b):
        for i in range(a, b):
            recon[i] = codec.decode(codec.encode(originals[i]), *originals[i].shape[1:], originals[i].channels)
            S.append(i)

    intra(0, n)
    l = n
    while l < T:
        span = min(j, T - l)
        calls.append(l)
        cands = predictor.predict([recon[i] for i in range(l - n, l)], span, derive_seed(0, l))
        for i in range(span):
            d = metric(cands[i], originals[l + i])
            if d < rho:
                recon[l + i] = cands[i]
                dist[l + i] = d
            else:
                intra(l + i, min(l + i + n, T))
                l = min(l + i + n, T)
                break
        else:
            l += span
    return S, calls, dist, [recon[i] for i in range(T)]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 3), st.integers(1, 4), st.floats(0, 30), st.integers(3, 12))
def test_matches_reference_encoder(seed, n, j, rho, T):
    rng = np.random.default_rng(seed)
    values = np.cumsum(rng.integers(-2, 8, T)) % 200 + 20
    video = constant_video(values.tolist())
    pred = ShiftPredictor()
    codec = BlockDCTCodec(9)
    container, trace = encode_video(video, EncoderConfig(n, j, rho, 9, 0, MEAN_ABS), pred)
    # the encoder compares against the threshold as stored in the container
    S, calls, dist, recon = reference_encoder(list(video), n, j, quantize_rho(rho), pred, codec, MEAN_ABS)
    assert trace.intra() == S == container.intra_indices()
    assert trace.calls == calls
    assert {e.index: e.distance for e in trace.entries if e.distance is not None} == dist
    assert trace.reconstruction == recon


def tiny_diffusion():
    return DiffusionPredictor(ZeroEpsModel(2), make_schedule(4, 0.1, 0.4))


@pytest.mark.parametrize("rho", [0.0, 0.15, 0.4, math.inf])
def test_decoder_reproduces_encoder(rho):
    pred = tiny_diffusion()
    for v in synth_dataset(3, 9, 16, 16, seed=2):
        container, trace = encode_video(v, EncoderConfig(rho=rho, quality=4, seed=7), pred)
        back = read_container(write_container(container))
        assert list(decode_video(back, pred)) == trace.reconstruction


def test_rho_extremes():
    v = textured_video(8)
    pred = CopyLastPredictor(1)
    c0, t0 = encode_video(v, EncoderConfig(n_cond=2, rho=0.0, quality=5), pred)
    cinf, tinf = encode_video(v, EncoderConfig(n_cond=2, rho=math.inf, quality=5), pred)
    cmid, _ = encode_video(v, EncoderConfig(n_cond=2, rho=0.2, quality=5), pred)
    assert t0.intra() == list(range(8))
    assert cinf.intra_indices() == [0, 1]
    assert bpp(c0) >= bpp(cmid) >= bpp(cinf)


def test_video_of_only_conditioning_frames():
    v = textured_video(2)
    c, t = encode_video(v, EncoderConfig(n_cond=2, rho=math.inf), CopyLastPredictor(1))
    assert t.calls == [] and c.intra_indices() == [0, 1]
    assert list(decode_video(c)) == t.reconstruction


def test_determinism():
    v = synth_dataset(1, 10, 16, 16, seed=5)[0]
    pred = tiny_diffusion()
    cfg = EncoderConfig(rho=0.3, quality=3, seed=99)
    assert write_container(encode_video(v, cfg, pred)[0]) == write_container(encode_video(v, cfg, pred)[0])


def test_derive_seed():
    assert derive_seed(0, 2) == derive_seed(0, 2)
    assert len({derive_seed(s, p) for s in range(5) for p in range(20)}) == 100


def test_fingerprint_mismatch_refused():
    v = textured_video(8)
    c, _ = encode_video(v, EncoderConfig(rho=math.inf), CopyLastPredictor(1))
    with pytest.raises(ReproducibilityError):
        decode_video(c, CopyLastPredictor(2))
    with pytest.raises(ReproducibilityError):
        decode_video(c, None)


def test_shape_errors():
    v = textured_video(4)
    with pytest.raises(DimensionMismatchError):
        encode_video(v, EncoderConfig(n_cond=1), tiny_diffusion())
    with pytest.raises(DimensionMismatchError):
        encode_video(v, EncoderConfig(), CopyLastPredictor(1, channels=3))
    with pytest.raises(ValueError):
        encode_video(textured_video(1), EncoderConfig(n_cond=2), CopyLastPredictor(1))
    with pytest.raises(ValueError):
        EncoderConfig(rho=-1)


def test_trace_csv_and_bits():
    video = constant_video(CASES[0]["values"])
    c, t = encode_video(video, EncoderConfig(2, 3, 5.0, 9, 0, MEAN_ABS), CopyLastPredictor(1))
    lines = t.to_csv().splitlines()
    assert lines[0] == "frame,decision,D,cum_bits"
    assert len(lines) == 11
    assert t.entries[-1].cum_bits == 8 * (len(write_container(c)) - 47)
    assert lines[3].startswith("2,GENERATED,2.0,")


def test_verify_passes_and_names_tampered_frame():
    video = constant_video(CASES[0]["values"])
    c, t = encode_video(video, EncoderConfig(2, 3, 5.0, 9, 0, MEAN_ABS), CopyLastPredictor(1))
    assert verify_threshold(t, video, MEAN_ABS).passed
    noise = Frame(np.random.default_rng(0).integers(0, 256, (1, 8, 8), dtype=np.uint8))
    t.reconstruction[3] = noise
    with pytest.raises(IntegrityError) as e:
        verify_threshold(t, video, MEAN_ABS)
    assert e.value.frame_indices == [3]


def test_verify_tighter_rho_flags_every_generated_frame():
    video = constant_video(CASES[0]["values"])
    _, t = encode_video(video, EncoderConfig(2, 3, 5.0, 9, 0, MEAN_ABS), CopyLastPredictor(1))
    tight = min(e.distance for e in t.entries if e.distance is not None) - 0.5
    rep = verify_threshold(t, video, MEAN_ABS, rho=tight, strict=False)
    assert [i for i, _ in rep.violations] == t.generated()


def test_trace_from_container_matches_decisions():
    video = constant_video(CASES[1]["values"])
    c, t = encode_video(video, EncoderConfig(2, 2, 4.0, 9, 0, MEAN_ABS), CopyLastPredictor(1))
    rebuilt = trace_from_container(c, list(decode_video(c, CopyLastPredictor(1))))
    assert rebuilt.intra() == t.intra() and rebuilt.generated() == t.generated()
    assert [e.cum_bits for e in rebuilt.entries] == [e.cum_bits for e in t.entries]
    assert verify_threshold(rebuilt, video, MEAN_ABS).passed

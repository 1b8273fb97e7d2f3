import numpy as np
import pytest
import scipy.fft

from conftest import textured_video
from gvc.codec.dct import (
    LEVEL_STEPS,
    BlockDCTCodec,
    FramePayload,
    dct_matrix,
    decode_frame,
    encode_frame,
    step_table,
    zigzag_order,
)
from gvc.errors import ParseError
from gvc.video import Frame, synth_dataset

# standard JPEG zigzag scan, first 16 raster positions
JPEG_ZIGZAG_HEAD = [0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5]


def noise_frame(h=16, w=16, c=1, seed=0):
    return Frame(np.random.default_rng(seed).integers(0, 256, (c, h, w), dtype=np.uint8))


def test_dct_matrix_matches_scipy():
    d = dct_matrix()
    assert np.allclose(d @ d.T, np.eye(8), atol=1e-12)
    x = np.random.default_rng(0).normal(size=(8, 8))
    assert np.allclose(d @ x @ d.T, scipy.fft.dctn(x, norm="ortho"), atol=1e-12)


def test_zigzag_matches_jpeg():
    z = zigzag_order()
    assert list(z[:16]) == JPEG_ZIGZAG_HEAD
    assert sorted(z) == list(range(64)) and z[-1] == 63


def test_step_table_shape_and_growth():
    t = step_table(5)
    assert t.shape == (8, 8)
    assert t[0, 0] == LEVEL_STEPS[5]
    assert t[7, 7] == LEVEL_STEPS[5] * 22 / 8
    with pytest.raises(ValueError):
        step_table(10)


@pytest.mark.parametrize("frame", [noise_frame(), noise_frame(13, 21, 3, 1), textured_video(1)[0]])
def test_quality_9_is_lossless(frame):
    out = BlockDCTCodec(9).decode(BlockDCTCodec(9).encode(frame), frame.height, frame.width, frame.channels)
    assert out == frame


@pytest.mark.parametrize("q", range(9))
def test_reconstruction_error_bounded_by_step(q):
    f = textured_video(1, 32, 32)[0]
    codec = BlockDCTCodec(q)
    out = codec.decode(codec.encode(f), 32, 32, 1)
    err = np.abs(out.samples.astype(float) - f.samples).max()
    # orthonormal 8x8: per-pixel error <= sum over coefficients of step/2 * |basis| <= 8 * max step / 2
    assert err <= 4 * step_table(q).max() + 1


def test_size_monotone_in_quality():
    f = textured_video(1, 32, 32, seed=3)[0]
    sizes = [len(BlockDCTCodec(q).encode(f)) for q in range(10)]
    assert sizes == sorted(sizes)


def test_error_monotone_in_quality():
    f = textured_video(1, 32, 32, seed=3)[0]
    errs = []
    for q in range(10):
        c = BlockDCTCodec(q)
        errs.append(float(np.mean((c.decode(c.encode(f), 32, 32, 1).samples.astype(float) - f.samples) ** 2)))
    assert errs == sorted(errs, reverse=True)
    assert errs[-1] == 0.0


@pytest.mark.parametrize("q", range(8))
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_idempotent_on_unclipped_frames(q, seed):
    f = textured_video(1, 16, 16, seed=seed)[0]
    c = BlockDCTCodec(q)
    once = c.decode(c.encode(f), 16, 16, 1)
    twice = c.decode(c.encode(once), 16, 16, 1)
    assert twice == once


def test_padding_and_header():
    f = noise_frame(13, 21, 1, 4)
    p = encode_frame(f, 4)
    assert p.data[:4] == bytes([4, 8, 3, 3])
    assert decode_frame(p).shape == (1, 13, 21)


def test_flat_frame_is_tiny():
    f = Frame(np.full((1, 16, 16), 77, dtype=np.uint8))
    data = BlockDCTCodec(5).encode(f)
    assert len(data) < 16
    out = BlockDCTCodec(5).decode(data, 16, 16, 1)
    assert np.abs(out.samples.astype(int) - 77).max() <= 1


def test_encode_is_deterministic():
    f = synth_dataset(1, 2, 16, 16, seed=9)[0][1]
    assert BlockDCTCodec(3).encode(f) == BlockDCTCodec(3).encode(f)


def test_truncated_payload_rejected():
    data = BlockDCTCodec(6).encode(noise_frame())
    for n in range(len(data)):
        with pytest.raises(ParseError):
            BlockDCTCodec(6).decode(data[:n], 16, 16, 1)


def test_trailing_and_header_errors():
    data = BlockDCTCodec(6).encode(noise_frame())
    with pytest.raises(ParseError):
        BlockDCTCodec().decode(data + b"\x00", 16, 16, 1)
    with pytest.raises(ParseError):
        decode_frame(FramePayload(bytes([12]) + data[1:], 16, 16, 1))
    with pytest.raises(ParseError):
        decode_frame(FramePayload(data[:1] + bytes([4]) + data[2:], 16, 16, 1))
    with pytest.raises(ParseError):
        decode_frame(FramePayload(data, 16, 20, 1))  # padding fields disagree with dims

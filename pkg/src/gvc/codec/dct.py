"""8x8 block-DCT intra codec: uniform scalar quantization + adaptive range coding.

Payload layout::

    byte 0   quality level (0..9)
    byte 1   block size (8)
    byte 2   bottom padding rows
    byte 3   right padding columns
    bytes 4+ range-coded coefficient stream

Frame dimensions are not stored; they travel with the payload
(:class:`FramePayload`) and, inside a container, in its header.

The coefficient stream walks channels, then blocks in raster order, then
coefficients in zigzag order. Each block's DC term is coded as the
difference from the previous block's DC in the same channel: a magnitude
category from an adaptive model, then a sign bit and the remaining
category-1 mantissa bits. AC terms use (zero-run, category) symbols with
end-of-block and run-of-16 escapes, followed by the same sign/mantissa bits.

Quantizer step for band (u, v) at level q < 9 is ``LEVEL_STEPS[q] *
(8 + u + v) / 8``; level 9 uses a flat step of 1/32, which bounds the
per-pixel reconstruction error by 0.25 and so reproduces every 8-bit frame
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import ParseError
from ..video import Frame
from .rangecoder import AdaptiveModel, RangeDecoder, RangeEncoder

BLOCK = 8
MAX_QUALITY = 9
LEVEL_STEPS = (64.0, 40.0, 25.0, 16.0, 10.0, 6.0, 4.0, 2.5, 1.0)
LOSSLESS_STEP = 1.0 / 32.0

_MAX_CATEGORY = 20
_EOB, _ZRL = 0, 1
_AC_ALPHABET = 2 + 16 * _MAX_CATEGORY


@lru_cache(maxsize=None)
def dct_matrix(n: int = BLOCK) -> np.ndarray:
    """Orthonormal DCT-II matrix, ``M[k, i] = c_k cos(pi (2i+1) k / 2n)``."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    m = np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    m[0, :] *= np.sqrt(1.0 / n)
    m[1:, :] *= np.sqrt(2.0 / n)
    m.setflags(write=False)
    return m


@lru_cache(maxsize=None)
def zigzag_order(n: int = BLOCK) -> np.ndarray:
    idx = sorted(((u, v) for u in range(n) for v in range(n)),
                 key=lambda p: (p[0] + p[1], p[1] if (p[0] + p[1]) % 2 == 0 else p[0]))
    out = np.array([u * n + v for u, v in idx])
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def step_table(quality: int) -> np.ndarray:
    """Quantizer steps for one block at ``quality``, shape (8, 8)."""
    if not 0 <= quality <= MAX_QUALITY:
        raise ValueError(f"quality must be in [0, {MAX_QUALITY}], got {quality}")
    if quality == MAX_QUALITY:
        t = np.full((BLOCK, BLOCK), LOSSLESS_STEP)
    else:
        u = np.arange(BLOCK)[:, None]
        v = np.arange(BLOCK)[None, :]
        t = LEVEL_STEPS[quality] * ((8 + u + v) / 8.0)
    t.setflags(write=False)
    return t


def forward_dct(blocks: np.ndarray) -> np.ndarray:
    m = dct_matrix()
    return m @ blocks @ m.T


def inverse_dct(coefs: np.ndarray) -> np.ndarray:
    m = dct_matrix()
    return m.T @ coefs @ m


def _to_blocks(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    return plane.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK).swapaxes(1, 2).reshape(-1, BLOCK, BLOCK)


def _from_blocks(blocks: np.ndarray, h: int, w: int) -> np.ndarray:
    return blocks.reshape(h // BLOCK, w // BLOCK, BLOCK, BLOCK).swapaxes(1, 2).reshape(h, w)


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True)
class FramePayload:
    data: bytes
    height: int
    width: int
    channels: int

    @property
    def quality(self) -> int:
        return self.data[0]

    def __len__(self) -> int:
        return len(self.data)


def _category(v: int) -> int:
    return abs(v).bit_length()


def _put_value(enc: RangeEncoder, v: int, cat: int) -> None:
    enc.encode_bits(1 if v < 0 else 0, 1)
    if cat > 1:
        enc.encode_bits(abs(v) - (1 << (cat - 1)), cat - 1)


def _get_value(dec: RangeDecoder, cat: int) -> int:
    neg = dec.decode_bits(1)
    mag = 1 << (cat - 1)
    if cat > 1:
        mag += dec.decode_bits(cat - 1)
    return -mag if neg else mag


def quantize_frame(frame: Frame, quality: int) -> tuple[np.ndarray, int, int]:
    """Quantized zigzag coefficients, shape (C, n_blocks, 64), plus padding."""
    steps = step_table(quality)
    h, w = frame.height, frame.width
    ph, pw = (-h) % BLOCK, (-w) % BLOCK
    planes = np.pad(frame.samples.astype(np.float64) - 128.0, ((0, 0), (0, ph), (0, pw)), mode="edge")
    zz = zigzag_order()
    out = []
    for plane in planes:
        coefs = forward_dct(_to_blocks(plane))
        q = _round_half_away(coefs / steps).astype(np.int64)
        out.append(q.reshape(-1, BLOCK * BLOCK)[:, zz])
    return np.stack(out), ph, pw


def dequantize(q: np.ndarray, quality: int, height: int, width: int, ph: int, pw: int) -> np.ndarray:
    steps = step_table(quality)
    zz = zigzag_order()
    hp, wp = height + ph, width + pw
    planes = []
    for qc in q:
        nat = np.empty_like(qc)
        nat[:, zz] = qc
        coefs = nat.reshape(-1, BLOCK, BLOCK).astype(np.float64) * steps
        plane = _from_blocks(inverse_dct(coefs), hp, wp)[:height, :width]
        planes.append(plane)
    x = np.rint(np.stack(planes) + 128.0)
    return np.clip(x, 0, 255).astype(np.uint8)


def encode_frame(frame: Frame, quality: int) -> FramePayload:
    q, ph, pw = quantize_frame(frame, quality)
    enc = RangeEncoder()
    for qc in q:
        dc_model = AdaptiveModel(_MAX_CATEGORY + 1)
        ac_model = AdaptiveModel(_AC_ALPHABET)
        prev_dc = 0
        for block in qc.tolist():
            diff = block[0] - prev_dc
            prev_dc = block[0]
            cat = _category(diff)
            enc.encode(dc_model, cat)
            if cat:
                _put_value(enc, diff, cat)
            last = max((k for k in range(1, 64) if block[k]), default=0)
            run = 0
            for k in range(1, last + 1):
                v = block[k]
                if v == 0:
                    run += 1
                    continue
                while run >= 16:
                    enc.encode(ac_model, _ZRL)
                    run -= 16
                cat = _category(v)
                if cat > _MAX_CATEGORY:
                    raise ValueError(f"coefficient {v} too large to code")
                enc.encode(ac_model, 2 + run * _MAX_CATEGORY + cat - 1)
                _put_value(enc, v, cat)
                run = 0
            if last < 63:
                enc.encode(ac_model, _EOB)
    header = bytes([quality, BLOCK, ph, pw])
    return FramePayload(header + enc.finish(), frame.height, frame.width, frame.channels)


def decode_frame(payload: FramePayload) -> Frame:
    data = payload.data
    if len(data) < 4:
        raise ParseError("payload shorter than its 4-byte header", len(data))
    quality, block, ph, pw = data[0], data[1], data[2], data[3]
    if quality > MAX_QUALITY:
        raise ParseError(f"quality {quality} out of range", 0)
    if block != BLOCK:
        raise ParseError(f"unsupported block size {block}", 1)
    h, w, c = payload.height, payload.width, payload.channels
    if ph != (-h) % BLOCK or pw != (-w) % BLOCK:
        raise ParseError(f"padding ({ph}, {pw}) inconsistent with {h}x{w} frame", 2)
    nblocks = ((h + ph) // BLOCK) * ((w + pw) // BLOCK)
    dec = RangeDecoder(data, 4)
    q = np.zeros((c, nblocks, BLOCK * BLOCK), dtype=np.int64)
    for ch in range(c):
        dc_model = AdaptiveModel(_MAX_CATEGORY + 1)
        ac_model = AdaptiveModel(_AC_ALPHABET)
        prev_dc = 0
        for b in range(nblocks):
            cat = dec.decode(dc_model)
            diff = _get_value(dec, cat) if cat else 0
            prev_dc += diff
            q[ch, b, 0] = prev_dc
            k = 1
            while k < 64:
                sym = dec.decode(ac_model)
                if sym == _EOB:
                    break
                if sym == _ZRL:
                    k += 16
                    if k > 63:
                        raise ParseError("zero run past end of block", dec.position)
                    continue
                run, cat = divmod(sym - 2, _MAX_CATEGORY)
                k += run
                if k > 63:
                    raise ParseError("coefficient index past end of block", dec.position)
                q[ch, b, k] = _get_value(dec, cat + 1)
                k += 1
    if dec.position != len(data):
        raise ParseError(f"{len(data) - dec.position} trailing bytes in payload", dec.position)
    return Frame(dequantize(q, quality, h, w, ph, pw))


class BlockDCTCodec:
    """Intra codec at a fixed quality level; the Enc/Dec pair used by the pipeline."""

    name = "blockdct"

    def __init__(self, quality: int = 5):
        step_table(quality)
        self.quality = quality

    def encode(self, frame: Frame) -> bytes:
        return encode_frame(frame, self.quality).data

    def decode(self, data: bytes, height: int, width: int, channels: int) -> Frame:
        return decode_frame(FramePayload(bytes(data), height, width, channels))

    def __repr__(self) -> str:
        return f"BlockDCTCodec(quality={self.quality})"


"""The GVC1 bitstream container and bits-per-pixel accounting.

Byte layout (all integers little-endian)::

    offset  size  field
    0       4     magic b"GVC1"
    4       2     version (u16, currently 1)
    6       4     T, number of frames (u32)
    10      2     H (u16)
    12      2     W (u16)
    14      1     C (u8)
    15      2     conditioning window N_cond (u16)
    17      2     generation window j (u16)
    19      8     threshold rho in units of 1e-9 (u64; 0xFFFFFFFFFFFFFFFF = +inf)
    27      8     sampler base seed (u64)
    35      8     predictor fingerprint (8 raw bytes)
    43      4     record count (u32)
    47      ...   records

    record := kind (u8: 0 = INTRA, 1 = GENERATED) | count (u32) | body
    body   := INTRA:     count x (payload length u32 | payload bytes)
              GENERATED: empty

Records carry at least one frame each, adjacent records have different
kinds, and record counts sum to T. No bytes may follow the last record, so
every valid container has exactly one serialization.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from enum import IntEnum

from .errors import ParseError

MAGIC = b"GVC1"
VERSION = 1
_HEADER = struct.Struct("<4sHIHHBHHQQ8sI")
HEADER_SIZE = _HEADER.size
_RECORD = struct.Struct("<BI")
_LEN = struct.Struct("<I")

THRESHOLD_SCALE = 10**9
THRESHOLD_INF = 2**64 - 1


class RecordKind(IntEnum):
    INTRA = 0
    GENERATED = 1


@dataclass(frozen=True)
class FrameRecord:
    kind: RecordKind
    count: int
    payloads: tuple[bytes, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", RecordKind(self.kind))
        object.__setattr__(self, "payloads", tuple(bytes(p) for p in self.payloads))
        if self.count < 1:
            raise ValueError("a record must cover at least one frame")
        if self.kind is RecordKind.INTRA and len(self.payloads) != self.count:
            raise ValueError(f"INTRA record of {self.count} frames has {len(self.payloads)} payloads")
        if self.kind is RecordKind.GENERATED and self.payloads:
            raise ValueError("GENERATED records carry no payload")

    @property
    def nbytes(self) -> int:
        return _RECORD.size + sum(_LEN.size + len(p) for p in self.payloads)


def rho_to_fixed(rho: float) -> int:
    if math.isnan(rho) or rho < 0:
        raise ValueError(f"threshold must be non-negative, got {rho}")
    if math.isinf(rho):
        return THRESHOLD_INF
    fp = round(rho * THRESHOLD_SCALE)
    if fp >= THRESHOLD_INF:
        raise ValueError(f"threshold {rho} too large to store; use +inf")
    return fp


def fixed_to_rho(fp: int) -> float:
    return math.inf if fp == THRESHOLD_INF else fp / THRESHOLD_SCALE


def quantize_rho(rho: float) -> float:
    """The threshold value that survives a trip through the container."""
    return fixed_to_rho(rho_to_fixed(rho))


@dataclass(frozen=True)
class EncodedContainer:
    length: int
    height: int
    width: int
    channels: int
    cond_window: int
    gen_window: int
    threshold_fp: int
    sampler_seed: int
    model_digest: bytes = b"\x00" * 8
    records: tuple[FrameRecord, ...] = field(default_factory=tuple)
    version: int = VERSION

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if len(self.model_digest) != 8:
            raise ValueError("model_digest must be 8 bytes")
        total = sum(r.count for r in self.records)
        if self.records and total != self.length:
            raise ValueError(f"records cover {total} frames, header says {self.length}")
        for a, b in zip(self.records, self.records[1:]):
            if a.kind == b.kind:
                raise ValueError("adjacent records must differ in kind")

    @property
    def threshold(self) -> float:
        return fixed_to_rho(self.threshold_fp)

    def intra_indices(self) -> list[int]:
        """0-based indices of intra-coded frames (the set S)."""
        out, pos = [], 0
        for r in self.records:
            if r.kind is RecordKind.INTRA:
                out.extend(range(pos, pos + r.count))
            pos += r.count
        return out

    def payload_bytes(self) -> int:
        return sum(len(p) for r in self.records for p in r.payloads)


def merge_records(records: list[FrameRecord]) -> list[FrameRecord]:
    """Coalesce adjacent records of the same kind into canonical form."""
    out: list[FrameRecord] = []
    for r in records:
        if out and out[-1].kind == r.kind:
            prev = out.pop()
            r = FrameRecord(r.kind, prev.count + r.count, prev.payloads + r.payloads)
        out.append(r)
    return out


def write_container(c: EncodedContainer) -> bytes:
    if c.records and sum(r.count for r in c.records) != c.length:
        raise ValueError("records do not cover the video")
    parts = [
        _HEADER.pack(
            MAGIC, c.version, c.length, c.height, c.width, c.channels,
            c.cond_window, c.gen_window, c.threshold_fp, c.sampler_seed,
            c.model_digest, len(c.records),
        )
    ]
    for r in c.records:
        parts.append(_RECORD.pack(int(r.kind), r.count))
        for p in r.payloads:
            parts.append(_LEN.pack(len(p)))
            parts.append(p)
    return b"".join(parts)


def read_container(data: bytes) -> EncodedContainer:
    data = bytes(data)
    if len(data) < HEADER_SIZE:
        raise ParseError(f"truncated header: {len(data)} < {HEADER_SIZE} bytes", len(data))
    (magic, version, length, height, width, channels, ncond, jwin,
     thr, seed, digest, nrec) = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise ParseError(f"unsupported version {version}", 4)
    if length < 1 or height < 1 or width < 1:
        raise ParseError("T, H and W must be positive", 6)
    if channels not in (1, 3):
        raise ParseError(f"channel count {channels} not in (1, 3)", 14)
    if ncond < 1 or jwin < 1:
        raise ParseError("window sizes must be positive", 15)

    pos = HEADER_SIZE
    records: list[FrameRecord] = []
    covered = 0
    for _ in range(nrec):
        if pos + _RECORD.size > len(data):
            raise ParseError("truncated record header", pos)
        kind, count = _RECORD.unpack_from(data, pos)
        if kind not in (0, 1):
            raise ParseError(f"unknown record kind {kind}", pos)
        if count < 1:
            raise ParseError("zero-length record", pos + 1)
        if records and records[-1].kind == kind:
            raise ParseError("adjacent records of the same kind", pos)
        covered += count
        if covered > length:
            raise ParseError(f"records cover more than {length} frames", pos + 1)
        pos += _RECORD.size
        payloads = []
        if kind == RecordKind.INTRA:
            for _ in range(count):
                if pos + _LEN.size > len(data):
                    raise ParseError("truncated payload length", pos)
                (n,) = _LEN.unpack_from(data, pos)
                pos += _LEN.size
                if pos + n > len(data):
                    raise ParseError(f"truncated payload: need {n} bytes", pos)
                payloads.append(data[pos:pos + n])
                pos += n
        records.append(FrameRecord(RecordKind(kind), count, tuple(payloads)))
    if covered != length:
        raise ParseError(f"records cover {covered} of {length} frames", pos)
    if pos != len(data):
        raise ParseError(f"{len(data) - pos} trailing bytes", pos)
    return EncodedContainer(length, height, width, channels, ncond, jwin, thr, seed,
                            digest, tuple(records), version)


def bits_per_pixel(nbytes: int, length: int, height: int, width: int) -> float:
    return 8.0 * nbytes / (length * height * width)


def bpp(c: EncodedContainer) -> float:
    """Bits per pixel of a container.

    Counts every serialized byte except the fixed global header (record
    headers, length prefixes and payloads) and divides by T*H*W; channels are
    not part of the denominator.
    """
    return bits_per_pixel(sum(r.nbytes for r in c.records), c.length, c.height, c.width)

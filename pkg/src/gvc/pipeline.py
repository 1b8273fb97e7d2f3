"""Sequential predictive encoder and the matching decoder.

The encoder intra-codes the first ``n_cond`` frames, then repeatedly asks
the predictor for up to ``j`` frames conditioned on the last ``n_cond``
*reconstructed* frames. Candidates are accepted in order while their
distance to the original stays below ``rho``; the first failure intra-codes
a fresh conditioning window starting at the failing frame and prediction
resumes after it.

Each predictor call at position ``l`` (0-based index of the first frame to
predict) uses the seed ``derive_seed(base_seed, l)``. The decoder walks the
record layout, makes the same calls at the same positions and therefore
regenerates the encoder's reconstruction exactly.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import struct
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .codec.dct import BlockDCTCodec
from .container import (
    EncodedContainer,
    FrameRecord,
    RecordKind,
    merge_records,
    quantize_rho,
    rho_to_fixed,
)
from .errors import DimensionMismatchError, IntegrityError, ReproducibilityError
from .metrics import MetricSpec
from .video import Frame, VideoSequence

GENERATED = "GENERATED"
INTRA = "INTRA"


class Predictor(Protocol):
    n_cond: int
    channels: int

    def predict(self, cond: Sequence[Frame], n: int, seed: int) -> list[Frame]: ...

    def fingerprint(self) -> bytes: ...


class Codec(Protocol):
    def encode(self, frame: Frame) -> bytes: ...

    def decode(self, data: bytes, height: int, width: int, channels: int) -> Frame: ...


class CopyLastPredictor:
    """Predicts every future frame as a copy of the last conditioning frame."""

    def __init__(self, n_cond: int = 1, channels: int = 1):
        self.n_cond = n_cond
        self.channels = channels

    def predict(self, cond: Sequence[Frame], n: int, seed: int) -> list[Frame]:
        return [cond[-1]] * n

    def fingerprint(self) -> bytes:
        return hashlib.sha256(f"copy-last:{self.n_cond}".encode()).digest()[:8]


def derive_seed(base_seed: int, position: int) -> int:
    """Per-call sampler seed for the predictor call at ``position``."""
    h = hashlib.blake2b(struct.pack("<QQ", base_seed & (2**64 - 1), position), digest_size=8)
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class EncoderConfig:
    n_cond: int = 2
    j: int = 4
    rho: float = 0.1
    quality: int = 5
    seed: int = 0
    metric: MetricSpec = field(default_factory=MetricSpec)

    def __post_init__(self):
        if self.n_cond < 1 or self.j < 1:
            raise ValueError("n_cond and j must be >= 1")
        if math.isnan(self.rho) or self.rho < 0:
            raise ValueError("rho must be >= 0")


@dataclass(frozen=True)
class TraceEntry:
    index: int
    decision: str
    distance: float | None
    cum_bits: int


@dataclass
class EncodeTrace:
    entries: list[TraceEntry]
    reconstruction: list[Frame]
    calls: list[int]
    rho: float

    def generated(self) -> list[int]:
        return [e.index for e in self.entries if e.decision == GENERATED]

    def intra(self) -> list[int]:
        return [e.index for e in self.entries if e.decision == INTRA]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frame", "decision", "D", "cum_bits"])
        for e in self.entries:
            w.writerow([e.index, e.decision, "" if e.distance is None else repr(e.distance), e.cum_bits])
        return buf.getvalue()


def _check_predictor(predictor: Predictor, channels: int) -> None:
    if predictor.channels != channels:
        raise DimensionMismatchError(f"video has {channels} channels, predictor expects {predictor.channels}")


def encode_video(video: VideoSequence, config: EncoderConfig, predictor: Predictor,
                 codec: Codec | None = None, metric: MetricSpec | None = None
                 ) -> tuple[EncodedContainer, EncodeTrace]:
    codec = codec or BlockDCTCodec(config.quality)
    metric = metric or config.metric
    n, j, T = config.n_cond, config.j, len(video)
    if T < n:
        raise ValueError(f"video of {T} frames shorter than the conditioning window {n}")
    if predictor.n_cond > n:
        raise DimensionMismatchError(f"predictor needs {predictor.n_cond} conditioning frames, window is {n}")
    _check_predictor(predictor, video.channels)
    rho = quantize_rho(config.rho)
    h, w, c = video.height, video.width, video.channels

    recon: list[Frame | None] = [None] * T
    decisions: list[tuple[str, float | None]] = [("", None)] * T
    records: list[FrameRecord] = []
    calls: list[int] = []

    def intra(start: int, stop: int) -> None:
        payloads = []
        for i in range(start, stop):
            data = codec.encode(video[i])
            recon[i] = codec.decode(data, h, w, c)
            decisions[i] = (INTRA, None)
            payloads.append(data)
        records.append(FrameRecord(RecordKind.INTRA, stop - start, tuple(payloads)))

    intra(0, n)
    pos = n
    while pos < T:
        span = min(j, T - pos)
        calls.append(pos)
        cands = predictor.predict(recon[pos - n:pos], span, derive_seed(config.seed, pos))
        if len(cands) != span:
            raise DimensionMismatchError(f"predictor returned {len(cands)} frames, asked for {span}")
        accepted = 0
        for i, cand in enumerate(cands):
            if cand.shape != (c, h, w):
                raise DimensionMismatchError(f"predicted frame shape {cand.shape} != {(c, h, w)}")
            d = float(metric(cand, video[pos + i]))
            if d < rho:
                recon[pos + i] = cand
                decisions[pos + i] = (GENERATED, d)
                accepted += 1
            else:
                break
        if accepted:
            records.append(FrameRecord(RecordKind.GENERATED, accepted))
        if accepted == span:
            pos += span
        else:
            start = pos + accepted
            stop = min(start + n, T)
            intra(start, stop)
            pos = stop

    records = merge_records(records)
    container = EncodedContainer(
        length=T, height=h, width=w, channels=c, cond_window=n, gen_window=j,
        threshold_fp=rho_to_fixed(rho), sampler_seed=config.seed & (2**64 - 1),
        model_digest=predictor.fingerprint(), records=tuple(records),
    )
    entries = _trace_entries(container, decisions)
    return container, EncodeTrace(entries, list(recon), calls, rho)  # type: ignore[arg-type]


def _trace_entries(container: EncodedContainer, decisions) -> list[TraceEntry]:
    entries, bits, pos = [], 0, 0
    for r in container.records:
        for k in range(r.count):
            if k == 0:
                bits += 8 * 5
            if r.kind is RecordKind.INTRA:
                bits += 8 * (4 + len(r.payloads[k]))
            decision, d = decisions[pos]
            entries.append(TraceEntry(pos, decision, d, bits))
            pos += 1
    return entries


def decode_video(container: EncodedContainer, predictor: Predictor | None = None,
                 codec: Codec | None = None) -> VideoSequence:
    codec = codec or BlockDCTCodec()
    h, w, c = container.height, container.width, container.channels
    n, j, T = container.cond_window, container.gen_window, container.length
    has_generated = any(r.kind is RecordKind.GENERATED for r in container.records)
    if has_generated:
        if predictor is None:
            raise ReproducibilityError("container has generated frames but no predictor was supplied")
        if predictor.fingerprint() != container.model_digest:
            raise ReproducibilityError(
                f"predictor fingerprint {predictor.fingerprint().hex()} does not match "
                f"container {container.model_digest.hex()}"
            )
        _check_predictor(predictor, c)
        if container.records[0].kind is not RecordKind.INTRA or container.records[0].count < n:
            raise ReproducibilityError("generated frames before a full conditioning window")

    recon: list[Frame] = []
    for r in container.records:
        if r.kind is RecordKind.INTRA:
            recon.extend(codec.decode(p, h, w, c) for p in r.payloads)
            continue
        remaining = r.count
        while remaining:
            pos = len(recon)
            span = min(j, T - pos)
            cands = predictor.predict(recon[pos - n:pos], span, derive_seed(container.sampler_seed, pos))  # type: ignore[union-attr]
            take = min(remaining, span)
            recon.extend(cands[:take])
            remaining -= take
    return VideoSequence(recon)


def trace_from_container(container: EncodedContainer, reconstruction: Sequence[Frame]) -> EncodeTrace:
    """Decision trace implied by a container's record layout (distances unknown)."""
    decisions = []
    for r in container.records:
        kind = INTRA if r.kind is RecordKind.INTRA else GENERATED
        decisions.extend([(kind, None)] * r.count)
    return EncodeTrace(_trace_entries(container, decisions), list(reconstruction), [], container.threshold)


@dataclass
class VerifyReport:
    checked: int
    violations: list[tuple[int, float]]
    rho: float
    distances: dict[int, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.violations


def verify_threshold(trace: EncodeTrace, video: VideoSequence, metric: MetricSpec,
                     rho: float | None = None, strict: bool = True) -> VerifyReport:
    """Recompute D for every generated frame against the originals.

    With ``strict`` any frame at or above ``rho`` raises :class:`IntegrityError`
    naming the offending indices.
    """
    rho = trace.rho if rho is None else rho
    if len(trace.reconstruction) != len(video):
        raise DimensionMismatchError("trace and video lengths differ")
    violations, distances = [], {}
    for i in trace.generated():
        d = float(metric(trace.reconstruction[i], video[i]))
        distances[i] = d
        if not d < rho:
            violations.append((i, d))
    report = VerifyReport(len(distances), violations, rho, distances)
    if violations and strict:
        idx = [i for i, _ in violations]
        raise IntegrityError(f"{len(idx)} generated frame(s) at or above rho={rho}: frames {idx}", idx)
    return report

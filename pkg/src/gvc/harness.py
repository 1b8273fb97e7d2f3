"""Rate-distortion-perception sweeps, Pareto selection, baselines and reports.

Sweep CSV schema (one header line, then rows)::

    row_type      "cell" (one encode/decode of one video) or "aggregate"
    video_id      video index for cells, "*" for aggregates
    method        "gvc" or the external codec name
    quality, rho, seed
    n             videos aggregated (1 for cells)
    bpp, bpp_std
    psnr_db, psnr_db_std
    perceptual[<metric spec>], perceptual_std
    frechet[<feature spec>], frechet_std
    status        "ok" or the error that stopped the cycle

Standard deviations are sample (n - 1) deviations and empty for cells.
"""

from __future__ import annotations

import configparser
import csv
import io
import logging
import math
import os
import shutil
import statistics
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .container import bpp as container_bpp, bits_per_pixel
from .metrics import FeatureConfig, MetricSpec, PerceptualConfig, frechet_feature_distance, perceptual_distance, psnr
from .pipeline import EncoderConfig, Predictor, decode_video, encode_video
from .video import VideoSequence, load_video_dir, synth_dataset

log = logging.getLogger(__name__)

CRF_MIN, CRF_MAX = 0, 51
METRIC_RHO_RANGE = {"perceptual": 1.0, "psnr": 1.0, "mean_abs": 255.0, "external": math.inf}


@dataclass(frozen=True)
class RDPoint:
    video_id: str
    method: str
    quality: int | None
    rho: float | None
    seed: int | None
    bpp: float
    psnr_db: float
    perceptual: float
    frechet: float
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True)
class Aggregate:
    method: str
    quality: int | None
    rho: float | None
    seed: int | None
    n: int
    mean: dict[str, float]
    std: dict[str, float]


@dataclass(frozen=True)
class SweepSpec:
    qualities: tuple[int, ...]
    rhos: tuple[float, ...]
    seeds: tuple[int, ...] = (0,)
    n_cond: int = 2
    j: int = 4
    metric: str = "perceptual"
    perceptual: PerceptualConfig = PerceptualConfig()
    features: FeatureConfig = FeatureConfig()
    workers: int = 1
    dataset: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.qualities or not self.rhos or not self.seeds:
            raise ValueError("qualities, rhos and seeds must be non-empty")
        hi = METRIC_RHO_RANGE[self.metric]
        for r in self.rhos:
            if math.isnan(r) or r < 0 or (not math.isinf(r) and r > hi):
                raise ValueError(f"rho {r} outside [0, {hi}] (or +inf) for metric {self.metric}")

    def metric_spec(self) -> MetricSpec:
        return MetricSpec(kind=self.metric, perceptual=self.perceptual)


Measure = tuple[str, str, str]


def metric_columns(spec: SweepSpec) -> dict[str, str]:
    return {
        "perceptual": f"perceptual[{spec.perceptual.describe()}]",
        "frechet": f"frechet[{spec.features.describe()}]",
    }


def measure(original: VideoSequence, decoded: VideoSequence, perceptual: PerceptualConfig,
            features: FeatureConfig) -> tuple[float, float, float]:
    """Mean per-frame PSNR, mean per-frame perceptual distance, Frechet distance."""
    p = float(np.mean([psnr(a, b) for a, b in zip(original, decoded)]))
    d = float(np.mean([perceptual_distance(a, b, perceptual) for a, b in zip(original, decoded)]))
    f = frechet_feature_distance(list(original), list(decoded), features)
    return p, d, f


def run_cell(video_id: str, video: VideoSequence, spec: SweepSpec, predictor: Predictor,
             quality: int, rho: float, seed: int) -> RDPoint:
    try:
        cfg = EncoderConfig(n_cond=spec.n_cond, j=spec.j, rho=rho, quality=quality, seed=seed,
                            metric=spec.metric_spec())
        container, _ = encode_video(video, cfg, predictor)
        decoded = decode_video(container, predictor)
        p, d, f = measure(video, decoded, spec.perceptual, spec.features)
        return RDPoint(video_id, "gvc", quality, rho, seed, container_bpp(container), p, d, f)
    except Exception as exc:  # recorded per row; the sweep goes on
        log.warning("cell %s q=%s rho=%s seed=%s failed: %s", video_id, quality, rho, seed, exc)
        nan = math.nan
        return RDPoint(video_id, "gvc", quality, rho, seed, nan, nan, nan, nan, f"error: {exc}")


def aggregate(points: Sequence[RDPoint]) -> list[Aggregate]:
    """Mean and sample std over videos for every (method, quality, rho, seed)."""
    groups: dict[tuple, list[RDPoint]] = {}
    for p in points:
        groups.setdefault((p.method, p.quality, p.rho, p.seed), []).append(p)
    out = []
    for (method, q, r, s), pts in groups.items():
        good = [p for p in pts if p.ok]
        mean, std = {}, {}
        for name in ("bpp", "psnr_db", "perceptual", "frechet"):
            vals = [getattr(p, name) for p in good]
            mean[name] = statistics.fmean(vals) if vals else math.nan
            std[name] = statistics.stdev(vals) if len(vals) > 1 else math.nan
        out.append(Aggregate(method, q, r, s, len(good), mean, std))
    return out


def _sort_key(p: RDPoint):
    return (p.method, int(p.video_id) if p.video_id.isdigit() else p.video_id,
            -1 if p.quality is None else p.quality, -1.0 if p.rho is None else p.rho,
            -1 if p.seed is None else p.seed)


def rd_sweep(dataset: Sequence[VideoSequence], spec: SweepSpec, predictor: Predictor
             ) -> tuple[list[RDPoint], list[Aggregate]]:
    jobs = [(str(i), v, q, r, s) for i, v in enumerate(dataset)
            for q in spec.qualities for r in spec.rhos for s in spec.seeds]

    def run(job):
        vid, v, q, r, s = job
        return run_cell(vid, v, spec, predictor, q, r, s)

    if spec.workers > 1:
        with ThreadPoolExecutor(spec.workers) as ex:
            points = list(ex.map(run, jobs))
    else:
        points = [run(j) for j in jobs]
    points.sort(key=_sort_key)
    aggs = aggregate(points)
    aggs.sort(key=lambda a: (a.method, -1 if a.quality is None else a.quality,
                             -1.0 if a.rho is None else a.rho, -1 if a.seed is None else a.seed))
    return points, aggs


# -- Pareto selection -------------------------------------------------------

_OBJECTIVES = {"perceptual": 1.0, "frechet": 1.0, "psnr_db": -1.0, "psnr": -1.0}


def _objective(p: RDPoint, objective: str) -> float:
    sign = _OBJECTIVES[objective]
    name = "psnr_db" if objective == "psnr" else objective
    return sign * getattr(p, name)


def dominates(a: RDPoint, b: RDPoint, objective: str = "perceptual") -> bool:
    ma, mb = _objective(a, objective), _objective(b, objective)
    return a.bpp <= b.bpp and ma <= mb and (a.bpp < b.bpp or ma < mb)


def pareto_front(points: Sequence[RDPoint], objective: str = "perceptual") -> list[RDPoint]:
    """Non-dominated points under (bpp down, objective better), ordered by bpp.

    Failed cells are ignored. Exact ties are all kept; equal-bpp points keep
    their input order.
    """
    if objective not in _OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}")
    pts = [p for p in points if p.ok]
    order = sorted(range(len(pts)), key=lambda i: pts[i].bpp)
    keep = []
    best_before = math.inf  # best objective among strictly smaller bpp
    k = 0
    while k < len(order):
        g = k
        while g < len(order) and pts[order[g]].bpp == pts[order[k]].bpp:
            g += 1
        group = order[k:g]
        group_best = min(_objective(pts[i], objective) for i in group)
        if group_best < best_before:
            keep.extend(i for i in group if _objective(pts[i], objective) == group_best)
        best_before = min(best_before, group_best)
        k = g
    return [pts[i] for i in sorted(keep, key=lambda i: (pts[i].bpp, i))]


def select_optimal(test_points: Sequence[RDPoint], objective: str = "perceptual", max_bpp: float = math.inf,
                   mode: str = "test", train_points: Sequence[RDPoint] | None = None) -> list[RDPoint]:
    """Pick one (quality, rho) per test video within a bpp budget.

    ``mode="test"`` tunes on each test video's own rows. ``mode="train"``
    chooses the single configuration with the best mean objective over
    ``train_points`` (mean bpp within budget) and applies it to every test
    video. Selected points carry the mode in their ``method`` label.
    """
    if mode not in ("test", "train"):
        raise ValueError("mode must be 'test' or 'train'")
    pts = [p for p in test_points if p.ok]
    by_video: dict[str, list[RDPoint]] = {}
    for p in pts:
        by_video.setdefault(p.video_id, []).append(p)
    out = []
    if mode == "test":
        for vid in sorted(by_video, key=lambda v: (len(v), v)):
            cands = [p for p in by_video[vid] if p.bpp <= max_bpp]
            if cands:
                best = min(cands, key=lambda p: (_objective(p, objective), p.bpp))
                out.append(replace(best, method=f"{best.method}:tuned-on-test"))
        return out
    if not train_points:
        raise ValueError("mode='train' needs train_points")
    configs: dict[tuple, list[RDPoint]] = {}
    for p in train_points:
        if p.ok:
            configs.setdefault((p.quality, p.rho, p.seed), []).append(p)
    ranked = []
    for key, ps in configs.items():
        mb = statistics.fmean(p.bpp for p in ps)
        if mb <= max_bpp:
            ranked.append((statistics.fmean(_objective(p, objective) for p in ps), mb, key))
    if not ranked:
        return []
    _, _, (q, r, s) = min(ranked, key=lambda x: (x[0], x[1], str(x[2])))
    for vid in sorted(by_video, key=lambda v: (len(v), v)):
        for p in by_video[vid]:
            if (p.quality, p.rho, p.seed) == (q, r, s):
                out.append(replace(p, method=f"{p.method}:tuned-on-train"))
    return out


# -- external codec baseline ---------------------------------------------------


@dataclass
class BaselineResult:
    codec: str
    available: bool
    reason: str = ""
    points: list[RDPoint] = field(default_factory=list)

    def marker(self) -> dict:
        return {"codec": self.codec, "status": "ok" if self.available else "baseline unavailable",
                "reason": self.reason}


_FFMPEG_FORMATS = {"libx264": "h264", "libx265": "hevc"}


def validate_crf(crf_list: Iterable[int]) -> list[int]:
    out = []
    for crf in crf_list:
        if isinstance(crf, bool) or int(crf) != crf or not CRF_MIN <= crf <= CRF_MAX:
            raise ValueError(f"CRF {crf!r} outside the integer range [{CRF_MIN}, {CRF_MAX}]")
        out.append(int(crf))
    return out


def external_codec_baseline(video: VideoSequence, crf_list: Sequence[int], codec: str = "libx264",
                            ffmpeg: str = "ffmpeg", video_id: str = "0",
                            perceptual: PerceptualConfig = PerceptualConfig(),
                            features: FeatureConfig = FeatureConfig(), fps: int = 30) -> BaselineResult:
    """Encode ``video`` with an installed ffmpeg encoder at each CRF and measure it.

    Rates count the encoder's elementary stream only. Grayscale input is
    encoded as yuv420p and compared on the decoded luma plane.
    """
    crfs = validate_crf(crf_list)
    if codec not in _FFMPEG_FORMATS:
        raise ValueError(f"unsupported external codec {codec!r}")
    exe = shutil.which(ffmpeg)
    if exe is None:
        return BaselineResult(codec, False, f"{ffmpeg} not found on PATH")
    arr = video.to_array()
    t, c, h, w = arr.shape
    pix = "gray" if c == 1 else "rgb24"
    raw = (arr[:, 0] if c == 1 else arr.transpose(0, 2, 3, 1)).tobytes()
    result = BaselineResult(codec, True)
    with tempfile.TemporaryDirectory() as tmp:
        stream = Path(tmp) / f"out.{_FFMPEG_FORMATS[codec]}"
        for crf in crfs:
            enc = [exe, "-v", "error", "-y", "-f", "rawvideo", "-pix_fmt", pix, "-s", f"{w}x{h}",
                   "-r", str(fps), "-i", "pipe:", "-c:v", codec, "-crf", str(crf), "-pix_fmt", "yuv420p",
                   "-f", _FFMPEG_FORMATS[codec], str(stream)]
            try:
                subprocess.run(enc, input=raw, check=True, capture_output=True)
                dec = subprocess.run([exe, "-v", "error", "-i", str(stream), "-f", "rawvideo",
                                      "-pix_fmt", pix, "pipe:"], check=True, capture_output=True)
            except (OSError, subprocess.CalledProcessError) as exc:
                err = getattr(exc, "stderr", b"") or b""
                return BaselineResult(codec, False, f"{codec} failed at crf {crf}: {err.decode(errors='replace').strip() or exc}")
            frames = np.frombuffer(dec.stdout, dtype=np.uint8)
            if frames.size != t * h * w * c:
                return BaselineResult(codec, False, f"decoded {frames.size} samples, expected {t * h * w * c}")
            frames = frames.reshape(t, h, w, c).transpose(0, 3, 1, 2) if c == 3 else frames.reshape(t, 1, h, w)
            decoded = VideoSequence.from_array(frames)
            p, d, f = measure(video, decoded, perceptual, features)
            rate = bits_per_pixel(stream.stat().st_size, t, h, w)
            result.points.append(RDPoint(video_id, f"{codec}:crf={crf}", None, None, None, rate, p, d, f))
    return result


# -- reporting -----------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def sweep_csv(points: Sequence[RDPoint], aggregates: Sequence[Aggregate] = (),
              perceptual: PerceptualConfig = PerceptualConfig(),
              features: FeatureConfig = FeatureConfig()) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row_type", "video_id", "method", "quality", "rho", "seed", "n",
                "bpp", "bpp_std", "psnr_db", "psnr_db_std",
                f"perceptual[{perceptual.describe()}]", "perceptual_std",
                f"frechet[{features.describe()}]", "frechet_std", "status"])
    for p in points:
        w.writerow(["cell", p.video_id, p.method, _fmt(p.quality), _fmt(p.rho), _fmt(p.seed), 1,
                    _fmt(p.bpp), "", _fmt(p.psnr_db), "", _fmt(p.perceptual), "", _fmt(p.frechet), "", p.status])
    for a in aggregates:
        w.writerow(["aggregate", "*", a.method, _fmt(a.quality), _fmt(a.rho), _fmt(a.seed), a.n,
                    _fmt(a.mean["bpp"]), _fmt(a.std["bpp"]), _fmt(a.mean["psnr_db"]), _fmt(a.std["psnr_db"]),
                    _fmt(a.mean["perceptual"]), _fmt(a.std["perceptual"]),
                    _fmt(a.mean["frechet"]), _fmt(a.std["frechet"]), "ok" if a.n else "no data"])
    return buf.getvalue()


def read_sweep_csv(text: str) -> list[RDPoint]:
    """Cell rows of a sweep CSV back as points (aggregates are skipped)."""
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    col = {name.split("[")[0]: i for i, name in enumerate(header)}

    def num(s, kind=float):
        return None if s == "" else kind(s)

    out = []
    for r in body:
        if r[col["row_type"]] != "cell":
            continue
        get = lambda k: r[col[k]]
        out.append(RDPoint(get("video_id"), get("method"), num(get("quality"), int), num(get("rho")),
                           num(get("seed"), int), num(get("bpp")) if get("bpp") else math.nan,
                           num(get("psnr_db")) if get("psnr_db") else math.nan,
                           num(get("perceptual")) if get("perceptual") else math.nan,
                           num(get("frechet")) if get("frechet") else math.nan, get("status")))
    return out


def mean_std(values: Sequence[float]) -> tuple[float, float]:
    """Mean and sample standard deviation (NaN below two values)."""
    m = statistics.fmean(values)
    s = statistics.stdev(values) if len(values) > 1 else math.nan
    return m, s


def aggregate_table(points: Sequence[RDPoint], perceptual: PerceptualConfig = PerceptualConfig(),
                    features: FeatureConfig = FeatureConfig()) -> str:
    """Markdown table of mean +/- sample std per method."""
    by_method: dict[str, list[RDPoint]] = {}
    for p in points:
        if p.ok:
            by_method.setdefault(p.method, []).append(p)
    lines = [f"| method | n | bpp | PSNR (dB) | {perceptual.describe()} | {features.describe()} |",
             "|---|---|---|---|---|---|"]
    for method in sorted(by_method):
        ps = by_method[method]
        cells = []
        for name in ("bpp", "psnr_db", "perceptual", "frechet"):
            m, s = mean_std([getattr(p, name) for p in ps])
            cells.append(f"{m:.4g} ± {s:.3g}" if not math.isnan(s) else f"{m:.4g}")
        lines.append(f"| {method} | {len(ps)} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def report(points: Sequence[RDPoint], out_dir: str | os.PathLike, formats: Sequence[str] = ("csv", "table"),
           aggregates: Sequence[Aggregate] | None = None, perceptual: PerceptualConfig = PerceptualConfig(),
           features: FeatureConfig = FeatureConfig()) -> list[Path]:
    if not points:
        raise ValueError("nothing to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        p = out / "points.csv"
        p.write_text(sweep_csv(points, aggregates or (), perceptual, features))
        written.append(p)
    if "table" in formats:
        p = out / "table.md"
        p.write_text(aggregate_table(points, perceptual, features))
        written.append(p)
    if "curve" in formats:
        p = out / "curve.csv"
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "bpp", "psnr_db", "perceptual", "frechet"])
        for a in aggregate(points):
            w.writerow([a.method, _fmt(a.mean["bpp"]), _fmt(a.mean["psnr_db"]),
                        _fmt(a.mean["perceptual"]), _fmt(a.mean["frechet"])])
        p.write_text(buf.getvalue())
        written.append(p)
    return written


# -- config files ----------------------------------------------------------------


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.replace(",", " ").split())


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.replace(",", " ").split())


def load_sweep_spec(path: str | os.PathLike) -> SweepSpec:
    """Read an INI-style sweep file (sections ``[sweep]`` and ``[dataset]``)."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(path)
    s = cp["sweep"]
    return SweepSpec(
        qualities=_ints(s["qualities"]),
        rhos=_floats(s["rhos"]),
        seeds=_ints(s.get("seeds", "0")),
        n_cond=s.getint("n_cond", 2),
        j=s.getint("j", 4),
        metric=s.get("metric", "perceptual"),
        workers=s.getint("workers", 1),
        dataset=dict(cp["dataset"]) if cp.has_section("dataset") else {},
    )


def dataset_from_spec(spec: SweepSpec) -> list[VideoSequence]:
    """Videos named by the ``[dataset]`` section: ``raw_dir`` or synthetic parameters."""
    d = spec.dataset
    if "raw_dir" in d:
        return load_video_dir(d["raw_dir"])
    return synth_dataset(
        int(d.get("num_videos", 5)), int(d.get("length", 12)), int(d.get("height", 16)),
        int(d.get("width", 16)), int(d.get("num_objects", 1)),
        (int(d.get("velocity_min", -2)), int(d.get("velocity_max", 2))), int(d.get("seed", 0)),
    )

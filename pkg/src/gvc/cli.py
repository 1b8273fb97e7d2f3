"""Command-line entry point: ``gvc <subcommand> ...``.

Raw videos are headerless planar 8-bit files; ``--dims T,H,W,C`` gives the
shape, or a ``.dims`` sidecar next to the file is used when it is omitted.
A missing ``--checkpoint`` selects the copy-last-frame predictor.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .container import read_container, write_container
from .errors import GVCError
from .harness import (
    dataset_from_spec,
    external_codec_baseline,
    load_sweep_spec,
    pareto_front,
    rd_sweep,
    read_sweep_csv,
    report,
    sweep_csv,
)
from .metrics import MetricSpec
from .pipeline import CopyLastPredictor, EncoderConfig, decode_video, encode_video, trace_from_container, verify_threshold
from .video import dims_path, load_raw_video, load_video_dir, read_dims, save_video_dir, synth_dataset, write_dims, write_raw_video

log = logging.getLogger("gvc")


def _dims(arg: str | None, raw: str) -> tuple[int, int, int, int]:
    if arg:
        parts = [int(x) for x in arg.split(",")]
        if len(parts) != 4:
            raise SystemExit("--dims wants T,H,W,C")
        return parts[0], parts[1], parts[2], parts[3]
    side = dims_path(raw)
    if not side.exists():
        raise SystemExit(f"no --dims given and no sidecar {side}")
    return read_dims(side)


def _load(raw: str, dims: str | None):
    t, h, w, c = _dims(dims, raw)
    return load_raw_video(raw, h, w, c, t)


def _predictor(checkpoint: str | None, n_cond: int = 1, channels: int = 1):
    if checkpoint is None:
        return CopyLastPredictor(n_cond, channels)
    from .diffusion.checkpoint import load_predictor

    pred, _ = load_predictor(checkpoint)
    return pred


def cmd_encode(a) -> int:
    video = _load(a.input, a.dims)
    cfg = EncoderConfig(n_cond=a.ncond, j=a.jwindow, rho=a.rho, quality=a.quality, seed=a.seed,
                        metric=MetricSpec(kind=a.metric))
    container, trace = encode_video(video, cfg, _predictor(a.checkpoint, 1, video.channels))
    data = write_container(container)
    Path(a.out).write_bytes(data)
    if a.trace:
        Path(a.trace).write_text(trace.to_csv())
    else:
        sys.stdout.write(trace.to_csv())
    log.info("%d bytes, %d generated of %d frames", len(data), len(trace.generated()), len(video))
    return 0


def cmd_decode(a) -> int:
    container = read_container(Path(a.input).read_bytes())
    video = decode_video(container, _predictor(a.checkpoint, 1, container.channels))
    write_raw_video(video, a.out)
    write_dims(dims_path(a.out), video)
    return 0


def cmd_verify(a) -> int:
    container = read_container(Path(a.input).read_bytes())
    orig = load_raw_video(a.orig, container.height, container.width, container.channels, container.length)
    recon = decode_video(container, _predictor(a.checkpoint, 1, container.channels))
    trace = trace_from_container(container, list(recon))
    rep = verify_threshold(trace, orig, MetricSpec(kind=a.metric), strict=False)
    for i, d in sorted(rep.distances.items()):
        print(f"{i},{d!r},{'ok' if d < rep.rho else 'VIOLATION'}")
    print(f"checked {rep.checked} generated frames against rho={rep.rho!r}: "
          f"{'pass' if rep.passed else 'FAIL frames ' + str([i for i, _ in rep.violations])}")
    return 0 if rep.passed else 1


def cmd_gen_data(a) -> int:
    videos = synth_dataset(a.num_videos, a.length, a.height, a.width, a.num_objects,
                           (a.vmin, a.vmax), a.seed)
    save_video_dir(videos, a.out)
    return 0


def cmd_train(a) -> int:
    import torch

    from .diffusion.checkpoint import save_checkpoint
    from .diffusion.training import PredictorConfig, train_predictor

    torch.set_num_threads(a.threads)
    if a.data:
        data = load_video_dir(a.data)
    else:
        data = synth_dataset(a.num_videos, a.length, a.size, a.size, 1, seed=a.seed)
    cfg = PredictorConfig(n_cond=a.ncond, j=a.jwindow, num_steps=a.steps, beta_end=a.beta_end,
                          image_size=data[0].height, channels=data[0].channels)
    res = train_predictor(data, cfg, a.epochs, seed=a.seed, batch_size=a.batch_size, lr=a.lr)
    save_checkpoint(a.out, res.model, cfg)
    if a.curve:
        res.write_curve(a.curve)
    print(f"initial loss {res.initial_loss:.6f} final loss {res.final_loss:.6f}")
    return 0


def cmd_sweep(a) -> int:
    spec = load_sweep_spec(a.config)
    pred = _predictor(a.checkpoint, 1, 1)
    points, aggs = rd_sweep(dataset_from_spec(spec), spec, pred)
    text = sweep_csv(points, aggs, spec.perceptual, spec.features)
    Path(a.out).write_text(text)
    failed = sum(not p.ok for p in points)
    if failed:
        log.warning("%d of %d cells failed", failed, len(points))
    return 0


def cmd_pareto(a) -> int:
    points = read_sweep_csv(Path(a.input).read_text())
    front = pareto_front(points, a.objective)
    Path(a.out).write_text(sweep_csv(front))
    return 0


def cmd_baseline(a) -> int:
    video = _load(a.input, a.dims)
    crfs = [int(x) for x in a.crf.split(",")]
    res = external_codec_baseline(video, crfs, a.codec, a.ffmpeg)
    if not res.available:
        print(json.dumps(res.marker()))
        if a.out:
            Path(a.out).write_text(json.dumps(res.marker()) + "\n")
        return 0
    text = sweep_csv(res.points)
    if a.out:
        Path(a.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_report(a) -> int:
    points = []
    for path in a.input:
        points.extend(read_sweep_csv(Path(path).read_text()))
    for p in report(points, a.out, a.format.split(",")):
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gvc", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="encode a raw video into a container")
    p.add_argument("--input", required=True)
    p.add_argument("--dims")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--quality", type=int, default=5)
    p.add_argument("--ncond", type=int, default=2)
    p.add_argument("--jwindow", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint")
    p.add_argument("--metric", default="perceptual", choices=["perceptual", "psnr", "mean_abs"])
    p.add_argument("--out", required=True)
    p.add_argument("--trace", help="write the decision trace CSV here (default: stdout)")
    p.set_defaults(fn=cmd_encode)

    p = sub.add_parser("decode", help="decode a container to a raw video")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_decode)

    p = sub.add_parser("verify", help="re-check generated frames against the originals")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--orig", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--metric", default="perceptual", choices=["perceptual", "psnr", "mean_abs"])
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("gen-data", help="write synthetic moving-shape videos")
    p.add_argument("--out", required=True)
    p.add_argument("--num-videos", type=int, default=10)
    p.add_argument("--length", type=int, default=12)
    p.add_argument("--height", type=int, default=16)
    p.add_argument("--width", type=int, default=16)
    p.add_argument("--num-objects", type=int, default=1)
    p.add_argument("--vmin", type=int, default=-2)
    p.add_argument("--vmax", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train a diffusion predictor")
    p.add_argument("--data", help="directory of raw videos (default: synthesize)")
    p.add_argument("--num-videos", type=int, default=1000)
    p.add_argument("--length", type=int, default=12)
    p.add_argument("--size", type=int, default=16)
    p.add_argument("--ncond", type=int, default=2)
    p.add_argument("--jwindow", type=int, default=4)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--beta-end", type=float, default=0.2)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=2e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--curve", help="write the loss curve CSV here")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("sweep", help="run a (quality, rho, seed) grid from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("pareto", help="keep the non-dominated rows of a sweep CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--objective", default="perceptual", choices=["perceptual", "frechet", "psnr"])
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_pareto)

    p = sub.add_parser("baseline", help="measure an installed ffmpeg encoder over CRF values")
    p.add_argument("--input", required=True)
    p.add_argument("--dims")
    p.add_argument("--crf", default="20,30,40")
    p.add_argument("--codec", default="libx264", choices=["libx264", "libx265"])
    p.add_argument("--ffmpeg", default="ffmpeg")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_baseline)

    p = sub.add_parser("report", help="emit CSV, mean/std table and curve data from sweep CSVs")
    p.add_argument("--in", dest="input", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", default="csv,table,curve")
    p.set_defaults(fn=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (GVCError, ValueError, OSError) as exc:
        print(f"gvc {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())

"""Frames, video sequences, raw-file I/O and the synthetic moving-shapes dataset.

Raw files are headerless: frame-major, then channel (planar), then row-major
8-bit samples. Dimensions travel out of band, optionally in a ``name.dims``
sidecar holding ``"T H W C"``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import DimensionMismatchError


@dataclass(frozen=True, eq=False)
class Frame:
    """One 8-bit frame stored channel-planar as a ``(C, H, W)`` uint8 array."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 3:
            raise DimensionMismatchError(f"frame samples must be (C, H, W), got shape {s.shape}")
        if s.shape[0] not in (1, 3):
            raise DimensionMismatchError(f"channel count must be 1 or 3, got {s.shape[0]}")
        if s.dtype != np.uint8:
            if np.issubdtype(s.dtype, np.integer) and (s.min() < 0 or s.max() > 255):
                raise ValueError("frame samples outside [0, 255]")
            s = s.astype(np.uint8)
        s = np.ascontiguousarray(s)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def height(self) -> int:
        return self.samples.shape[1]

    @property
    def width(self) -> int:
        return self.samples.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.samples.shape  # type: ignore[return-value]

    def normalized(self) -> np.ndarray:
        """Float64 view mapped linearly from [0, 255] to [-1, 1]."""
        return self.samples.astype(np.float64) / 127.5 - 1.0

    @classmethod
    def from_normalized(cls, x: np.ndarray) -> "Frame":
        """Clamp to [-1, 1] and quantize to the nearest 8-bit level."""
        x = np.clip(np.asarray(x, dtype=np.float64), -1.0, 1.0)
        return cls(np.rint((x + 1.0) * 127.5).astype(np.uint8))

    def tobytes(self) -> bytes:
        return self.samples.tobytes()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Frame):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.samples, other.samples)

    def __hash__(self) -> int:
        return hash((self.shape, self.samples.tobytes()))


@dataclass(frozen=True)
class VideoSequence:
    frames: tuple[Frame, ...]

    def __init__(self, frames: Sequence[Frame]):
        frames = tuple(frames)
        if not frames:
            raise ValueError("a video needs at least one frame")
        shape = frames[0].shape
        for i, f in enumerate(frames):
            if f.shape != shape:
                raise DimensionMismatchError(f"frame {i} has shape {f.shape}, expected {shape}")
        object.__setattr__(self, "frames", frames)

    @classmethod
    def from_array(cls, array: np.ndarray) -> "VideoSequence":
        """Build from a ``(T, C, H, W)`` uint8 array."""
        array = np.asarray(array)
        if array.ndim != 4:
            raise DimensionMismatchError(f"expected (T, C, H, W), got shape {array.shape}")
        return cls([Frame(a) for a in array])

    def to_array(self) -> np.ndarray:
        return np.stack([f.samples for f in self.frames])

    @property
    def length(self) -> int:
        return len(self.frames)

    @property
    def channels(self) -> int:
        return self.frames[0].channels

    @property
    def height(self) -> int:
        return self.frames[0].height

    @property
    def width(self) -> int:
        return self.frames[0].width

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self) -> Iterator[Frame]:
        return iter(self.frames)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return list(self.frames[i])
        return self.frames[i]


def load_raw_video(path: str | os.PathLike, height: int, width: int, channels: int, length: int) -> VideoSequence:
    """Read a headerless planar 8-bit raw file of ``length`` frames."""
    for name, v in (("height", height), ("width", width), ("channels", channels), ("length", length)):
        if v <= 0:
            raise ValueError(f"{name} must be positive, got {v}")
    data = Path(path).read_bytes()
    expected = length * channels * height * width
    if len(data) != expected:
        raise DimensionMismatchError(
            f"{path}: {len(data)} bytes on disk, but {length}x{height}x{width}x{channels} needs {expected}"
        )
    arr = np.frombuffer(data, dtype=np.uint8).reshape(length, channels, height, width)
    return VideoSequence.from_array(arr)


def write_raw_video(video: VideoSequence, path: str | os.PathLike) -> None:
    Path(path).write_bytes(video.to_array().tobytes())


def read_dims(path: str | os.PathLike) -> tuple[int, int, int, int]:
    """Parse a ``.dims`` sidecar; returns ``(T, H, W, C)``."""
    fields = Path(path).read_text().split()
    if len(fields) != 4:
        raise ValueError(f"{path}: expected 'T H W C', got {fields!r}")
    t, h, w, c = (int(x) for x in fields)
    return t, h, w, c


def write_dims(path: str | os.PathLike, video: VideoSequence) -> None:
    Path(path).write_text(f"{video.length} {video.height} {video.width} {video.channels}\n")


def dims_path(raw_path: str | os.PathLike) -> Path:
    p = Path(raw_path)
    return p.with_suffix(".dims")


# Integer masks for the synthetic objects; values are intensity multipliers.
_SHAPES = (
    np.ones((3, 3), dtype=np.uint8),
    np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.uint8),
    np.ones((4, 4), dtype=np.uint8),
    np.array([[1, 0, 1], [0, 1, 0], [1, 0, 1]], dtype=np.uint8),
)


def reflect_step(pos: int, vel: int, lo: int, hi: int) -> tuple[int, int]:
    """Advance ``pos`` by ``vel`` inside ``[lo, hi]``, mirroring at the borders."""
    pos += vel
    if hi <= lo:
        return lo, vel
    while pos < lo or pos > hi:
        if pos < lo:
            pos = 2 * lo - pos
        else:
            pos = 2 * hi - pos
        vel = -vel
    return pos, vel


def synth_dataset(
    num_videos: int,
    length: int,
    height: int,
    width: int,
    num_objects: int = 1,
    velocity_range: tuple[int, int] = (-2, 2),
    seed: int = 0,
    channels: int = 1,
) -> list[VideoSequence]:
    """Bright shapes moving on black with constant integer velocity and border reflection.

    Everything after drawing the initial state is integer arithmetic, so the
    output is reproducible bit-for-bit given ``seed``.
    """
    if height < 8 or width < 8:
        raise ValueError("height and width must be at least 8")
    if length < 2:
        raise ValueError("length must be at least 2")
    vlo, vhi = velocity_range
    if vlo > vhi:
        raise ValueError("velocity_range must be (min, max)")
    rng = np.random.default_rng(seed)
    videos = []
    for _ in range(num_videos):
        objects = []
        for _ in range(num_objects):
            mask = _SHAPES[int(rng.integers(len(_SHAPES)))]
            level = rng.integers(160, 256, size=channels)
            mh, mw = mask.shape
            y = int(rng.integers(0, height - mh + 1))
            x = int(rng.integers(0, width - mw + 1))
            vy = int(rng.integers(vlo, vhi + 1))
            vx = int(rng.integers(vlo, vhi + 1))
            objects.append([mask, level, y, x, vy, vx])
        frames = np.zeros((length, channels, height, width), dtype=np.uint8)
        for t in range(length):
            canvas = frames[t]
            for obj in objects:
                mask, level, y, x = obj[0], obj[1], obj[2], obj[3]
                mh, mw = mask.shape
                patch = mask[None, :, :] * level[:, None, None]
                region = canvas[:, y:y + mh, x:x + mw]
                np.maximum(region, patch.astype(np.uint8), out=region)
            for obj in objects:
                mh, mw = obj[0].shape
                obj[2], obj[4] = reflect_step(obj[2], obj[4], 0, height - mh)
                obj[3], obj[5] = reflect_step(obj[3], obj[5], 0, width - mw)
        videos.append(VideoSequence.from_array(frames))
    return videos


def save_video_dir(videos: Sequence[VideoSequence], directory: str | os.PathLike) -> list[Path]:
    """Write ``video_000.raw`` (plus ``.dims``) and so on into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, v in enumerate(videos):
        p = d / f"video_{i:03d}.raw"
        write_raw_video(v, p)
        write_dims(dims_path(p), v)
        paths.append(p)
    return paths


def load_video_dir(directory: str | os.PathLike) -> list[VideoSequence]:
    """Every ``*.raw`` file with a ``.dims`` sidecar in ``directory``, in name order."""
    out = []
    for p in sorted(Path(directory).glob("*.raw")):
        t, h, w, c = read_dims(dims_path(p))
        out.append(load_raw_video(p, h, w, c, t))
    if not out:
        raise FileNotFoundError(f"no .raw videos with .dims sidecars in {directory}")
    return out

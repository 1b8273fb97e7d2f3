"""Checkpoint files for trained denoisers.

Layout (little-endian)::

    magic b"GVCK" | version u16 | config length u32 | config (UTF-8 JSON)
    | tensor count u32 | tensors...

    tensor := name length u16 | name (UTF-8) | dtype u8 (0 = float32,
              1 = float64) | ndim u8 | ndim x dim u32 | raw data

Tensors appear in ``state_dict`` order. The JSON object holds the
:class:`PredictorConfig` fields.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from ..errors import ParseError
from .network import Denoiser
from .sampling import DiffusionPredictor, TorchEpsModel
from .training import PredictorConfig

MAGIC = b"GVCK"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {torch.float32: 0, torch.float64: 1}


def checkpoint_bytes(model: Denoiser, config: PredictorConfig) -> bytes:
    cfg = json.dumps(asdict(config), sort_keys=True).encode()
    state = model.state_dict()
    parts = [MAGIC, struct.pack("<HI", VERSION, len(cfg)), cfg, struct.pack("<I", len(state))]
    for name, tensor in state.items():
        code = _CODES.get(tensor.dtype)
        if code is None:
            raise ValueError(f"unsupported dtype {tensor.dtype} for {name}")
        arr = tensor.detach().cpu().contiguous().numpy().astype(_DTYPES[code])
        raw = name.encode()
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<BB", code, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def save_checkpoint(path: str | os.PathLike, model: Denoiser, config: PredictorConfig) -> None:
    Path(path).write_bytes(checkpoint_bytes(model, config))


def parse_checkpoint(data: bytes) -> tuple[Denoiser, PredictorConfig]:
    def need(pos: int, n: int) -> None:
        if pos + n > len(data):
            raise ParseError("truncated checkpoint", pos)

    need(0, 10)
    if data[:4] != MAGIC:
        raise ParseError("not a checkpoint file", 0)
    version, clen = struct.unpack_from("<HI", data, 4)
    if version != VERSION:
        raise ParseError(f"unsupported checkpoint version {version}", 4)
    pos = 10
    need(pos, clen)
    config = PredictorConfig(**json.loads(data[pos:pos + clen]))
    pos += clen
    need(pos, 4)
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    state = {}
    for _ in range(count):
        need(pos, 2)
        (nlen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        need(pos, nlen + 2)
        name = data[pos:pos + nlen].decode()
        pos += nlen
        code, ndim = struct.unpack_from("<BB", data, pos)
        pos += 2
        if code not in _DTYPES:
            raise ParseError(f"unknown dtype code {code}", pos - 2)
        need(pos, 4 * ndim)
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        dt = _DTYPES[code]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        need(pos, nbytes)
        arr = np.frombuffer(data, dtype=dt, count=nbytes // dt.itemsize, offset=pos).reshape(shape)
        state[name] = torch.from_numpy(arr.copy())
        pos += nbytes
    if pos != len(data):
        raise ParseError("trailing bytes in checkpoint", pos)
    model = Denoiser(config.denoiser_config())
    first = next(iter(state.values()), None)
    if first is not None and first.dtype == torch.float64:
        model = model.double()
    model.load_state_dict(state)
    return model.eval(), config


def load_checkpoint(path: str | os.PathLike) -> tuple[Denoiser, PredictorConfig]:
    return parse_checkpoint(Path(path).read_bytes())


def load_predictor(path: str | os.PathLike) -> tuple[DiffusionPredictor, PredictorConfig]:
    model, config = load_checkpoint(path)
    return DiffusionPredictor(TorchEpsModel(model), config.schedule()), config

"""Checkpoint files: ``SERM`` magic, u32 header length, JSON header, raw float32 buffers."""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from ..errors import DecodeError
from .model import Model, ModelConfig

MAGIC = b"SERM"
FORMAT_VERSION = 1


def save_checkpoint(model: Model, path: str | os.PathLike, extra: dict | None = None) -> None:
    tensors = [("param", k, v) for k, v in model.params.items()]
    tensors += [("buffer", k, v) for k, v in model.buffers.items()]
    header = {
        "format_version": FORMAT_VERSION,
        "model": model.config.to_dict(),
        "seed": model.seed,
        "tensors": [{"role": r, "name": k, "shape": list(v.shape)} for r, k, v in tensors],
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<I", len(blob)) + blob)
        for _, _, v in tensors:
            fh.write(np.ascontiguousarray(v, dtype="<f4").tobytes())


def load_checkpoint(path: str | os.PathLike) -> tuple[Model, dict]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise DecodeError(f"{path}: not a checkpoint", chunk="SERM")
    try:
        (n,) = struct.unpack("<I", data[4:8])
        header = json.loads(data[8:8 + n])
    except (struct.error, ValueError):
        raise DecodeError(f"{path}: damaged checkpoint header", chunk="SERM") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise DecodeError(f"{path}: unsupported checkpoint version", chunk="SERM")
    offset = 8 + n
    params, buffers = {}, {}
    for t in header["tensors"]:
        count = int(np.prod(t["shape"]))
        if offset + 4 * count > len(data):
            raise DecodeError(f"{path}: truncated tensor {t['name']}", chunk="SERM")
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        offset += 4 * count
        target = params if t["role"] == "param" else buffers
        target[t["name"]] = arr.reshape(t["shape"]).astype(np.float32)
    if offset != len(data):
        raise DecodeError(f"{path}: trailing or missing tensor data", chunk="SERM")
    model = Model(ModelConfig.from_dict(header["model"]), params, buffers, header["seed"])
    return model, header["extra"]

"""Binary checkpoint files.

Layout::

    b"ZLC1" | uint32 LE header length | JSON header | float32 LE tensor data

The header carries the model config, the training spec, tokenizer defaults
and a manifest of ``{name, shape, offset, nbytes}`` entries whose offsets are
relative to the start of the tensor data.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointFormatError
from .network import ModelConfig, ModelParams, param_shapes
from .training import TrainSpec

MAGIC = b"ZLC1"
_LEN = struct.Struct("<I")
_DTYPE = np.dtype("<f4")


def to_bytes(params: ModelParams, train_spec: TrainSpec | None = None,
             tokenizer: dict | None = None) -> bytes:
    manifest = []
    chunks = []
    offset = 0
    for name, tensor in params.tensors.items():
        data = np.ascontiguousarray(tensor, dtype=_DTYPE).tobytes()
        manifest.append({"name": name, "shape": list(tensor.shape), "offset": offset,
                         "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    header = {
        "format": 1,
        "dtype": "float32-le",
        "model_config": params.config.to_json(),
        "train_spec": train_spec.to_json() if train_spec is not None else None,
        "tokenizer": tokenizer or {"N": params.config.n_bins, "strategy": "uniform"},
        "tensors": manifest,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + _LEN.pack(len(blob)) + blob + b"".join(chunks)


def read_header(data: bytes) -> tuple[dict, int]:
    """Parse the header; returns it with the offset of the tensor data."""
    if data[:4] != MAGIC:
        raise CheckpointFormatError("not a checkpoint: bad magic bytes")
    if len(data) < 8:
        raise CheckpointFormatError("truncated header length")
    (n,) = _LEN.unpack_from(data, 4)
    try:
        header = json.loads(data[8 : 8 + n])
    except ValueError as exc:
        raise CheckpointFormatError(f"unreadable header: {exc}") from None
    return header, 8 + n


def from_bytes(data: bytes) -> tuple[ModelParams, dict]:
    header, base = read_header(data)
    try:
        cfg = ModelConfig(**header["model_config"])
        manifest = [(e["name"], tuple(e["shape"]), e["offset"], e["nbytes"]) for e in header["tensors"]]
    except (KeyError, TypeError) as exc:
        raise CheckpointFormatError(f"incomplete header: {exc}") from None
    expected = param_shapes(cfg)
    tensors = {}
    for name, shape, offset, nbytes in manifest:
        if expected.get(name) != shape:
            raise CheckpointFormatError(f"tensor {name} has unexpected shape {shape}")
        start = base + offset
        end = start + nbytes
        if end > len(data) or nbytes != 4 * int(np.prod(shape)):
            raise CheckpointFormatError(f"tensor {name} runs past the end of the file")
        tensors[name] = np.frombuffer(data[start:end], dtype=_DTYPE).reshape(shape).astype(np.float32)
    if set(tensors) != set(expected):
        raise CheckpointFormatError("manifest does not cover every model tensor")
    return ModelParams(cfg, tensors), header


def save(path: str | Path, params: ModelParams, train_spec: TrainSpec | None = None,
         tokenizer: dict | None = None) -> None:
    Path(path).write_bytes(to_bytes(params, train_spec, tokenizer))


def load(path: str | Path) -> tuple[ModelParams, dict]:
    return from_bytes(Path(path).read_bytes())

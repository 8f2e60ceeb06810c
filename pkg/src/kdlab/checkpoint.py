"""Binary parameter checkpoints.

Byte layout (all integers little-endian; documented in docs/FORMATS.md):

    magic    8 bytes   b"KDLCKPT\\x01" (trailing byte is the format version)
    hlen     uint32    length of the JSON header
    header   hlen      UTF-8 JSON: {"spec": ModelSpec dict, "frozen": bool,
                                    "meta": {...}}
    count    uint32    number of parameter records
    record   repeated  nlen:uint16, name:utf-8, ndim:uint8, dims:uint32*ndim,
                       data: float32 little-endian, row-major

Records are written in sorted name order so the file bytes are a pure
function of the model state.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .models import Model, ModelSpec
from .tensor import Tensor

MAGIC = b"KDLCKPT\x01"


class CheckpointError(ValueError):
    pass


def save_model(model: Model, path, meta: dict | None = None) -> str:
    """Write the checkpoint; returns its sha256 hex digest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = json.dumps({
        "spec": model.spec.to_dict(),
        "frozen": model.frozen,
        "meta": meta or {},
    }, sort_keys=True).encode("utf-8")
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", len(header))
    blob += header
    blob += struct.pack("<I", len(model.params))
    for name in sorted(model.params):
        data = model.params[name].data
        nb = name.encode("utf-8")
        blob += struct.pack("<H", len(nb))
        blob += nb
        blob += struct.pack("<B", data.ndim)
        blob += struct.pack(f"<{data.ndim}I", *data.shape)
        blob += np.ascontiguousarray(data, dtype="<f4").tobytes()
    path.write_bytes(bytes(blob))
    return hashlib.sha256(bytes(blob)).hexdigest()


def load_model(path) -> tuple[Model, dict]:
    """Read a checkpoint back into a Model; returns (model, meta)."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:8]!r}, expected {MAGIC!r}")
    off = 8
    (hlen,) = struct.unpack_from("<I", raw, off)
    off += 4
    header = json.loads(raw[off:off + hlen].decode("utf-8"))
    off += hlen
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    params: dict[str, Tensor] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off:off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<B", raw, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", raw, off)
        off += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(raw, dtype="<f4", count=size, offset=off).reshape(shape)
        off += 4 * size
        params[name] = Tensor(data.copy())
    spec = ModelSpec.from_dict(header["spec"])
    model = Model(spec, params=params, frozen=header["frozen"])
    return model, header.get("meta", {})


def checkpoint_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()

"""Reader/writer for the IDX byte format used by the classic digit corpora.

Big-endian header: 2 zero bytes, a type code (0x08 = unsigned byte), the
number of dimensions, then one uint32 per dimension, then raw data. Files may
be gzip-compressed (detected by suffix).
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

_TYPE_UBYTE = 0x08


def _open(path, mode):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode)
    return open(path, mode)


def read_idx(path) -> np.ndarray:
    with _open(path, "rb") as f:
        zero1, zero2, dtype, ndim = struct.unpack(">BBBB", f.read(4))
        if zero1 != 0 or zero2 != 0:
            raise ValueError(f"{path}: not an IDX file (bad leading bytes)")
        if dtype != _TYPE_UBYTE:
            raise ValueError(f"{path}: unsupported IDX type code 0x{dtype:02x}")
        dims = struct.unpack(f">{ndim}I", f.read(4 * ndim))
        count = int(np.prod(dims))
        data = np.frombuffer(f.read(count), dtype=np.uint8)
        if data.size != count:
            raise ValueError(f"{path}: truncated (expected {count} bytes, got {data.size})")
        return data.reshape(dims).copy()


def write_idx(path, array: np.ndarray):
    array = np.ascontiguousarray(array, dtype=np.uint8)
    with _open(path, "wb") as f:
        f.write(struct.pack(">BBBB", 0, 0, _TYPE_UBYTE, array.ndim))
        f.write(struct.pack(f">{array.ndim}I", *array.shape))
        f.write(array.tobytes())


def _find(dirpath: Path, stem: str) -> Path:
    for suffix in ("", ".gz"):
        for sep in ("-", "."):
            candidate = dirpath / f"{stem.replace('-', sep)}{suffix}"
            if candidate.exists():
                return candidate
    raise FileNotFoundError(
        f"no IDX file for {stem!r} under {dirpath} (tried raw and .gz, '-' and '.')"
    )


def load_idx_dataset(dirpath, split: str = "train") -> tuple[np.ndarray, np.ndarray]:
    """Load (images uint8 NxHxW, labels uint8 N) for split 'train' or 't10k'/'test'."""
    dirpath = Path(dirpath)
    stem = {"train": "train", "test": "t10k", "t10k": "t10k"}[split]
    images = read_idx(_find(dirpath, f"{stem}-images-idx3-ubyte"))
    labels = read_idx(_find(dirpath, f"{stem}-labels-idx1-ubyte"))
    if images.shape[0] != labels.shape[0]:
        raise ValueError(
            f"{dirpath}: image count {images.shape[0]} != label count {labels.shape[0]}"
        )
    return images, labels


def save_idx_dataset(dirpath, images: np.ndarray, labels: np.ndarray, split="train"):
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    stem = {"train": "train", "test": "t10k", "t10k": "t10k"}[split]
    write_idx(dirpath / f"{stem}-images-idx3-ubyte", images)
    write_idx(dirpath / f"{stem}-labels-idx1-ubyte", labels)

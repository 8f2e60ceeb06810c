"""Building distillation datasets from a pool and a frozen teacher.

Every stored example keeps the label the teacher assigned it (argmax), so the
dataset satisfies "teacher(x) == y" by construction; ``verify_labels`` re-runs
the teacher as an audit. Per-class quotas follow the skip/replicate rules:

  * base quota is target // R per class, remainder spread one unit at a time
    over the nonempty classes in ascending class order;
  * classes the teacher never predicted are skipped and their base units are
    redistributed round-robin over the nonempty classes, ascending order;
  * classes with fewer images than their quota replicate by cycling through
    their images in pool order; classes with more sample without replacement.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datagen import ImagePool, POOL_MAGIC
from .models import Model, predict


@dataclass
class ClassHistogram:
    """Counts of teacher argmax predictions per class."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 1:
            raise ValueError("histogram must be one-dimensional")
        if (self.counts < 0).any():
            raise ValueError("histogram counts must be nonnegative")

    @property
    def num_classes(self) -> int:
        return int(self.counts.size)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def nonempty(self) -> list[int]:
        return [int(i) for i in np.nonzero(self.counts)[0]]


def label_pool(teacher: Model, pool: ImagePool, batch_size: int = 256):
    """Teacher argmax label for every pool image, plus the class histogram."""
    if not teacher.frozen:
        raise ValueError("labeling requires a frozen teacher")
    R = teacher.spec.num_classes
    if len(pool) == 0:
        return np.zeros(0, dtype=np.int64), ClassHistogram(np.zeros(R, dtype=np.int64))
    logits, _ = predict(teacher, pool.to_float_nchw(), batch_size=batch_size)
    labels = logits.argmax(axis=1).astype(np.int64)
    counts = np.bincount(labels, minlength=R)
    return labels, ClassHistogram(counts)


def compute_quotas(counts, target_total: int) -> dict[int, int]:
    """Per-class quotas for the skip/replicate allocation; sums to the target."""
    counts = np.asarray(counts, dtype=np.int64)
    R = counts.size
    nonempty = [int(i) for i in np.nonzero(counts)[0]]
    if not nonempty:
        raise ValueError("cannot curate: teacher predicted no class at all")
    base, rem = divmod(int(target_total), R)
    quotas = {i: base for i in nonempty}
    for j in range(rem):
        quotas[nonempty[j % len(nonempty)]] += 1
    skipped_units = base * (R - len(nonempty))
    for j in range(skipped_units):
        quotas[nonempty[j % len(nonempty)]] += 1
    return quotas


@dataclass
class CuratedDataset:
    """Materialized distillation examples plus their provenance manifest."""

    images: np.ndarray            # (N,H,W,3) uint8
    labels: np.ndarray            # (N,) teacher argmax labels
    source_idx: np.ndarray        # (N,) index into source pool; -1 for generated
    replicated: np.ndarray        # (N,) bool, True for cycled duplicates
    num_classes: int
    quotas: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)
    source_pool: str = ""
    teacher_checksum: str | None = None
    origin: np.ndarray | None = None      # 0 = curated original, 1 = attack-generated
    attack_records: list | None = None

    def __post_init__(self):
        self.images = np.ascontiguousarray(self.images, dtype=np.uint8)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.source_idx = np.asarray(self.source_idx, dtype=np.int64)
        self.replicated = np.asarray(self.replicated, dtype=bool)
        if self.origin is None:
            self.origin = np.zeros(len(self.labels), dtype=np.int8)
        else:
            self.origin = np.asarray(self.origin, dtype=np.int8)

    def __len__(self):
        return self.images.shape[0]

    def histogram(self) -> ClassHistogram:
        return ClassHistogram(np.bincount(self.labels, minlength=self.num_classes))

    def to_float_nchw(self) -> np.ndarray:
        return np.ascontiguousarray(
            self.images.transpose(0, 3, 1, 2).astype(np.float32) / 255.0)

    def replication_stats(self) -> dict:
        flags = self.replicated
        return {"replicated_examples": int(flags.sum()),
                "fraction": float(flags.mean()) if len(flags) else 0.0}

    def save(self, dirpath):
        dirpath = Path(dirpath)
        dirpath.mkdir(parents=True, exist_ok=True)
        n, h, w, c = self.images.shape
        with open(dirpath / "images.bin", "wb") as f:
            f.write(POOL_MAGIC)
            f.write(struct.pack("<IIII", n, h, w, c))
            f.write(self.images.tobytes())
        manifest = {
            "size": n,
            "num_classes": self.num_classes,
            "labels": self.labels.tolist(),
            "source_idx": self.source_idx.tolist(),
            "replicated": self.replicated.astype(int).tolist(),
            "origin": self.origin.astype(int).tolist(),
            "quotas": {str(k): int(v) for k, v in self.quotas.items()},
            "skipped": [int(i) for i in self.skipped],
            "source_pool": self.source_pool,
            "teacher_checksum": self.teacher_checksum,
            "attack_records": self.attack_records,
        }
        (dirpath / "manifest.json").write_text(json.dumps(manifest, indent=1))

    @classmethod
    def load(cls, dirpath) -> "CuratedDataset":
        dirpath = Path(dirpath)
        raw = (dirpath / "images.bin").read_bytes()
        if raw[:8] != POOL_MAGIC:
            raise ValueError(f"{dirpath}/images.bin: bad magic {raw[:8]!r}")
        n, h, w, c = struct.unpack_from("<IIII", raw, 8)
        images = np.frombuffer(raw, dtype=np.uint8, count=n * h * w * c,
                               offset=24).reshape(n, h, w, c).copy()
        m = json.loads((dirpath / "manifest.json").read_text())
        return cls(images=images, labels=np.array(m["labels"]),
                   source_idx=np.array(m["source_idx"]),
                   replicated=np.array(m["replicated"], dtype=bool),
                   num_classes=m["num_classes"],
                   quotas={int(k): v for k, v in m["quotas"].items()},
                   skipped=m["skipped"], source_pool=m["source_pool"],
                   teacher_checksum=m.get("teacher_checksum"),
                   origin=np.array(m["origin"], dtype=np.int8),
                   attack_records=m.get("attack_records"))


def curate(pool: ImagePool, labels, target_total: int, num_classes: int,
           seed: int = 0, teacher_checksum: str | None = None) -> CuratedDataset:
    """Select/replicate pool images into a dataset of exactly ``target_total``."""
    if len(pool) == 0:
        raise ValueError("cannot curate an empty pool")
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != len(pool):
        raise ValueError(f"{len(labels)} labels for {len(pool)} images")
    counts = np.bincount(labels, minlength=num_classes)
    quotas = compute_quotas(counts, target_total)
    skipped = [int(i) for i in range(num_classes) if counts[i] == 0]
    rng = np.random.default_rng(seed)

    sel_idx: list[int] = []
    sel_rep: list[bool] = []
    for cls_id in sorted(quotas):
        quota = quotas[cls_id]
        members = np.nonzero(labels == cls_id)[0]
        if counts[cls_id] >= quota:
            chosen = rng.choice(members, size=quota, replace=False)
            chosen.sort()
            sel_idx.extend(int(i) for i in chosen)
            sel_rep.extend([False] * quota)
        else:
            for j in range(quota):  # deterministic cycling replication
                sel_idx.append(int(members[j % len(members)]))
                sel_rep.append(j >= len(members))
    sel_idx = np.array(sel_idx, dtype=np.int64)
    dataset = CuratedDataset(
        images=pool.images[sel_idx],
        labels=labels[sel_idx],
        source_idx=sel_idx,
        replicated=np.array(sel_rep, dtype=bool),
        num_classes=num_classes,
        quotas=quotas,
        skipped=skipped,
        source_pool=pool.generator_id,
        teacher_checksum=teacher_checksum,
    )
    assert len(dataset) == target_total
    return dataset


def verify_labels(teacher: Model, dataset: CuratedDataset,
                  batch_size: int = 256) -> int:
    """Re-run the teacher over the dataset; returns the number of mismatches."""
    logits, _ = predict(teacher, dataset.to_float_nchw(), batch_size=batch_size)
    return int((logits.argmax(axis=1) != dataset.labels).sum())


def subset(dataset: CuratedDataset, mode: str, size: int,
           tail_exponent: float = 0.0, seed: int = 0) -> CuratedDataset:
    """Balanced or long-tail (geometric) subsets, sampled without replacement.

    Long-tail ranks classes by availability (descending, ties by index) and
    allocates size * exp(-tail_exponent * rank), largest-remainder rounded.
    """
    if mode not in ("balanced", "long-tail"):
        raise ValueError(f"unknown subset mode {mode!r}")
    if size <= 0 or size > len(dataset):
        raise ValueError(f"subset size {size} not in [1, {len(dataset)}]")
    counts = np.bincount(dataset.labels, minlength=dataset.num_classes)
    present = [int(i) for i in np.nonzero(counts)[0]]
    m = len(present)

    if mode == "balanced":
        base, rem = divmod(size, m)
        targets = {c: base + (1 if j < rem else 0) for j, c in enumerate(present)}
    else:
        ranked = sorted(present, key=lambda c: (-counts[c], c))
        weights = np.exp(-tail_exponent * np.arange(m))
        ideal = size * weights / weights.sum()
        floors = np.floor(ideal).astype(int)
        leftover = size - int(floors.sum())
        order = np.argsort(-(ideal - floors), kind="stable")
        for j in order[:leftover]:
            floors[j] += 1
        targets = {c: int(floors[r]) for r, c in enumerate(ranked)}

    for c, want in targets.items():
        if want > counts[c]:
            raise ValueError(
                f"class {c} has {counts[c]} examples but {want} requested; "
                f"subsetting does not replicate"
            )
    rng = np.random.default_rng(seed)
    chosen: list[int] = []
    for c in sorted(targets):
        members = np.nonzero(dataset.labels == c)[0]
        pick = rng.choice(members, size=targets[c], replace=False)
        chosen.extend(int(i) for i in pick)
    chosen = np.array(sorted(chosen), dtype=np.int64)
    return CuratedDataset(
        images=dataset.images[chosen],
        labels=dataset.labels[chosen],
        source_idx=dataset.source_idx[chosen],
        replicated=dataset.replicated[chosen],
        num_classes=dataset.num_classes,
        quotas={c: int(t) for c, t in targets.items()},
        skipped=[int(i) for i in range(dataset.num_classes) if i not in targets],
        source_pool=dataset.source_pool,
        teacher_checksum=dataset.teacher_checksum,
        origin=dataset.origin[chosen],
    )

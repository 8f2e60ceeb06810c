"""Synthetic image pools: statistics-matched noise, shape collages ("leaves"),
and shader-like procedural textures, plus the constant/simple-image filter.

Every generated image is regenerable byte-exactly from its per-image seed and
the pool's recorded config. Pools persist as a packed byte file plus a JSON
manifest (see docs/FORMATS.md).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import procgen

POOL_MAGIC = b"KDLPOOL\x01"

GENERATOR_KINDS = ("noise", "leaves", "proc-shader")


@dataclass
class NoiseStats:
    """Per-channel mean/std (in [0,1] pixel units) the noise pool matches."""

    mean: tuple
    std: tuple

    def __post_init__(self):
        self.mean = tuple(float(v) for v in self.mean)
        self.std = tuple(float(v) for v in self.std)
        if len(self.mean) != 3 or len(self.std) != 3:
            raise ValueError("stats need exactly 3 channels")
        if any(s <= 0 for s in self.std):
            raise ValueError(f"std must be positive per channel, got {self.std}")

    @classmethod
    def from_images(cls, images: np.ndarray) -> "NoiseStats":
        """Measure stats from a uint8 NxHxWx3 stack."""
        x = images.astype(np.float64) / 255.0
        return cls(mean=tuple(x[..., c].mean() for c in range(3)),
                   std=tuple(max(x[..., c].std(), 1e-6) for c in range(3)))

    def to_dict(self):
        return {"mean": list(self.mean), "std": list(self.std)}


@dataclass
class GeneratorConfig:
    kind: str
    height: int = 28
    width: int = 28
    count: int = 1000
    seed: int = 0
    shape_count_range: tuple = (5, 20)     # leaves
    palette_size: int | None = None        # leaves: few colors -> low diversity
    program_count: int = 64                # proc-shader
    stats: NoiseStats | None = None        # noise

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.count <= 0:
            raise ValueError(f"count must be positive, got {self.count}")
        if self.height < 8 or self.width < 8:
            raise ValueError(f"image size must be at least 8x8, got "
                             f"{self.height}x{self.width}")
        self.shape_count_range = tuple(int(v) for v in self.shape_count_range)

    def to_dict(self):
        d = {
            "kind": self.kind, "height": self.height, "width": self.width,
            "count": self.count, "seed": self.seed,
            "shape_count_range": list(self.shape_count_range),
            "palette_size": self.palette_size,
            "program_count": self.program_count,
            "stats": self.stats.to_dict() if self.stats else None,
        }
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("stats"):
            d["stats"] = NoiseStats(**d["stats"])
        return cls(**d)


@dataclass
class ImagePool:
    """A stack of HxWx3 byte images with per-image regeneration provenance."""

    images: np.ndarray                    # (N,H,W,3) uint8
    seeds: np.ndarray                     # (N,) uint64; 0 for imported images
    generator_id: str
    config: GeneratorConfig | None = None
    filter_report: dict | None = None
    source_files: list | None = None

    def __post_init__(self):
        self.images = np.ascontiguousarray(self.images, dtype=np.uint8)
        self.seeds = np.asarray(self.seeds, dtype=np.uint64)
        if self.images.ndim != 4 or self.images.shape[-1] != 3:
            raise ValueError(f"pool images must be NxHxWx3, got {self.images.shape}")
        if len(self.seeds) != len(self.images):
            raise ValueError("one seed per image required")

    def __len__(self):
        return self.images.shape[0]

    def to_float_nchw(self) -> np.ndarray:
        """Images as float32 (N,3,H,W) in [0,1]; the model-facing form."""
        return np.ascontiguousarray(
            self.images.transpose(0, 3, 1, 2).astype(np.float32) / 255.0)

    def regenerate(self, index: int) -> np.ndarray:
        """Re-render image ``index`` from its provenance record."""
        if self.config is None:
            raise ValueError("imported pools regenerate by re-importing their files")
        return _render_one(self.generator_id, int(self.seeds[index]), self.config)

    # -- persistence ---------------------------------------------------------

    def save(self, dirpath):
        dirpath = Path(dirpath)
        dirpath.mkdir(parents=True, exist_ok=True)
        n, h, w, c = self.images.shape
        with open(dirpath / "pool.bin", "wb") as f:
            f.write(POOL_MAGIC)
            f.write(struct.pack("<IIII", n, h, w, c))
            f.write(self.images.tobytes())
        manifest = {
            "generator_id": self.generator_id,
            "config": self.config.to_dict() if self.config else None,
            "seeds": [int(s) for s in self.seeds],
            "filter_report": self.filter_report,
            "source_files": self.source_files,
        }
        (dirpath / "manifest.json").write_text(json.dumps(manifest, indent=1))

    @classmethod
    def load(cls, dirpath) -> "ImagePool":
        dirpath = Path(dirpath)
        raw = (dirpath / "pool.bin").read_bytes()
        if raw[:8] != POOL_MAGIC:
            raise ValueError(f"{dirpath}/pool.bin: bad magic {raw[:8]!r}")
        n, h, w, c = struct.unpack_from("<IIII", raw, 8)
        images = np.frombuffer(raw, dtype=np.uint8, count=n * h * w * c,
                               offset=24).reshape(n, h, w, c).copy()
        manifest = json.loads((dirpath / "manifest.json").read_text())
        config = (GeneratorConfig.from_dict(manifest["config"])
                  if manifest.get("config") else None)
        return cls(images=images, seeds=np.array(manifest["seeds"], dtype=np.uint64),
                   generator_id=manifest["generator_id"], config=config,
                   filter_report=manifest.get("filter_report"),
                   source_files=manifest.get("source_files"))


def _image_seed(base_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1, np.uint64)[0])


def _quantize(img01: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img01 * 255.0), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# generators

def _render_noise(seed: int, config: GeneratorConfig) -> np.ndarray:
    rng = np.random.default_rng(seed)
    stats = config.stats
    img = rng.normal(loc=stats.mean, scale=stats.std,
                     size=(config.height, config.width, 3))
    return _quantize(np.clip(img, 0.0, 1.0))


def generate_noise(stats: NoiseStats, config: GeneratorConfig) -> ImagePool:
    """Per-pixel, per-channel gaussian noise matching the given statistics."""
    if config.kind != "noise":
        raise ValueError(f"config kind is {config.kind!r}, expected 'noise'")
    config = replace(config, stats=stats)
    seeds = np.array([_image_seed(config.seed, i) for i in range(config.count)],
                     dtype=np.uint64)
    images = np.stack([_render_noise(int(s), config) for s in seeds])
    return ImagePool(images=images, seeds=seeds, generator_id="noise", config=config)


def _shape_mask(kind: int, xx, yy, cx, cy, r, theta):
    if kind == 0:  # circle
        return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
    ct, st = np.cos(theta), np.sin(theta)
    xr = ct * (xx - cx) + st * (yy - cy)
    yr = -st * (xx - cx) + ct * (yy - cy)
    if kind == 1:  # square
        return (np.abs(xr) <= r) & (np.abs(yr) <= r)
    # triangle: vertices at angle theta + 2*pi*k/3, radius r
    ang = theta + np.array([0.0, 2 * np.pi / 3, 4 * np.pi / 3])
    vx = cx + r * np.cos(ang)
    vy = cy + r * np.sin(ang)
    inside = np.ones_like(xx, dtype=bool)
    for i in range(3):
        x1, y1 = vx[i], vy[i]
        x2, y2 = vx[(i + 1) % 3], vy[(i + 1) % 3]
        cross = (x2 - x1) * (yy - y1) - (y2 - y1) * (xx - x1)
        inside &= cross >= 0
    return inside


def _render_leaves(seed: int, config: GeneratorConfig) -> np.ndarray:
    rng = np.random.default_rng(seed)
    H, W = config.height, config.width
    lo, hi = config.shape_count_range
    k = int(rng.integers(lo, hi + 1))

    palette = None
    if config.palette_size:
        # shared low-entropy palette, derived from the pool seed
        prng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x9A7E77E]))
        palette = prng.uniform(0.0, 1.0, size=(config.palette_size, 3))

    def draw_color():
        if palette is None:
            return rng.uniform(0.0, 1.0, size=3)
        return palette[rng.integers(len(palette))]

    img = np.empty((H, W, 3))
    img[:] = draw_color()
    yy, xx = np.meshgrid(np.linspace(0, 1, H), np.linspace(0, 1, W), indexing="ij")
    for _ in range(k):
        kind = int(rng.integers(3))
        cx, cy = rng.uniform(-0.15, 1.15, size=2)
        r = rng.uniform(0.08, 0.4)
        theta = rng.uniform(0.0, 2 * np.pi)
        color = draw_color()
        mask = _shape_mask(kind, xx, yy, cx, cy, r, theta)
        img[mask] = color  # flat fill: later shapes occlude earlier ones
    return _quantize(img)


def generate_leaves(config: GeneratorConfig) -> ImagePool:
    """Collages of flat-colored circles, squares and triangles."""
    if config.kind != "leaves":
        raise ValueError(f"config kind is {config.kind!r}, expected 'leaves'")
    seeds = np.array([_image_seed(config.seed, i) for i in range(config.count)],
                     dtype=np.uint64)
    images = np.stack([_render_leaves(int(s), config) for s in seeds])
    return ImagePool(images=images, seeds=seeds, generator_id="leaves", config=config)


def generate_proc_shader(config: GeneratorConfig) -> ImagePool:
    """Textured images from a family of procedural programs.

    ``program_count`` instances are derived from the pool seed; each image's
    seed packs (program seed, sample index), so images regenerate without the
    pool config.
    """
    if config.kind != "proc-shader":
        raise ValueError(f"config kind is {config.kind!r}, expected 'proc-shader'")
    P = config.program_count
    if P < 1:
        raise ValueError(f"program_count must be >= 1, got {P}")
    program_seeds = [
        int(np.random.SeedSequence([config.seed, p]).generate_state(1)[0])
        for p in range(P)
    ]
    seeds = []
    for i in range(config.count):
        p = i % P
        k = i // P
        seeds.append(procgen.pack_image_seed(program_seeds[p], k))
    seeds = np.array(seeds, dtype=np.uint64)
    images = np.stack([
        procgen.render_image(int(s), config.height, config.width) for s in seeds
    ])
    return ImagePool(images=images, seeds=seeds, generator_id="proc-shader",
                     config=config)


def _render_one(generator_id: str, seed: int, config: GeneratorConfig) -> np.ndarray:
    if generator_id == "noise":
        return _render_noise(seed, config)
    if generator_id == "leaves":
        return _render_leaves(seed, config)
    if generator_id == "proc-shader":
        return procgen.render_image(seed, config.height, config.width)
    raise ValueError(f"cannot regenerate from generator {generator_id!r}")


def generate(config: GeneratorConfig, stats: NoiseStats | None = None) -> ImagePool:
    if config.kind == "noise":
        if stats is None and config.stats is None:
            raise ValueError("noise generation needs channel statistics")
        return generate_noise(stats or config.stats, config)
    if config.kind == "leaves":
        return generate_leaves(config)
    return generate_proc_shader(config)


# ---------------------------------------------------------------------------
# filtering

def quantized_color_codes(images: np.ndarray, levels: int = 32) -> np.ndarray:
    """Per-pixel color codes after channel quantization; (N, H*W) ints."""
    shift = 8 - int(np.log2(levels))
    q = (images >> shift).astype(np.int32)
    codes = (q[..., 0] * levels + q[..., 1]) * levels + q[..., 2]
    return codes.reshape(images.shape[0], -1)


def distinct_color_counts(images: np.ndarray, levels: int = 32) -> np.ndarray:
    codes = quantized_color_codes(images, levels)
    return np.array([np.unique(row).size for row in codes])


def filter_pool(pool: ImagePool, constant_tol: float = 0.01, min_colors: int = 3,
                min_active_fraction: float = 0.05) -> ImagePool:
    """Drop constant and near-trivial images.

    An image is removed when every channel's std falls below ``constant_tol``
    (in [0,1] units), when it has fewer than ``min_colors`` distinct colors at
    32-level quantization, or when fewer than ``min_active_fraction`` of its
    pixels differ from the modal color.
    """
    if constant_tol < 0 or min_active_fraction < 0 or min_colors < 0:
        raise ValueError("filter thresholds must be nonnegative")
    imgs = pool.images.astype(np.float32) / 255.0
    n = len(pool)
    channel_std = imgs.reshape(n, -1, 3).std(axis=1)       # (N,3)
    codes = quantized_color_codes(pool.images)
    verdicts = []
    keep = np.ones(n, dtype=bool)
    for i in range(n):
        if channel_std[i].max() < constant_tol:
            verdicts.append("constant")
            keep[i] = False
            continue
        values, counts = np.unique(codes[i], return_counts=True)
        if values.size < min_colors:
            verdicts.append("few-colors")
            keep[i] = False
            continue
        active = 1.0 - counts.max() / codes.shape[1]
        if active < min_active_fraction:
            verdicts.append("low-active")
            keep[i] = False
            continue
        verdicts.append("pass")
    report = {
        "evaluated": int(n),
        "kept": int(keep.sum()),
        "thresholds": {"constant_tol": constant_tol, "min_colors": min_colors,
                       "min_active_fraction": min_active_fraction},
        "verdicts": {int(s): v for s, v in zip(pool.seeds, verdicts)},
    }
    return ImagePool(images=pool.images[keep], seeds=pool.seeds[keep],
                     generator_id=pool.generator_id, config=pool.config,
                     filter_report=report, source_files=pool.source_files)


# ---------------------------------------------------------------------------
# imports

def import_image_folder(path, size=(28, 28)) -> ImagePool:
    """Ingest a folder of image files (recursively) into a pool."""
    from PIL import Image

    path = Path(path)
    files = sorted(p for p in path.rglob("*")
                   if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp"))
    if not files:
        raise FileNotFoundError(f"no image files under {path}")
    images = []
    for p in files:
        with Image.open(p) as im:
            im = im.convert("RGB").resize((size[1], size[0]), Image.BILINEAR)
            images.append(np.asarray(im, dtype=np.uint8))
    return ImagePool(images=np.stack(images),
                     seeds=np.zeros(len(images), dtype=np.uint64),
                     generator_id=f"import:{path}", config=None,
                     source_files=[str(p.relative_to(path)) for p in files])


def pool_from_arrays(images: np.ndarray, generator_id: str) -> ImagePool:
    """Wrap an in-memory uint8 stack (NxHxW grayscale or NxHxWx3) as a pool."""
    images = np.asarray(images)
    if images.ndim == 3:
        images = np.repeat(images[..., None], 3, axis=-1)
    return ImagePool(images=images.astype(np.uint8),
                     seeds=np.zeros(len(images), dtype=np.uint64),
                     generator_id=generator_id, config=None)

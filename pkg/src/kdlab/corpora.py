"""Self-contained task corpora.

``build_digit_corpus`` renders a seeded handwritten-digit stand-in (stroke
skeletons + random affine/elastic distortion + noise) and writes it in the
standard IDX byte layout, so the ingestion path is identical for real digit
data: drop the usual ``train-images-idx3-ubyte`` etc. into the data root and
they take precedence.

``build_photo_crop_folder`` writes random crops of a few bundled photographs
(scikit-image samples) as PNGs; imported through the image-folder path they
act as the natural out-of-domain surrogate source.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .idx import load_idx_dataset, save_idx_dataset

log = logging.getLogger(__name__)


def _arc(cx, cy, r, a0, a1, ry=None):
    return ("arc", (cx, cy), r, ry if ry is not None else r, a0, a1)


def _line(x1, y1, x2, y2):
    return ("line", (x1, y1), (x2, y2))


# Stroke skeletons in a unit box, x right / y down.
DIGIT_STROKES = {
    0: [_arc(0.5, 0.5, 0.26, 0, 360, ry=0.36)],
    1: [_line(0.38, 0.26, 0.54, 0.12), _line(0.54, 0.12, 0.54, 0.88)],
    2: [_arc(0.5, 0.3, 0.2, 180, 390),
        _line(0.673, 0.4, 0.3, 0.85), _line(0.3, 0.85, 0.72, 0.85)],
    3: [_arc(0.48, 0.3, 0.19, 213, 450), _arc(0.48, 0.68, 0.2, 270, 513)],
    4: [_line(0.6, 0.12, 0.6, 0.88), _line(0.6, 0.12, 0.28, 0.58),
        _line(0.28, 0.58, 0.78, 0.58)],
    5: [_line(0.68, 0.14, 0.34, 0.14), _line(0.34, 0.14, 0.32, 0.44),
        _arc(0.47, 0.63, 0.21, 232, 510)],
    6: [_line(0.63, 0.13, 0.44, 0.44), _arc(0.47, 0.66, 0.2, 0, 360)],
    7: [_line(0.3, 0.14, 0.72, 0.14), _line(0.72, 0.14, 0.42, 0.88)],
    8: [_arc(0.5, 0.31, 0.16, 0, 360), _arc(0.5, 0.67, 0.2, 0, 360)],
    9: [_arc(0.52, 0.34, 0.19, 0, 360), _line(0.71, 0.38, 0.58, 0.88)],
}


def _stroke_points(strokes, spacing=0.02):
    pts = []
    for s in strokes:
        if s[0] == "line":
            (_, (x1, y1), (x2, y2)) = s
            n = max(2, int(np.hypot(x2 - x1, y2 - y1) / spacing))
            t = np.linspace(0, 1, n)
            pts.append(np.stack([x1 + t * (x2 - x1), y1 + t * (y2 - y1)], axis=1))
        else:
            (_, (cx, cy), rx, ry, a0, a1) = s
            span = np.deg2rad(abs(a1 - a0))
            n = max(4, int(span * max(rx, ry) / spacing))
            a = np.deg2rad(np.linspace(a0, a1, n))
            pts.append(np.stack([cx + rx * np.cos(a), cy + ry * np.sin(a)], axis=1))
    return np.concatenate(pts)


def render_digit(digit: int, rng, size: int = 28) -> np.ndarray:
    """One distorted glyph as uint8 (size, size), white ink on black."""
    pts = _stroke_points(DIGIT_STROKES[digit]) - 0.5

    theta = rng.normal(0.0, 0.12)
    shear = rng.normal(0.0, 0.1)
    sx = rng.uniform(0.78, 1.02)
    sy = rng.uniform(0.78, 1.02)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    shr = np.array([[1.0, shear], [0.0, 1.0]])
    pts = pts @ (rot @ shr @ np.diag([sx, sy])).T
    # gentle elastic wobble
    amp = rng.uniform(0.0, 0.025, size=2)
    freq = rng.uniform(4.0, 9.0, size=2)
    phase = rng.uniform(0, 2 * np.pi, size=2)
    pts[:, 0] += amp[0] * np.sin(freq[0] * pts[:, 1] + phase[0])
    pts[:, 1] += amp[1] * np.sin(freq[1] * pts[:, 0] + phase[1])
    pts += 0.5 + rng.normal(0.0, 0.018, size=2)

    px = (pts * (size - 1)).astype(np.float32)
    ys, xs = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    grid = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.float32)
    # |g - p|^2 = |g|^2 - 2 g.p + |p|^2 keeps the inner loop in BLAS
    d2 = ((grid ** 2).sum(axis=1, keepdims=True) - 2.0 * (grid @ px.T)
          + (px ** 2).sum(axis=1))
    dist = np.sqrt(np.maximum(d2.min(axis=1), 0.0)).reshape(size, size)

    thickness = rng.uniform(0.9, 1.7)
    ink = np.clip((thickness - dist) / 0.9 + 0.5, 0.0, 1.0)
    ink *= rng.uniform(0.75, 1.0)
    ink += rng.normal(0.0, 0.02, size=ink.shape)
    return np.clip(np.rint(ink * 255), 0, 255).astype(np.uint8)


def generate_digits(count: int, seed: int, size: int = 28):
    """Balanced digit images/labels; deterministic in (count, seed)."""
    root = np.random.SeedSequence(seed)
    labels = np.arange(count) % 10
    images = np.empty((count, size, size), dtype=np.uint8)
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        images[i] = render_digit(int(labels[i]), rng, size)
    perm = np.random.default_rng(root).permutation(count)
    return images[perm], labels[perm].astype(np.uint8)


def build_digit_corpus(dirpath, train_count: int = 60000, test_count: int = 10000,
                       seed: int = 1234) -> Path:
    """Write train/test IDX files unless they already exist; returns the dir."""
    dirpath = Path(dirpath)
    try:
        load_idx_dataset(dirpath, "train")
        load_idx_dataset(dirpath, "test")
        log.info("digit corpus already present at %s", dirpath)
        return dirpath
    except (FileNotFoundError, KeyError):
        pass
    log.info("rendering digit corpus (%d train / %d test) at %s",
             train_count, test_count, dirpath)
    train_images, train_labels = generate_digits(train_count, seed)
    test_images, test_labels = generate_digits(test_count, seed + 1)
    save_idx_dataset(dirpath, train_images, train_labels, "train")
    save_idx_dataset(dirpath, test_images, test_labels, "test")
    return dirpath


def load_task(dirpath):
    """Load the task corpus: (train_images, train_labels, test_images, test_labels)."""
    xi, yi = load_idx_dataset(dirpath, "train")
    xt, yt = load_idx_dataset(dirpath, "test")
    return xi, yi.astype(np.int64), xt, yt.astype(np.int64)


# ---------------------------------------------------------------------------
# natural photograph crops

def _photo_bank():
    import skimage.data

    return [skimage.data.astronaut(), skimage.data.chelsea(),
            skimage.data.coffee()]


def build_photo_crop_folder(dirpath, count: int, seed: int = 0,
                            size: int = 28) -> Path:
    """Write ``count`` random photo crops as PNGs under ``dirpath``."""
    from PIL import Image

    photos = _photo_bank()
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    existing = sorted(dirpath.glob("*.png"))
    if len(existing) >= count:
        return dirpath
    rng = np.random.default_rng(seed)
    for i in range(count):
        img = photos[int(rng.integers(len(photos)))]
        h, w = img.shape[:2]
        crop = int(rng.integers(size, min(h, w) // 2))
        y = int(rng.integers(0, h - crop + 1))
        x = int(rng.integers(0, w - crop + 1))
        patch = img[y:y + crop, x:x + crop]
        im = Image.fromarray(patch).resize((size, size), Image.BILINEAR)
        im.save(dirpath / f"crop_{i:06d}.png")
    return dirpath

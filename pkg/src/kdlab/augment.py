"""Batch-time augmentation tiers and mixup.

Augmentation is a pure function of (batch, policy, seed): the same call is
byte-identical across runs. Geometric ops (flip, pad-crop, translate, rotate,
shear) are affine maps; consecutive ones compose into a single bilinear warp
per image, applied lazily when a non-geometric op (or the end of the pipeline)
needs the pixels. Every op clamps its output to [0, 1].

Tier ladder (op sets are strict supersets going up):
    none      identity
    standard  2 random ops at magnitude 14, plus horizontal flip and pad-crop
    high      4 random ops at magnitude 14, plus random elastic and inversion
    extreme   8 random ops at magnitude 30, plus random erasing
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OP_POOL = ("translate", "rotate", "shear", "color", "posterize", "solarize",
           "contrast", "sharpness")

GEOMETRIC_OPS = frozenset({"translate", "rotate", "shear"})

MAX_MAGNITUDE = 30

_TIER_TABLE = {
    "none": dict(n_ops=0, magnitude=0, hflip=False, pad_crop=False,
                 inversion=False, elastic=False, erasing=False, ops=()),
    "standard": dict(n_ops=2, magnitude=14, hflip=True, pad_crop=True,
                     inversion=False, elastic=False, erasing=False, ops=OP_POOL),
    "high": dict(n_ops=4, magnitude=14, hflip=True, pad_crop=True,
                 inversion=True, elastic=True, erasing=False, ops=OP_POOL),
    "extreme": dict(n_ops=8, magnitude=30, hflip=True, pad_crop=True,
                    inversion=True, elastic=True, erasing=True, ops=OP_POOL),
}


@dataclass(frozen=True)
class AugmentPolicy:
    tier: str
    ops: tuple = OP_POOL
    n_ops: int = 2
    magnitude: int = 14
    hflip: bool = True
    pad_crop: bool = True
    inversion: bool = False
    elastic: bool = False
    erasing: bool = False
    # probabilities for the optional transforms (documented defaults)
    p_flip: float = 0.5
    p_elastic: float = 0.5
    p_inversion: float = 0.5
    p_erasing: float = 0.5
    pad: int = 4

    def __post_init__(self):
        unknown = [op for op in self.ops if op not in OP_POOL]
        if unknown:
            raise ValueError(f"unknown augmentation ops {unknown}; pool is {OP_POOL}")
        if not 0 <= self.magnitude <= MAX_MAGNITUDE:
            raise ValueError(f"magnitude must be 0..{MAX_MAGNITUDE}, got {self.magnitude}")
        if self.n_ops < 0:
            raise ValueError(f"n_ops must be nonnegative, got {self.n_ops}")

    @classmethod
    def from_tier(cls, tier: str, **overrides) -> "AugmentPolicy":
        if tier not in _TIER_TABLE:
            raise ValueError(f"unknown tier {tier!r}; expected {sorted(_TIER_TABLE)}")
        return cls(tier=tier, **{**_TIER_TABLE[tier], **overrides})

    def op_set(self) -> frozenset:
        names = set(self.ops if self.n_ops > 0 else ())
        for flag in ("hflip", "pad_crop", "inversion", "elastic", "erasing"):
            if getattr(self, flag):
                names.add(flag)
        return frozenset(names)


@dataclass(frozen=True)
class MixupConfig:
    enabled: bool = True


# ---------------------------------------------------------------------------
# warp machinery (images are channels-last inside this module)

_GRID_CACHE: dict = {}


def _grid(H, W):
    key = (H, W)
    if key not in _GRID_CACHE:
        ys, xs = np.meshgrid(np.arange(H, dtype=np.float32),
                             np.arange(W, dtype=np.float32), indexing="ij")
        _GRID_CACHE[key] = np.stack([xs.ravel(), ys.ravel(),
                                     np.ones(H * W, dtype=np.float32)])
    return _GRID_CACHE[key]


def _bilinear_gather(imgs, sx, sy):
    """Sample imgs (B,H,W,C) at float coords (B,H,W); zero outside."""
    B, H, W, C = imgs.shape
    x0 = np.floor(sx)
    y0 = np.floor(sy)
    fx = (sx - x0).astype(imgs.dtype)
    fy = (sy - y0).astype(imgs.dtype)
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    flat = imgs.reshape(B * H * W, C)
    base = (np.arange(B, dtype=np.int64) * (H * W))[:, None, None]
    out = np.zeros_like(imgs)
    for dy in (0, 1):
        wy = (1 - fy) if dy == 0 else fy
        yy = y0 + dy
        for dx in (0, 1):
            wx = (1 - fx) if dx == 0 else fx
            xx = x0 + dx
            valid = (xx >= 0) & (xx < W) & (yy >= 0) & (yy < H)
            lin = base + np.clip(yy, 0, H - 1) * W + np.clip(xx, 0, W - 1)
            gathered = flat[lin.reshape(-1)].reshape(B, H, W, C)
            out += gathered * (wx * wy * valid)[..., None]
    return out


def _affine_warp(imgs, mats):
    """Warp with per-image 3x3 output->input maps (pixel coords, y down)."""
    B, H, W, C = imgs.shape
    grid = _grid(H, W)                                    # (3, HW)
    src = np.einsum("bij,jk->bik", mats[:, :2, :].astype(np.float32), grid)
    sx = src[:, 0].reshape(B, H, W)
    sy = src[:, 1].reshape(B, H, W)
    return _bilinear_gather(imgs, sx, sy)


def _identity3(n):
    mats = np.zeros((n, 3, 3), dtype=np.float32)
    mats[:, 0, 0] = mats[:, 1, 1] = mats[:, 2, 2] = 1.0
    return mats


def _center_wrap(mats, H, W):
    """Re-anchor the linear part of each map around the image center."""
    cx, cy = (W - 1) / 2.0, (H - 1) / 2.0
    out = mats.copy()
    out[:, 0, 2] += cx - (mats[:, 0, 0] * cx + mats[:, 0, 1] * cy)
    out[:, 1, 2] += cy - (mats[:, 1, 0] * cx + mats[:, 1, 1] * cy)
    return out


def _signed(rng, n, scale):
    return rng.uniform(-scale, scale, size=n).astype(np.float32)


def _mats_translate(n, H, W, level, rng):
    mats = _identity3(n)
    mats[:, 0, 2] = _signed(rng, n, 0.3 * W * level)
    mats[:, 1, 2] = _signed(rng, n, 0.3 * H * level)
    return mats


def _mats_rotate(n, H, W, level, rng):
    theta = _signed(rng, n, np.deg2rad(30.0) * level)
    mats = _identity3(n)
    mats[:, 0, 0] = np.cos(theta)
    mats[:, 0, 1] = -np.sin(theta)
    mats[:, 1, 0] = np.sin(theta)
    mats[:, 1, 1] = np.cos(theta)
    return _center_wrap(mats, H, W)


def _mats_shear(n, H, W, level, rng):
    lam = _signed(rng, n, 0.3 * level)
    axis = rng.integers(2, size=n)
    mats = _identity3(n)
    mats[:, 0, 1] = np.where(axis == 0, lam, 0.0)
    mats[:, 1, 0] = np.where(axis == 1, lam, 0.0)
    return _center_wrap(mats, H, W)


def _mats_hflip(n, H, W):
    mats = _identity3(n)
    mats[:, 0, 0] = -1.0
    mats[:, 0, 2] = W - 1.0
    return mats


def _mats_pad_crop(n, H, W, pad, rng):
    mats = _identity3(n)
    mats[:, 0, 2] = rng.integers(-pad, pad + 1, size=n)
    mats[:, 1, 2] = rng.integers(-pad, pad + 1, size=n)
    return mats


_MAT_FNS = {"translate": _mats_translate, "rotate": _mats_rotate,
            "shear": _mats_shear}


# ---------------------------------------------------------------------------
# pointwise / photometric ops

def _op_color(imgs, level, rng):
    n = imgs.shape[0]
    f = 1.0 + _signed(rng, n, 0.9 * level)[:, None, None, None]
    gray = imgs.mean(axis=-1, keepdims=True)
    return np.clip(gray + f * (imgs - gray), 0.0, 1.0)


def _op_posterize(imgs, level, rng):
    n = imgs.shape[0]
    bits = 8 - np.rint(4 * level * rng.uniform(0.5, 1.0, size=n)).astype(int)
    bits = np.clip(bits, 1, 8)[:, None, None, None]
    levels = (2 ** bits).astype(np.float32)
    return np.clip(np.floor(imgs * levels) / levels, 0.0, 1.0)


def _op_solarize(imgs, level, rng):
    n = imgs.shape[0]
    thr = (1.0 - level * rng.uniform(0.5, 1.0, size=n)).astype(np.float32)
    thr = thr[:, None, None, None]
    return np.where(imgs >= thr, 1.0 - imgs, imgs)


def _op_contrast(imgs, level, rng):
    n = imgs.shape[0]
    f = 1.0 + _signed(rng, n, 0.9 * level)[:, None, None, None]
    m = imgs.mean(axis=(1, 2, 3), keepdims=True)
    return np.clip(m + f * (imgs - m), 0.0, 1.0)


def _blur3(imgs):
    k = np.array([0.25, 0.5, 0.25], dtype=imgs.dtype)
    p = np.pad(imgs, ((0, 0), (1, 1), (0, 0), (0, 0)), mode="edge")
    v = k[0] * p[:, :-2] + k[1] * p[:, 1:-1] + k[2] * p[:, 2:]
    p = np.pad(v, ((0, 0), (0, 0), (1, 1), (0, 0)), mode="edge")
    return k[0] * p[:, :, :-2] + k[1] * p[:, :, 1:-1] + k[2] * p[:, :, 2:]


def _op_sharpness(imgs, level, rng):
    n = imgs.shape[0]
    f = 1.0 + _signed(rng, n, 0.9 * level)[:, None, None, None]
    blurred = _blur3(imgs)
    return np.clip(blurred + f * (imgs - blurred), 0.0, 1.0)


_POINT_FNS = {"color": _op_color, "posterize": _op_posterize,
              "solarize": _op_solarize, "contrast": _op_contrast,
              "sharpness": _op_sharpness}


def _elastic_coords(n, H, W, level, rng):
    """Displacement fields from a bilinearly upsampled 4x4 grid; (n,2,H,W)."""
    max_disp = 6.0 * max(level, 0.15)
    coarse = rng.uniform(-max_disp, max_disp, size=(n, 2, 4, 4)).astype(np.float32)
    gy = np.linspace(0, 3, H, dtype=np.float32)
    gx = np.linspace(0, 3, W, dtype=np.float32)
    y0 = np.floor(gy).astype(int).clip(0, 2)
    x0 = np.floor(gx).astype(int).clip(0, 2)
    fy = (gy - y0)[:, None]
    fx = (gx - x0)[None, :]
    c00 = coarse[:, :, y0][:, :, :, x0]
    c01 = coarse[:, :, y0][:, :, :, x0 + 1]
    c10 = coarse[:, :, y0 + 1][:, :, :, x0]
    c11 = coarse[:, :, y0 + 1][:, :, :, x0 + 1]
    return (c00 * (1 - fy) * (1 - fx) + c01 * (1 - fy) * fx
            + c10 * fy * (1 - fx) + c11 * fy * fx)


def _erase(imgs, rng):
    B, H, W, C = imgs.shape
    out = imgs.copy()
    hs = rng.integers(H // 6, H // 2, size=B)
    ws = rng.integers(W // 6, W // 2, size=B)
    ys = rng.integers(0, H - hs + 1)
    xs = rng.integers(0, W - ws + 1)
    for b in range(B):
        patch = rng.uniform(0, 1, size=(int(hs[b]), int(ws[b]), C)).astype(imgs.dtype)
        out[b, ys[b]:ys[b] + hs[b], xs[b]:xs[b] + ws[b]] = patch
    return out


# ---------------------------------------------------------------------------
# pipeline

def augment_batch(batch, policy: AugmentPolicy, seed: int) -> np.ndarray:
    """Augment a float (B,3,H,W) batch in [0,1] (uint8 accepted and converted)."""
    imgs = np.asarray(batch)
    if imgs.dtype == np.uint8:
        imgs = imgs.astype(np.float32) / 255.0
    imgs = imgs.astype(np.float32, copy=True)
    if policy.tier == "none" or not policy.op_set():
        return imgs
    rng = np.random.default_rng(seed)
    imgs = np.ascontiguousarray(imgs.transpose(0, 2, 3, 1))
    B, H, W, C = imgs.shape

    pending = _identity3(B)
    dirty = np.zeros(B, dtype=bool)

    def compose(members, mats):
        pending[members] = pending[members] @ mats
        dirty[members] = True

    def flush(members=None):
        idx = np.nonzero(dirty if members is None else dirty & members)[0]
        if idx.size:
            imgs[idx] = _affine_warp(imgs[idx], pending[idx])
            pending[idx] = _identity3(idx.size)
            dirty[idx] = False

    if policy.hflip:
        chosen = np.nonzero(rng.random(B) < policy.p_flip)[0]
        if chosen.size:
            compose(chosen, _mats_hflip(chosen.size, H, W))

    if policy.pad_crop:
        compose(np.arange(B), _mats_pad_crop(B, H, W, policy.pad, rng))

    if policy.n_ops > 0 and policy.ops:
        level = policy.magnitude / MAX_MAGNITUDE
        choices = rng.integers(len(policy.ops), size=(policy.n_ops, B))
        for slot in range(policy.n_ops):
            for op_id, op in enumerate(policy.ops):
                members = np.nonzero(choices[slot] == op_id)[0]
                if members.size == 0:
                    continue
                if op in GEOMETRIC_OPS:
                    compose(members, _MAT_FNS[op](members.size, H, W, level, rng))
                else:
                    mask = np.zeros(B, dtype=bool)
                    mask[members] = True
                    flush(mask)
                    imgs[members] = _POINT_FNS[op](imgs[members], level, rng)

    if policy.elastic:
        level = policy.magnitude / MAX_MAGNITUDE
        members = np.nonzero(rng.random(B) < policy.p_elastic)[0]
        if members.size:
            # fold the elastic displacement into any pending affine: one warp
            disp = _elastic_coords(members.size, H, W, level, rng)
            grid = _grid(H, W)
            src = np.einsum("bij,jk->bik",
                            pending[members][:, :2, :].astype(np.float32), grid)
            sx = src[:, 0].reshape(-1, H, W) + disp[:, 0]
            sy = src[:, 1].reshape(-1, H, W) + disp[:, 1]
            imgs[members] = _bilinear_gather(imgs[members], sx, sy)
            pending[members] = _identity3(members.size)
            dirty[members] = False
    flush()

    if policy.inversion:
        members = rng.random(B) < policy.p_inversion
        imgs[members] = 1.0 - imgs[members]

    if policy.erasing:
        members = np.nonzero(rng.random(B) < policy.p_erasing)[0]
        if members.size:
            imgs[members] = _erase(imgs[members], rng)

    imgs = np.clip(imgs, 0.0, 1.0)
    return np.ascontiguousarray(imgs.transpose(0, 3, 1, 2))


def mixup(batch, targets, config: MixupConfig, seed: int):
    """Convex pairing within the batch: one lambda per pair, uniform on [0,1]."""
    imgs = np.asarray(batch, dtype=np.float32)
    tgts = np.asarray(targets, dtype=np.float32)
    if not config.enabled:
        return imgs, tgts
    rng = np.random.default_rng(seed)
    B = imgs.shape[0]
    perm = rng.permutation(B)
    lam = rng.uniform(0.0, 1.0, size=B).astype(np.float32)
    li = lam.reshape(B, *([1] * (imgs.ndim - 1)))
    lt = lam.reshape(B, *([1] * (tgts.ndim - 1)))
    mixed_x = li * imgs + (1.0 - li) * imgs[perm]
    mixed_t = lt * tgts + (1.0 - lt) * tgts[perm]
    return mixed_x, mixed_t

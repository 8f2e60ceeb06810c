"""Procedural texture programs: the shader-like synthetic image source.

Each program is a pure function of (frozen random parameters, time point t).
A program is built from a single integer seed; rendering the same (seed, t)
twice is byte-identical. Five families cover qualitatively different texture:
layered trigonometric fields, fractal value noise, domain-warped gradients,
voronoi cells, and interference patterns.

Coordinates are normalized to [-1, 1] on both axes, so parameters are
resolution-independent.
"""

from __future__ import annotations

import numpy as np

N_FAMILIES = 5


def _coords(H, W):
    y = np.linspace(-1.0, 1.0, H, dtype=np.float64)
    x = np.linspace(-1.0, 1.0, W, dtype=np.float64)
    return np.meshgrid(y, x, indexing="ij")


def _palette(s, offset, amp, freq, phase):
    """Cosine palette: scalar field (H,W) -> RGB (H,W,3)."""
    s = s[..., None]
    return offset + amp * np.cos(2.0 * np.pi * (freq * s + phase))


def _hash01(ix, iy, salt):
    """Deterministic lattice hash in [0,1), vectorized over integer grids."""
    v = np.sin(ix * 127.1 + iy * 311.7 + salt * 74.7) * 43758.5453123
    return v - np.floor(v)


def _smoothstep(t):
    return t * t * (3.0 - 2.0 * t)


def _value_noise(x, y, salt):
    ix = np.floor(x)
    iy = np.floor(y)
    fx = _smoothstep(x - ix)
    fy = _smoothstep(y - iy)
    v00 = _hash01(ix, iy, salt)
    v10 = _hash01(ix + 1, iy, salt)
    v01 = _hash01(ix, iy + 1, salt)
    v11 = _hash01(ix + 1, iy + 1, salt)
    top = v00 + fx * (v10 - v00)
    bot = v01 + fx * (v11 - v01)
    return top + fy * (bot - top)


def _fbm(x, y, salt, octaves, gain=0.5, lacunarity=2.0):
    total = np.zeros_like(x)
    amp = 1.0
    norm = 0.0
    for o in range(octaves):
        total += amp * _value_noise(x, y, salt + 13.7 * o)
        norm += amp
        amp *= gain
        x = x * lacunarity + 3.1
        y = y * lacunarity + 7.7
    return total / norm


def _draw_palette(rng):
    return (
        rng.uniform(0.3, 0.7, size=3),
        rng.uniform(0.25, 0.5, size=3),
        rng.uniform(0.5, 2.0, size=3),
        rng.uniform(0.0, 1.0, size=3),
    )


class Program:
    """One frozen program instance; ``render`` is pure in (self, t, H, W)."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        rng = np.random.default_rng(self.seed)
        self.family = int(self.seed % N_FAMILIES)
        self.palette = _draw_palette(rng)
        f = self.family
        if f == 0:  # layered trigonometric fields
            n = rng.integers(2, 5)
            self.params = {
                "freq": rng.uniform(2.0, 9.0, size=n),
                "theta": rng.uniform(0.0, np.pi, size=n),
                "phase": rng.uniform(0.0, 2 * np.pi, size=n),
                "speed": rng.uniform(0.3, 1.5, size=n),
                "amp": rng.uniform(0.4, 1.0, size=n),
            }
        elif f == 1:  # fractal value noise
            self.params = {
                "scale": rng.uniform(2.0, 7.0),
                "octaves": int(rng.integers(3, 6)),
                "salt": rng.uniform(0.0, 100.0),
                "drift": rng.uniform(0.5, 2.0, size=2),
            }
        elif f == 2:  # domain-warped gradient
            self.params = {
                "dir": rng.uniform(0.0, 2 * np.pi),
                "scale": rng.uniform(1.0, 3.0),
                "warp_amp": rng.uniform(0.5, 2.0),
                "warp_scale": rng.uniform(2.0, 6.0),
                "salt": rng.uniform(0.0, 100.0),
            }
        elif f == 3:  # voronoi cells
            k = int(rng.integers(4, 12))
            self.params = {
                "sites": rng.uniform(-1.1, 1.1, size=(k, 2)),
                "jitter": rng.uniform(0.05, 0.35, size=(k, 2)),
                "omega": rng.uniform(0.3, 1.7, size=(k, 2)),
                "site_phase": rng.uniform(0.0, 2 * np.pi, size=(k, 2)),
                "site_col": rng.uniform(0.0, 1.0, size=k),
                "edge": rng.uniform(4.0, 14.0),
            }
        else:  # interference / reaction-style rings
            self.params = {
                "f1": rng.uniform(3.0, 10.0),
                "f2": rng.uniform(3.0, 10.0),
                "theta": rng.uniform(0.0, np.pi, size=2),
                "centers": rng.uniform(-0.8, 0.8, size=(2, 2)),
                "sharp": rng.uniform(1.0, 4.0),
            }

    def render(self, t: float, H: int, W: int) -> np.ndarray:
        """Render at time point t; returns float RGB (H,W,3) in [0,1]."""
        yy, xx = _coords(H, W)
        p = self.params
        f = self.family
        if f == 0:
            s = np.zeros_like(xx)
            for freq, theta, phase, speed, amp in zip(
                    p["freq"], p["theta"], p["phase"], p["speed"], p["amp"]):
                u = np.cos(theta) * xx + np.sin(theta) * yy
                s = s + amp * np.sin(freq * u + phase + speed * t + 0.8 * s)
            field = s / (1.0 + np.abs(s))
        elif f == 1:
            sc = p["scale"]
            field = _fbm(xx * sc + p["drift"][0] * t, yy * sc + p["drift"][1] * t,
                         p["salt"], p["octaves"]) * 2.0 - 1.0
        elif f == 2:
            d = p["dir"]
            base = np.cos(d) * xx + np.sin(d) * yy
            ws = p["warp_scale"]
            wx = _fbm(xx * ws + t, yy * ws, p["salt"], 3)
            wy = _fbm(xx * ws, yy * ws + t, p["salt"] + 31.0, 3)
            field = np.sin(np.pi * (base * p["scale"] + p["warp_amp"] * (wx - 0.5)
                                    + 0.7 * (wy - 0.5)))
        elif f == 3:
            sites = p["sites"] + p["jitter"] * np.sin(p["omega"] * t + p["site_phase"])
            dx = xx[..., None] - sites[:, 0]
            dy = yy[..., None] - sites[:, 1]
            d2 = dx * dx + dy * dy
            order = np.argsort(d2, axis=-1)
            nearest = order[..., 0]
            d_sorted = np.take_along_axis(d2, order[..., :2], axis=-1)
            border = np.sqrt(d_sorted[..., 1]) - np.sqrt(d_sorted[..., 0])
            shade = np.clip(border * p["edge"], 0.0, 1.0)
            field = p["site_col"][nearest] * 2.0 - 1.0
            img = _palette(field, *self.palette) * shade[..., None]
            return np.clip(img, 0.0, 1.0)
        else:
            c1, c2 = p["centers"]
            r1 = np.hypot(xx - c1[0], yy - c1[1])
            r2 = np.hypot(xx - c2[0], yy - c2[1])
            th1, th2 = p["theta"]
            u1 = np.cos(th1) * xx + np.sin(th1) * yy
            s = np.sin(p["f1"] * r1 + t) * np.sin(p["f2"] * r2 - t) \
                + 0.5 * np.sin(p["f1"] * u1 * 2.0 + 0.7 * t)
            field = np.tanh(p["sharp"] * s)
        img = _palette(field, *self.palette)
        return np.clip(img, 0.0, 1.0)


# Per-image seeds pack (program seed, sample index) so an image regenerates
# from its seed alone: seed = program_seed * 2**16 + sample_index.
_SAMPLE_BITS = 16
MAX_SAMPLES_PER_PROGRAM = 1 << _SAMPLE_BITS


def pack_image_seed(program_seed: int, sample_index: int) -> int:
    if not 0 <= sample_index < MAX_SAMPLES_PER_PROGRAM:
        raise ValueError(f"sample index {sample_index} out of range")
    return (int(program_seed) << _SAMPLE_BITS) | int(sample_index)


def unpack_image_seed(image_seed: int) -> tuple[int, int]:
    return int(image_seed) >> _SAMPLE_BITS, int(image_seed) & (MAX_SAMPLES_PER_PROGRAM - 1)


def render_image(image_seed: int, H: int, W: int) -> np.ndarray:
    """Regenerate a shader-like image (uint8 HxWx3) from its packed seed."""
    program_seed, k = unpack_image_seed(image_seed)
    program = Program(program_seed)
    rng = np.random.default_rng(np.random.SeedSequence([program_seed, k]))
    t = rng.uniform(0.0, 6.0 * np.pi)
    img = program.render(t, H, W)
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)

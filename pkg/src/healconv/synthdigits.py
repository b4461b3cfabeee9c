"""Deterministic 28x28 digit corpus in the MNIST wire format.

Glyphs from a 5x7 pixel font are jittered through random affine maps
(rotation, scale, shear, translation), sampled bilinearly into 28x28 frames,
and corrupted with brightness jitter and Gaussian noise.  A seeded generator
makes the corpus reproducible, and :func:`write_dataset` emits genuine IDX
files, so the full digit pipeline (parse, project, train) can run at desk
scale without external downloads.
"""

from __future__ import annotations

import numpy as np

from . import io as hio

_FONT = {
    0: ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    1: ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    2: ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    3: ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    4: ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    5: ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    6: ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    7: ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    8: ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    9: ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
}

GLYPHS = np.stack(
    [np.array([[int(c) for c in row] for row in _FONT[d]], dtype=np.float64)
     for d in range(10)]
)
SIZE = 28


def _render(glyph: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    angle = rng.uniform(-0.21, 0.21)
    scale = rng.uniform(0.85, 1.15)
    shear = rng.uniform(-0.12, 0.12)
    shift = rng.uniform(-2.5, 2.5, size=2)

    # glyph cell size ~3px at scale 1; forward map glyph -> image, inverted
    # analytically for the per-pixel pull
    k = 3.0 * scale
    ca, sa = np.cos(angle), np.sin(angle)
    fwd = k * np.array([[ca, -sa], [sa, ca]]) @ np.array([[1.0, shear], [0.0, 1.0]])
    inv = np.linalg.inv(fwd)

    rr, cc = np.meshgrid(np.arange(SIZE), np.arange(SIZE), indexing="ij")
    rel = np.stack([cc - (SIZE - 1) / 2 - shift[0], rr - (SIZE - 1) / 2 - shift[1]])
    gx = inv[0, 0] * rel[0] + inv[0, 1] * rel[1] + (glyph.shape[1] - 1) / 2
    gy = inv[1, 0] * rel[0] + inv[1, 1] * rel[1] + (glyph.shape[0] - 1) / 2

    x0 = np.floor(gx).astype(int)
    y0 = np.floor(gy).astype(int)
    fx = gx - x0
    fy = gy - y0
    out = np.zeros((SIZE, SIZE))
    h, w = glyph.shape
    for dy in (0, 1):
        for dx in (0, 1):
            xx = x0 + dx
            yy = y0 + dy
            ok = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
            wgt = (fy if dy else 1 - fy) * (fx if dx else 1 - fx)
            out += np.where(ok, glyph[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)], 0.0) * wgt

    out *= rng.uniform(0.75, 1.0)
    out += rng.normal(0.0, 0.06, size=out.shape)
    return np.clip(out, 0.0, 1.0)


def make_dataset(n: int, seed: int = 0):
    """Generate ``n`` digits; returns (images u8 (n, 28, 28), labels int64)."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, size=n)
    images = np.empty((n, SIZE, SIZE), dtype=np.uint8)
    for i, d in enumerate(labels):
        images[i] = np.round(_render(GLYPHS[d], rng) * 255.0).astype(np.uint8)
    return images, labels.astype(np.int64)


def write_dataset(images_path, labels_path, n: int, seed: int = 0) -> None:
    """Generate a corpus and write IDX image/label files."""
    images, labels = make_dataset(n, seed)
    hio.write_idx_images(images_path, images)
    hio.write_idx_labels(labels_path, labels)

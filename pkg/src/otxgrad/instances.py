"""Problem generators: synthetic square-foreground images, MNIST pairs, and
Gaussian point clouds, plus the grid cost matrix they share.

All randomness flows through numpy's default_rng (PCG64); one seed fully
determines an instance.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .core import OTInstance, _as_float64

IDX_IMAGE_MAGIC = 0x00000803


@dataclass(frozen=True)
class Image:
    """m x m grid of nonnegative intensities."""

    m: int
    pixels: np.ndarray

    def __post_init__(self):
        px = _as_float64(self.pixels, "pixels")
        if px.shape != (self.m, self.m):
            raise ValueError(f"pixels must be ({self.m}, {self.m}), got {px.shape}")
        if np.any(px < 0) or not np.all(np.isfinite(px)):
            raise ValueError("pixels must be finite and nonnegative")
        object.__setattr__(self, "pixels", px)

    def marginal(self) -> np.ndarray:
        """Row-major flatten, normalized to a probability vector."""
        flat = self.pixels.reshape(-1)
        total = flat.sum()
        if total <= 0:
            raise ValueError("image has zero total mass")
        return flat / total


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray

    def __post_init__(self):
        pts = _as_float64(self.points, "points")
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"points must be (k, 2), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        object.__setattr__(self, "points", pts)


def cost_grid_l1(m: int) -> np.ndarray:
    """Manhattan distance between pixel positions of an m x m grid, row-major:
    W[(a,b),(a',b')] = |a-a'| + |b-b'|."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    idx = np.arange(m * m)
    rows = idx // m
    cols = idx % m
    return (np.abs(rows[:, None] - rows[None, :]) +
            np.abs(cols[:, None] - cols[None, :])).astype(np.float64)


def foreground_side(m: int) -> int:
    # side^2 / m^2 closest to 50% among integer sides
    return int(round(m / math.sqrt(2)))


def synthetic_image(m: int, rng: np.random.Generator) -> Image:
    """Background U[0,1] everywhere, then a square foreground of side
    round(m/sqrt(2)) with intensities U[0,10], top-left corner uniform over
    positions where the square fits. Draw order (background, corner, foreground)
    is fixed so a seed pins the image."""
    side = foreground_side(m)
    pixels = rng.uniform(0.0, 1.0, size=(m, m))
    top, left = rng.integers(0, m - side + 1, size=2)
    pixels[top:top + side, left:left + side] = rng.uniform(0.0, 10.0, size=(side, side))
    return Image(m, pixels)


def gen_synthetic(m: int, seed: int) -> OTInstance:
    """Random-image pair: r and c from two independently drawn images, grid
    ell1 cost, n = m^2."""
    if m < 2:
        raise ValueError(f"m must be >= 2, got {m}")
    rng = np.random.default_rng(seed)
    a = synthetic_image(m, rng)
    b = synthetic_image(m, rng)
    return OTInstance.make(cost_grid_l1(m), a.marginal(), b.marginal())


def gen_point_clouds(n: int, seed: int, squared: bool = False) -> OTInstance:
    """Two standard-normal 2-D clouds of n points each, uniform marginals,
    W = pairwise Euclidean distance (or its square)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    x = PointCloud(rng.normal(size=(n, 2)))
    y = PointCloud(rng.normal(size=(n, 2)))
    diff = x.points[:, None, :] - y.points[None, :, :]
    W = np.hypot(diff[..., 0], diff[..., 1])
    if squared:
        W = W * W
    u = np.full(n, 1.0 / n)
    return OTInstance.make(W, u, u.copy())


def read_idx_images(path) -> np.ndarray:
    """Parse an IDX image file (big-endian magic 0x00000803, then count/rows/
    cols as u32, then one byte per pixel) into (count, rows, cols) uint8."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16:
        raise ValueError(f"truncated IDX file: {len(blob)} bytes, header needs 16")
    magic, count, rows, cols = struct.unpack(">IIII", blob[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise ValueError(f"bad IDX magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x}")
    need = 16 + count * rows * cols
    if len(blob) < need:
        raise ValueError(f"truncated IDX file: {len(blob)} bytes, expected {need}")
    data = np.frombuffer(blob[16:need], dtype=np.uint8)
    return data.reshape(count, rows, cols)


def _mean_pool(px: np.ndarray, m: int) -> np.ndarray:
    k = px.shape[0] // m
    return px.reshape(m, k, m, k).mean(axis=(1, 3))


def _bilinear_resize(px: np.ndarray, m: int) -> np.ndarray:
    # pixel centers at half-integers; clamp samples at the border
    src = px.shape[0]
    coords = (np.arange(m) + 0.5) * (src / m) - 0.5
    lo = np.clip(np.floor(coords).astype(np.int64), 0, src - 2)
    frac = np.clip(coords - lo, 0.0, 1.0)
    top = px[lo][:, lo] * (1 - frac)[:, None] + px[lo + 1][:, lo] * frac[:, None]
    return top * (1 - frac)[None, :] + (
        px[lo][:, lo + 1] * (1 - frac)[:, None] +
        px[lo + 1][:, lo + 1] * frac[:, None]) * frac[None, :]


def downsample(px: np.ndarray, m: int) -> np.ndarray:
    """Mean pooling when m divides the source side, else bilinear resize."""
    src = px.shape[0]
    if px.shape != (src, src):
        raise ValueError(f"expected square image, got {px.shape}")
    if m < 1 or m > src:
        raise ValueError(f"target side {m} out of range for source side {src}")
    if src % m == 0:
        return _mean_pool(px, m)
    return _bilinear_resize(px, m)


def load_mnist_pair(images_path, index_a: int, index_b: int, m: int) -> OTInstance:
    """Two images from an IDX file, rescaled to [0,1], downsampled to m x m,
    offset by +0.01 so marginals are strictly positive, normalized; grid ell1
    cost."""
    images = read_idx_images(images_path)
    count = images.shape[0]
    for idx in (index_a, index_b):
        if not (0 <= idx < count):
            raise IndexError(f"image index {idx} out of range [0, {count})")
    pair = []
    for idx in (index_a, index_b):
        px = images[idx].astype(np.float64) / 255.0
        pair.append(Image(m, downsample(px, m) + 0.01).marginal())
    return OTInstance.make(cost_grid_l1(m), pair[0], pair[1])

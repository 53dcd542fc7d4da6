"""Procedural stand-ins for host photographs and logo watermarks.

Hosts are smooth colour fields with a few soft blobs; logos are unions of
hard-edged geometric primitives in one to three flat colours.  They are
only meant to make the pipeline runnable end to end at desk scale.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import ndimage

from . import io as pngio
from .synth import WatermarkAsset


def make_host(rng: np.random.Generator, size: int = 64) -> np.ndarray:
    """A smooth random image in [0, 1], shape (size, size, 3)."""
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    base = rng.uniform(0.15, 0.85, 3)
    grad = rng.uniform(-0.35, 0.35, (2, 3))
    img = base + yy[..., None] * grad[0] + xx[..., None] * grad[1]
    noise = rng.normal(0.0, 1.0, (size, size, 3))
    sigma = rng.uniform(size / 16, size / 6)
    noise = ndimage.gaussian_filter(noise, sigma=(sigma, sigma, 0), mode="wrap")
    noise /= noise.std() + 1e-8
    img = img + 0.08 * noise
    for _ in range(rng.integers(1, 4)):
        cy, cx = rng.uniform(0, 1, 2)
        r = rng.uniform(0.08, 0.3)
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * r * r))
        img = img + blob[..., None] * rng.uniform(-0.3, 0.3, 3)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def _primitive(rng, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    c = size / 2.0 - 0.5
    kind = rng.integers(5)
    cy, cx = c + rng.uniform(-0.12, 0.12, 2) * size
    r = rng.uniform(0.22, 0.36) * size
    if kind == 0:  # ellipse
        ry, rx = r, r * rng.uniform(0.5, 1.0)
        return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    if kind == 1:  # rectangle
        hy, hx = r * rng.uniform(0.4, 1.0), r * rng.uniform(0.4, 1.0)
        return (abs(yy - cy) <= hy) & (abs(xx - cx) <= hx)
    if kind == 2:  # ring
        d = np.hypot(yy - cy, xx - cx)
        return (d <= r) & (d >= r * rng.uniform(0.45, 0.7))
    if kind == 3:  # triangle
        top = cy - r
        return (yy >= top) & (yy <= cy + r) & (abs(xx - cx) <= (yy - top) * 0.6)
    # bar / letter stroke
    t = rng.uniform(0, np.pi)
    d = np.abs((yy - cy) * np.cos(t) - (xx - cx) * np.sin(t))
    along = np.abs((yy - cy) * np.sin(t) + (xx - cx) * np.cos(t))
    return (d <= r * 0.25) & (along <= r * 1.3)


def make_logo(rng: np.random.Generator, name: str, size: int = 48) -> WatermarkAsset:
    """A flat-coloured logo built from 2-4 primitives, with a zero border."""
    rgb = np.zeros((size, size, 3))
    alpha = np.zeros((size, size))
    palette = rng.uniform(0.0, 1.0, (rng.integers(1, 4), 3))
    # push colours away from mid-grey so the logos stay visible
    palette = np.where(palette > 0.5, 0.6 + 0.4 * palette, 0.4 * palette)
    for _ in range(rng.integers(2, 5)):
        shape = _primitive(rng, size)
        rgb[shape] = palette[rng.integers(len(palette))]
        alpha[shape] = 1.0
    alpha[0, :] = alpha[-1, :] = alpha[:, 0] = alpha[:, -1] = 0.0
    # slight anti-aliasing of the silhouette
    alpha = np.clip(ndimage.uniform_filter(alpha, 3), 0.0, 1.0)
    alpha[0, :] = alpha[-1, :] = alpha[:, 0] = alpha[:, -1] = 0.0
    return WatermarkAsset(name, rgb.astype(np.float32), alpha.astype(np.float32))


def write_toy_corpus(root, n_hosts: int, n_assets: int, seed: int = 0, host_size: int = 64, logo_size: int = 48):
    """Write ``hosts/host_XXXX.png`` and ``assets/logo_XX.{rgb,alpha}.png`` under ``root``."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    host_dir, asset_dir = root / "hosts", root / "assets"
    for i in range(n_hosts):
        pngio.write_rgb(host_dir / f"host_{i:04d}.png", make_host(rng, host_size))
    names = []
    for i in range(n_assets):
        asset = make_logo(rng, f"logo_{i:02d}", logo_size)
        asset.save(asset_dir)
        names.append(asset.name)
    return host_dir, asset_dir, names

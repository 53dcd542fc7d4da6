"""8-bit PNG boundary.  Everything inside the package is float32 in [0, 1]."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import UsageError


def to_uint8(a: np.ndarray) -> np.ndarray:
    return np.round(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)


def quantize(a: np.ndarray) -> np.ndarray:
    """Round-trip through 8 bits without touching the disk."""
    return to_uint8(a).astype(np.float32) / 255.0


def read_rgb(path) -> np.ndarray:
    with Image.open(path) as im:
        im = im.convert("RGB")
        return np.asarray(im, dtype=np.float32) / 255.0


def read_gray(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float32) / 255.0


def write_rgb(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[-1] != 3:
        raise UsageError(f"expected an (H, W, 3) image, got {img.shape}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(img)).save(path, optimize=False)


def write_gray(path, matte: np.ndarray) -> None:
    matte = np.asarray(matte)
    if matte.ndim == 3 and matte.shape[-1] == 1:
        matte = matte[..., 0]
    if matte.ndim != 2:
        raise UsageError(f"expected an (H, W) matte, got {matte.shape}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(matte)).save(path, optimize=False)


def list_pngs(directory) -> list[Path]:
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() == ".png")

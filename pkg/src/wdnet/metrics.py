"""PSNR, SSIM, RMSE and masked RMSE on the 0-255 intensity scale.

Inputs are float images in [0, 1], shape (H, W, 3); they are rescaled by
255 internally so values are comparable with 8-bit figures.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import convolve2d

from .errors import UsageError

PEAK = 255.0
PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise UsageError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a * PEAK, b * PEAK


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB; identical images give ``PSNR_CAP``."""
    m = mse(a, b)
    if m == 0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(PEAK ** 2 / m)))


def rmse(a, b) -> float:
    return float(np.sqrt(mse(a, b)))


def rmse_w(a, b, mask, threshold: float = 0.5):
    """RMSE over the masked pixels only.

    Soft masks are binarized at ``threshold``.  Returns ``(value, empty)``;
    an empty mask yields ``(0.0, True)``.
    """
    a, b = _pair(a, b)
    m = np.asarray(mask)
    if m.ndim == a.ndim:
        m = m[..., 0]
    if m.shape != a.shape[:-1]:
        raise UsageError(f"mask shape {m.shape} does not match image {a.shape}")
    sel = m >= threshold
    count = int(sel.sum())
    if count == 0:
        return 0.0, True
    d2 = ((a - b) ** 2)[sel]
    return float(np.sqrt(d2.sum() / (a.shape[-1] * count))), False


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Local SSIM of two single-channel 0-255 images over all full windows."""
    win = gaussian_window()
    c1 = (SSIM_K1 * PEAK) ** 2
    c2 = (SSIM_K2 * PEAK) ** 2

    def filt(img):
        return convolve2d(img, win[::-1, ::-1], mode="valid")

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a ** 2
    var_b = filt(b * b) - mu_b ** 2
    cov = filt(a * b) - mu_a * mu_b
    return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))


def ssim(a, b) -> float:
    """Mean SSIM (11x11 Gaussian window, sigma 1.5), averaged over channels."""
    a, b = _pair(a, b)
    if a.ndim != 3:
        raise UsageError(f"expected (H, W, C) images, got {a.shape}")
    if min(a.shape[:2]) < SSIM_WINDOW:
        raise UsageError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape[:2]}")
    if np.array_equal(a, b):
        return 1.0
    return float(np.mean([ssim_map(a[..., c], b[..., c]).mean() for c in range(a.shape[-1])]))


def mask_iou(pred, target, threshold: float = 0.5) -> float:
    """IoU of two masks after binarizing at ``threshold``; two empty masks give 1."""
    p = np.asarray(pred) >= threshold
    t = np.asarray(target) >= threshold
    union = np.logical_or(p, t).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, t).sum() / union)

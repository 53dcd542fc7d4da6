"""Watermark composition and decomposition.

All functions are pixel-local and work on either numpy arrays or torch
tensors.  Two layouts are accepted:

* numpy, channels last: images ``(..., H, W, 3)``, mattes ``(..., H, W)`` or
  ``(..., H, W, 1)``;
* torch, channels first: images ``(N, 3, H, W)``, mattes ``(N, 1, H, W)``.

Torch inputs stay differentiable, so the same code is used inside the
network forward pass.
"""

from __future__ import annotations

import numpy as np

from .errors import UsageError

try:
    import torch
except ImportError:  # pragma: no cover
    torch = None

DEFAULT_EPS = 1e-6
DEFAULT_TAU = 0.1


def _is_torch(a) -> bool:
    return torch is not None and isinstance(a, torch.Tensor)


def _clip01(a):
    if _is_torch(a):
        return a.clamp(0.0, 1.0)
    return np.clip(a, 0.0, 1.0)


def _spatial(a, matte: bool):
    """(H, W) of an image or matte in either layout."""
    if _is_torch(a):
        if a.ndim != 4:
            raise UsageError(f"expected an NCHW tensor, got shape {tuple(a.shape)}")
        return tuple(a.shape[-2:])
    if matte:
        if a.ndim >= 3 and a.shape[-1] == 1:
            return a.shape[-3:-1]
        return a.shape[-2:]
    if a.ndim < 3 or a.shape[-1] != 3:
        raise UsageError(f"expected an (H, W, 3) image, got shape {a.shape}")
    return a.shape[-3:-1]


def _as_weight(matte, image, name: str):
    """Check dimensions and return ``matte`` shaped to broadcast against ``image``."""
    if _spatial(matte, True) != _spatial(image, False):
        raise UsageError(
            f"{name} has spatial size {tuple(_spatial(matte, True))}, "
            f"image has {tuple(_spatial(image, False))}"
        )
    if _is_torch(matte):
        if matte.shape[1] != 1:
            raise UsageError(f"{name} must have one channel, got {matte.shape[1]}")
        return matte
    matte = np.asarray(matte)
    if matte.ndim == image.ndim - 1:
        matte = matte[..., None]
    return matte


def _same_size(a, b, names: str):
    if tuple(a.shape) != tuple(b.shape):
        raise UsageError(f"{names} shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def compose(y, w, alpha):
    """Overlay watermark ``w`` on ``y`` with per-pixel opacity ``alpha``.

    ``x = alpha * w + (1 - alpha) * y``; the result is clipped to [0, 1].
    """
    _same_size(y, w, "y/w")
    a = _as_weight(alpha, y, "alpha")
    return _clip01(a * w + (1.0 - a) * y)


def decompose(x, w, alpha, eps: float = DEFAULT_EPS):
    """Invert :func:`compose` given the watermark and its matte.

    The denominator ``1 - alpha`` is floored at ``eps`` so fully opaque
    pixels give a finite (clipped) answer instead of a division blow-up.
    """
    if not eps > 0:
        raise UsageError(f"eps must be positive, got {eps}")
    _same_size(x, w, "x/w")
    a = _as_weight(alpha, x, "alpha")
    if _is_torch(a):
        denom = (1.0 - a).clamp_min(eps)
    else:
        denom = np.maximum(1.0 - a, eps)
    return _clip01((x - a * w) / denom)


def merge_masked(y, x, m):
    """Take ``y`` inside the mask and ``x`` outside; soft masks blend linearly."""
    _same_size(y, x, "y/x")
    mm = _as_weight(m, y, "mask")
    return mm * y + (1.0 - mm) * x


def mask_from_alpha(alpha, tau: float = DEFAULT_TAU):
    """Hard watermark mask: 1 where ``alpha > tau``, else 0."""
    if not 0.0 < tau < 1.0:
        raise UsageError(f"tau must lie in (0, 1), got {tau}")
    if _is_torch(alpha):
        return (alpha > tau).to(alpha.dtype)
    alpha = np.asarray(alpha)
    dtype = alpha.dtype if np.issubdtype(alpha.dtype, np.floating) else np.float32
    return (alpha > tau).astype(dtype)


def binarize(m, threshold: float = 0.5):
    """Hard form of a soft mask (``m >= threshold``)."""
    if _is_torch(m):
        return (m >= threshold).to(m.dtype)
    m = np.asarray(m)
    return (m >= threshold).astype(np.float32)

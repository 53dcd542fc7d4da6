"""Content, perceptual and adversarial losses."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import torch
import torch.nn as nn

from .errors import ConfigError, UsageError

EXTRACTOR_MODES = ("pretrained-vgg-relu2_2", "disabled")
# first nine layers of VGG-16 ``features``: conv1_1 .. relu2_2
VGG_RELU2_2_LAYERS = 9
LOG_EPS = 1e-12


@dataclass
class LossWeights:
    l1_image: float = 50.0  # lambda1, on the merged output
    perceptual: float = 1e-2  # lambda2
    mask: float = 10.0  # lambda3
    watermark: float = 10.0  # lambda4, shared by the watermark and alpha terms

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v < 0:
                raise ConfigError(f"loss weight {k} must be >= 0, got {v}")

    @property
    def supervised(self) -> bool:
        return self.mask > 0 or self.watermark > 0


class VGGRelu22(nn.Module):
    """Frozen VGG-16 trunk up to relu2_2.

    Weights come from a local file holding a torchvision ``vgg16`` state
    dict (either the whole model or just ``features``).  Inputs in [0, 1]
    are normalized with the ImageNet statistics.
    """

    def __init__(self, weights_path):
        super().__init__()
        try:
            from torchvision.models import vgg16
        except ImportError as exc:
            raise ConfigError("perceptual loss needs torchvision; set loss.perceptual=0 to disable it") from exc
        path = Path(weights_path) if weights_path else None
        if path is None or not path.is_file():
            raise ConfigError(
                f"VGG-16 weight file {weights_path!r} not found; "
                "set perceptual_mode=disabled and loss.perceptual=0 to train without it"
            )
        state = torch.load(path, map_location="cpu", weights_only=True)
        model = vgg16(weights=None)
        if any(k.startswith("features.") for k in state):
            model.load_state_dict(state, strict=False)
        else:
            model.features.load_state_dict(state)
        self.features = model.features[:VGG_RELU2_2_LAYERS].eval()
        for p in self.features.parameters():
            p.requires_grad_(False)
        self.register_buffer("mean", torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1))

    def forward(self, x):
        return self.features((x - self.mean) / self.std)


def make_extractor(mode: str, weights_path=None):
    if mode not in EXTRACTOR_MODES:
        raise ConfigError(f"perceptual_mode must be one of {EXTRACTOR_MODES}, got {mode!r}")
    if mode == "disabled":
        return None
    return VGGRelu22(weights_path)


def l1(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.shape != b.shape:
        raise UsageError(f"L1 operands disagree: {tuple(a.shape)} vs {tuple(b.shape)}")
    return (a - b).abs().mean()


def perceptual_loss(pred: torch.Tensor, target: torch.Tensor, extractor) -> torch.Tensor:
    """Mean absolute difference between the extractor features of both images."""
    if extractor is None:
        raise ConfigError("perceptual loss requested but the extractor is disabled; set loss.perceptual=0")
    return l1(extractor(pred), extractor(target))


def content_loss(out, gt: dict, weights: LossWeights, extractor=None):
    """Weighted content loss of a generator output against ground truth.

    ``gt`` holds NCHW tensors ``y``, ``w``, ``alpha`` and ``mask``.
    Returns ``(total, terms)``; ``terms`` maps each unweighted term name to
    a tensor, and terms switched off by a zero weight (or absent from the
    model variant) are reported as exactly 0.
    """
    y_out = out.y_out
    zero = y_out.new_zeros(())
    terms = {"l1_image": l1(y_out, gt["y"])}
    if weights.perceptual > 0:
        terms["perceptual"] = perceptual_loss(y_out, gt["y"], extractor)
    else:
        terms["perceptual"] = zero
    has_heads = out.m_hat is not None
    terms["mask"] = l1(out.m_hat, gt["mask"]) if has_heads and weights.mask > 0 else zero
    if has_heads and weights.watermark > 0:
        terms["watermark"] = l1(out.w_hat, gt["w"])
        terms["alpha"] = l1(out.alpha_hat, gt["alpha"])
    else:
        terms["watermark"] = terms["alpha"] = zero
    total = (weights.l1_image * terms["l1_image"]
             + weights.perceptual * terms["perceptual"]
             + weights.mask * terms["mask"]
             + weights.watermark * (terms["watermark"] + terms["alpha"]))
    return total, terms


def gan_losses(d_real: torch.Tensor, d_fake: torch.Tensor):
    """Vanilla (non-saturating) GAN losses from patch probabilities.

    ``loss_D = -mean log D(real) - mean log(1 - D(fake))`` and
    ``loss_G = -mean log D(fake)``.
    """
    loss_d = -torch.log(d_real.clamp_min(LOG_EPS)).mean() - torch.log((1.0 - d_fake).clamp_min(LOG_EPS)).mean()
    loss_g = -torch.log(d_fake.clamp_min(LOG_EPS)).mean()
    return loss_d, loss_g


def gan_losses_from_logits(real_logits: torch.Tensor, fake_logits: torch.Tensor):
    """Same as :func:`gan_losses` but computed stably from pre-sigmoid scores."""
    bce = nn.functional.binary_cross_entropy_with_logits
    loss_d = bce(real_logits, torch.ones_like(real_logits)) + bce(fake_logits, torch.zeros_like(fake_logits))
    loss_g = bce(fake_logits, torch.ones_like(fake_logits))
    return loss_d, loss_g

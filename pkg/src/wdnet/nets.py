"""Generator (DecompNet + RefineNet) and patch discriminator."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import torch
import torch.nn as nn

from . import imaging
from .errors import ConfigError, UsageError

NORMS = ("instance", "batch", "none")
VARIANTS = ("wdnet", "decompnet", "baseline")
ALPHA_EPS = 1e-6


def _norm(kind: str, channels: int) -> nn.Module:
    if kind == "instance":
        return nn.InstanceNorm2d(channels)
    if kind == "batch":
        return nn.BatchNorm2d(channels)
    return nn.Identity()


class _Config:
    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown {cls.__name__} key(s): {sorted(unknown)}")
        return cls(**d)


@dataclass
class DecompNetConfig(_Config):
    depth: int = 4
    channel_mult: float = 1.0
    norm: str = "instance"

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if self.channel_mult <= 0:
            raise ConfigError("channel_mult must be positive")
        if self.norm not in NORMS:
            raise ConfigError(f"norm must be one of {NORMS}, got {self.norm!r}")

    def encoder_channels(self) -> tuple:
        return tuple(max(1, round(self.channel_mult * 2 ** (5 + i))) for i in range(1, self.depth + 1))

    def decoder_channels(self) -> tuple:
        return tuple(max(1, round(self.channel_mult * 2 ** (10 - j))) for j in range(1, self.depth + 1))


@dataclass
class RefineNetConfig(_Config):
    blocks: int = 3
    width: int = 180
    # unnormalized: the head must see absolute intensity, not per-image standardized features
    norm: str = "none"

    def __post_init__(self):
        if self.blocks < 1 or self.width < 1:
            raise ConfigError("RefineNet needs blocks >= 1 and width >= 1")
        if self.norm not in NORMS:
            raise ConfigError(f"norm must be one of {NORMS}, got {self.norm!r}")


@dataclass
class DiscriminatorConfig(_Config):
    channel_mult: float = 1.0
    norm: str = "none"

    def __post_init__(self):
        if self.channel_mult <= 0:
            raise ConfigError("channel_mult must be positive")
        if self.norm not in NORMS:
            raise ConfigError(f"norm must be one of {NORMS}, got {self.norm!r}")

    def channels(self) -> tuple:
        return tuple(max(1, round(self.channel_mult * c)) for c in (64, 128, 256, 512))


@dataclass
class WDNetOutput:
    """One generator forward pass.  Fields a variant does not produce are None."""

    y_out: torch.Tensor
    alpha_hat: torch.Tensor | None = None
    w_hat: torch.Tensor | None = None
    m_hat: torch.Tensor | None = None
    y_pre: torch.Tensor | None = None
    y_pre_masked: torch.Tensor | None = None
    y_refined: torch.Tensor | None = None
    f_u: torch.Tensor | None = None


class DecompNet(nn.Module):
    """U-Net that predicts the watermark matte, colours and mask.

    Encoder layer i halves the resolution and has ``2**(5+i)`` channels;
    decoder layer j doubles it and has ``2**(10-j)`` channels.  Each
    decoder layer after the first sees its predecessor concatenated with
    the encoder feature of the same resolution.  Blocks run conv,
    activation, norm; the first encoder and last decoder layer skip the
    norm.  With ``heads=False`` the network ends in a single RGB head
    (the plain U-Net baseline).
    """

    def __init__(self, config: DecompNetConfig | None = None, heads: bool = True):
        super().__init__()
        self.config = config = config or DecompNetConfig()
        enc_ch = config.encoder_channels()
        dec_ch = config.decoder_channels()
        self.encoders = nn.ModuleList()
        prev = 3
        for i, ch in enumerate(enc_ch):
            layers = [nn.Conv2d(prev, ch, 4, stride=2, padding=1), nn.LeakyReLU(0.2)]
            if i > 0:
                layers.append(_norm(config.norm, ch))
            self.encoders.append(nn.Sequential(*layers))
            prev = ch
        self.decoders = nn.ModuleList()
        for j, ch in enumerate(dec_ch):
            skip = enc_ch[-1 - j] if j > 0 else 0
            layers = [nn.ConvTranspose2d(prev + skip, ch, 4, stride=2, padding=1), nn.ReLU()]
            # outermost layer unnormalized: F_U must keep absolute intensity levels
            if j < len(dec_ch) - 1:
                layers.append(_norm(config.norm, ch))
            self.decoders.append(nn.Sequential(*layers))
            prev = ch
        self.feature_channels = prev
        self.has_heads = heads
        if heads:
            self.alpha_head = nn.Conv2d(prev, 1, 1)
            self.w_head = nn.Conv2d(prev, 3, 1)
            self.mask_head = nn.Conv2d(prev, 1, 1)
        else:
            self.rgb_head = nn.Conv2d(prev, 3, 1)

    def check_input(self, x: torch.Tensor) -> None:
        if x.ndim != 4 or x.shape[1] != 3:
            raise UsageError(f"expected an (N, 3, H, W) batch, got {tuple(x.shape)}")
        k = 2 ** self.config.depth
        if x.shape[2] % k or x.shape[3] % k:
            raise UsageError(f"spatial size {tuple(x.shape[2:])} is not divisible by 2**depth = {k}")

    def features(self, x: torch.Tensor) -> torch.Tensor:
        skips = []
        h = x
        for enc in self.encoders:
            h = enc(h)
            skips.append(h)
        h = self.decoders[0](h)
        for j, dec in enumerate(self.decoders[1:], start=1):
            h = dec(torch.cat([h, skips[-1 - j]], dim=1))
        return h

    def forward(self, x: torch.Tensor):
        """Return ``(alpha_hat, w_hat, m_hat, f_u)``, or ``(rgb, f_u)`` without heads."""
        self.check_input(x)
        f_u = self.features(x)
        if not self.has_heads:
            return torch.sigmoid(self.rgb_head(f_u)), f_u
        return (
            torch.sigmoid(self.alpha_head(f_u)),
            torch.sigmoid(self.w_head(f_u)),
            torch.sigmoid(self.mask_head(f_u)),
            f_u,
        )


class ResidualBlock(nn.Module):
    def __init__(self, width: int, norm: str):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(width, width, 3, padding=1),
            _norm(norm, width),
            nn.ReLU(),
            nn.Conv2d(width, width, 3, padding=1),
            _norm(norm, width),
        )

    def forward(self, h):
        return h + self.body(h)


class RefineNet(nn.Module):
    """Refines the masked preliminary image using the DecompNet features."""

    def __init__(self, feature_channels: int = 64, config: RefineNetConfig | None = None):
        super().__init__()
        self.config = config = config or RefineNetConfig()
        self.stem = nn.Sequential(
            nn.Conv2d(3 + feature_channels, config.width, 3, padding=1),
            _norm(config.norm, config.width),
            nn.ReLU(),
        )
        self.blocks = nn.Sequential(*(ResidualBlock(config.width, config.norm) for _ in range(config.blocks)))
        self.head = nn.Conv2d(config.width, 3, 3, padding=1)

    def forward(self, y_pre_masked: torch.Tensor, f_u: torch.Tensor) -> torch.Tensor:
        if y_pre_masked.shape[0] != f_u.shape[0] or y_pre_masked.shape[2:] != f_u.shape[2:]:
            raise UsageError(
                f"image {tuple(y_pre_masked.shape)} and features {tuple(f_u.shape)} disagree in batch or size"
            )
        h = self.stem(torch.cat([y_pre_masked, f_u], dim=1))
        return torch.sigmoid(self.head(self.blocks(h)))


class WDNet(nn.Module):
    """The full generator and its two ablated variants.

    ``variant`` is ``"wdnet"`` (DecompNet, decomposition merge, RefineNet),
    ``"decompnet"`` (no RefineNet; the preliminary image is merged directly)
    or ``"baseline"`` (plain U-Net predicting the clean image).
    """

    def __init__(self, decomp: DecompNetConfig | None = None, refine: RefineNetConfig | None = None,
                 variant: str = "wdnet"):
        super().__init__()
        if variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {variant!r}")
        self.variant = variant
        self.decomp_config = decomp or DecompNetConfig()
        self.refine_config = refine or RefineNetConfig()
        self.decompnet = DecompNet(self.decomp_config, heads=variant != "baseline")
        self.refinenet = RefineNet(self.decompnet.feature_channels, self.refine_config) if variant == "wdnet" else None

    def config_dict(self) -> dict:
        return {
            "variant": self.variant,
            "decomp": self.decomp_config.to_dict(),
            "refine": self.refine_config.to_dict(),
        }

    @classmethod
    def from_config(cls, d: dict) -> "WDNet":
        return cls(DecompNetConfig.from_dict(d["decomp"]), RefineNetConfig.from_dict(d["refine"]), d["variant"])

    def forward(self, x: torch.Tensor, force_mask: torch.Tensor | None = None) -> WDNetOutput:
        """Run the generator on an (N, 3, H, W) batch in [0, 1].

        ``force_mask`` replaces the predicted mask; used to probe the merge.
        """
        if self.variant == "baseline":
            y, f_u = self.decompnet(x)
            return WDNetOutput(y_out=y, f_u=f_u)
        alpha_hat, w_hat, m_hat, f_u = self.decompnet(x)
        if force_mask is not None:
            m_hat = force_mask.expand_as(m_hat).to(x.dtype)
        alpha_c = alpha_hat.clamp(0.0, 1.0 - ALPHA_EPS)
        y_pre = imaging.decompose(x, w_hat, alpha_c, eps=ALPHA_EPS)
        y_pre_masked = m_hat * y_pre
        if self.refinenet is None:
            y_refined = None
            y_out = imaging.merge_masked(y_pre, x, m_hat)
        else:
            y_refined = self.refinenet(y_pre_masked, f_u)
            y_out = imaging.merge_masked(y_refined, x, m_hat)
        return WDNetOutput(
            y_out=y_out, alpha_hat=alpha_hat, w_hat=w_hat, m_hat=m_hat, y_pre=y_pre,
            y_pre_masked=y_pre_masked, y_refined=y_refined, f_u=f_u,
        )


class PatchDiscriminator(nn.Module):
    """Scores overlapping patches of (watermarked, candidate) pairs as real or fake."""

    def __init__(self, config: DiscriminatorConfig | None = None):
        super().__init__()
        self.config = config = config or DiscriminatorConfig()
        c1, c2, c3, c4 = config.channels()
        self.net = nn.Sequential(
            nn.Conv2d(6, c1, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(c1, c2, 4, stride=2, padding=1),
            _norm(config.norm, c2),
            nn.LeakyReLU(0.2),
            nn.Conv2d(c2, c3, 4, stride=2, padding=1),
            _norm(config.norm, c3),
            nn.LeakyReLU(0.2),
            nn.Conv2d(c3, c4, 4, stride=1, padding=1),
            _norm(config.norm, c4),
            nn.LeakyReLU(0.2),
            nn.Conv2d(c4, 1, 4, stride=1, padding=1),
        )

    def logits(self, x: torch.Tensor, candidate: torch.Tensor) -> torch.Tensor:
        if x.shape != candidate.shape:
            raise UsageError(f"discriminator inputs disagree: {tuple(x.shape)} vs {tuple(candidate.shape)}")
        return self.net(torch.cat([x, candidate], dim=1))

    def forward(self, x: torch.Tensor, candidate: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.logits(x, candidate))


def init_weights(module: nn.Module, seed: int = 0, std: float = 0.02) -> nn.Module:
    """Conv weights ~ N(0, std), biases 0; norm scales ~ N(1, std).  Deterministic in ``seed``."""
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
                m.weight.copy_(torch.randn(m.weight.shape, generator=gen, dtype=m.weight.dtype) * std)
                if m.bias is not None:
                    m.bias.zero_()
            elif isinstance(m, (nn.BatchNorm2d, nn.InstanceNorm2d)) and m.weight is not None:
                m.weight.copy_(1.0 + torch.randn(m.weight.shape, generator=gen, dtype=m.weight.dtype) * std)
                m.bias.zero_()
    return module

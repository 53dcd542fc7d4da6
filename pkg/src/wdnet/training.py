"""Adversarial training loop.

One training cycle is one discriminator update followed by three
generator updates on the same batch, all with Adam.  The discriminator
sees (watermarked, clean) pairs as real and (watermarked, merged output)
pairs as fake.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch

from . import checkpoint as ckpt
from .errors import ConfigError, NonFiniteLossError
from .losses import EXTRACTOR_MODES, LossWeights, content_loss, gan_losses_from_logits, make_extractor
from .nets import (DecompNetConfig, DiscriminatorConfig, PatchDiscriminator, RefineNetConfig, VARIANTS, WDNet,
                   init_weights)

log = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.safetensors"
LOG_NAME = "train_log.jsonl"


@dataclass
class TrainConfig:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 6
    d_steps: int = 1
    g_steps: int = 3
    total_g_steps: int = 3000
    seed: int = 0
    variant: str = "wdnet"
    loss: LossWeights = field(default_factory=LossWeights)
    perceptual_mode: str = "pretrained-vgg-relu2_2"
    vgg_weights: str | None = None
    decomp: DecompNetConfig = field(default_factory=DecompNetConfig)
    refine: RefineNetConfig = field(default_factory=RefineNetConfig)
    disc: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    checkpoint_every: int = 200  # cycles
    splits: tuple = ("train",)

    def __post_init__(self):
        for name, cls in (("loss", LossWeights), ("decomp", DecompNetConfig), ("refine", RefineNetConfig),
                          ("disc", DiscriminatorConfig)):
            val = getattr(self, name)
            if isinstance(val, dict):
                setattr(self, name, cls.from_dict(val) if hasattr(cls, "from_dict") else cls(**val))
        self.splits = tuple([self.splits] if isinstance(self.splits, str) else self.splits)
        self.validate()

    def validate(self) -> None:
        if not self.lr >= 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.d_steps < 1 or self.g_steps < 1:
            raise ConfigError("d_steps and g_steps must be >= 1")
        if self.total_g_steps < 0:
            raise ConfigError("total_g_steps must be >= 0")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.perceptual_mode not in EXTRACTOR_MODES:
            raise ConfigError(f"perceptual_mode must be one of {EXTRACTOR_MODES}")
        if self.perceptual_mode == "disabled" and self.loss.perceptual > 0:
            raise ConfigError("perceptual_mode=disabled requires loss.perceptual=0")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["splits"] = list(self.splits)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train key(s): {sorted(unknown)}")
        return cls(**d)


def toy_config(**overrides) -> TrainConfig:
    """Desk-scale settings: quarter-width DecompNet, narrow RefineNet, no perceptual term.

    The learning rate is raised to 1e-3 so the small model gets past
    constant-colour predictions within a few thousand steps.
    """
    base = dict(
        lr=1e-3,
        batch_size=4,
        loss=LossWeights(perceptual=0.0),
        perceptual_mode="disabled",
        decomp=DecompNetConfig(channel_mult=0.25),
        refine=RefineNetConfig(width=16),
        disc=DiscriminatorConfig(channel_mult=0.25),
    )
    base.update(overrides)
    return TrainConfig(**base)


def to_tensors(arrays: dict, idx=None, dtype=torch.float32) -> dict:
    """NHWC/NHW numpy arrays -> NCHW tensors (``x``, ``y``, ``w``, ``alpha``, ``mask``)."""
    out = {}
    for k in ("x", "y", "w", "alpha", "mask"):
        a = arrays[k] if idx is None else arrays[k][idx]
        t = torch.from_numpy(np.ascontiguousarray(a)).to(dtype)
        out[k] = t.permute(0, 3, 1, 2).contiguous() if t.ndim == 4 else t.unsqueeze(1)
    return out


class Trainer:
    """Owns the generator, discriminator, their optimizers and step counters."""

    def __init__(self, config: TrainConfig, extractor=None):
        self.config = config
        self.generator = init_weights(WDNet(config.decomp, config.refine, config.variant), seed=config.seed)
        self.discriminator = init_weights(PatchDiscriminator(config.disc), seed=config.seed + 1)
        betas = (config.beta1, config.beta2)
        self.opt_g = torch.optim.Adam(self.generator.parameters(), lr=config.lr, betas=betas)
        self.opt_d = torch.optim.Adam(self.discriminator.parameters(), lr=config.lr, betas=betas)
        if extractor is None and config.loss.perceptual > 0:
            extractor = make_extractor(config.perceptual_mode, config.vgg_weights)
        self.extractor = extractor
        self.g_step = 0
        self.d_step = 0
        self.cycle = 0

    # -- one cycle -----------------------------------------------------------

    def d_update(self, batch: dict) -> float:
        g, d = self.generator, self.discriminator
        with torch.no_grad():
            fake = g(batch["x"]).y_out
        self.opt_d.zero_grad(set_to_none=True)
        loss_d, _ = gan_losses_from_logits(d.logits(batch["x"], batch["y"]), d.logits(batch["x"], fake))
        self._check(loss_d, {"d_step": self.d_step, "loss_d": loss_d.item()})
        loss_d.backward()
        self.opt_d.step()
        self.d_step += 1
        return loss_d.item()

    def generator_objective(self, batch: dict):
        """Adversarial generator loss plus content loss, with the per-term breakdown."""
        out = self.generator(batch["x"])
        logits = self.discriminator.logits(batch["x"], out.y_out)
        _, loss_g = gan_losses_from_logits(logits, logits)
        content, terms = content_loss(out, batch, self.config.loss, self.extractor)
        return loss_g + content, loss_g, content, terms

    def g_update(self, batch: dict) -> dict:
        for p in self.discriminator.parameters():
            p.requires_grad_(False)
        try:
            self.opt_g.zero_grad(set_to_none=True)
            total, loss_g, content, terms = self.generator_objective(batch)
            rec = {"loss_g": loss_g.item(), "content": content.item(), **{k: v.item() for k, v in terms.items()}}
            self._check(total, rec)
            total.backward()
            self.opt_g.step()
        finally:
            for p in self.discriminator.parameters():
                p.requires_grad_(True)
        self.g_step += 1
        return rec

    def train_step(self, batch: dict, g_limit=None) -> list:
        """One cycle: ``d_steps`` discriminator updates then ``g_steps`` generator updates.

        ``g_limit`` caps the generator updates, so a run can end mid-cycle.
        """
        self.generator.train()
        self.discriminator.train()
        for _ in range(self.config.d_steps):
            loss_d = self.d_update(batch)
        records = []
        g_steps = self.config.g_steps if g_limit is None else min(self.config.g_steps, g_limit)
        for _ in range(g_steps):
            rec = self.g_update(batch)
            records.append({"step": self.g_step, "d_step": self.d_step, "loss_d": loss_d, **rec})
        self.cycle += 1
        return records

    def _check(self, loss, record):
        if not torch.isfinite(loss):
            record = {"step": self.g_step, "d_step": self.d_step, "error": "non-finite loss", **record}
            raise NonFiniteLossError(f"non-finite loss at generator step {self.g_step}", record)

    # -- persistence ---------------------------------------------------------

    def save(self, path) -> Path:
        tensors = {**ckpt.module_tensors(self.generator, "G"), **ckpt.module_tensors(self.discriminator, "D")}
        opt_g, extra_g = ckpt.optimizer_tensors(self.opt_g, "optG")
        opt_d, extra_d = ckpt.optimizer_tensors(self.opt_d, "optD")
        tensors.update(opt_g)
        tensors.update(opt_d)
        meta = {
            "generator": self.generator.config_dict(),
            "discriminator": self.config.disc.to_dict(),
            "train": {
                "config": self.config.to_dict(),
                "g_step": self.g_step,
                "d_step": self.d_step,
                "cycle": self.cycle,
                "optG": extra_g,
                "optD": extra_d,
            },
        }
        return ckpt.save(path, tensors, meta)

    @classmethod
    def load(cls, path, config: TrainConfig | None = None, extractor=None) -> "Trainer":
        tensors, meta = ckpt.load(path)
        if "train" not in meta:
            raise ConfigError(f"{path} is not a training checkpoint")
        stored = TrainConfig.from_dict(meta["train"]["config"])
        if config is None:
            config = stored
        elif (config.variant, config.decomp, config.refine, config.disc) != \
                (stored.variant, stored.decomp, stored.refine, stored.disc):
            raise ConfigError(f"{path} was trained with a different architecture")
        t = cls(config, extractor)
        ckpt.load_module(t.generator, tensors, "G")
        ckpt.load_module(t.discriminator, tensors, "D")
        ckpt.load_optimizer(t.opt_g, tensors, meta["train"]["optG"], "optG")
        ckpt.load_optimizer(t.opt_d, tensors, meta["train"]["optD"], "optD")
        for group in (*t.opt_g.param_groups, *t.opt_d.param_groups):
            group["lr"] = config.lr
            group["betas"] = (config.beta1, config.beta2)
        t.g_step = meta["train"]["g_step"]
        t.d_step = meta["train"]["d_step"]
        t.cycle = meta["train"]["cycle"]
        return t


def batch_indices(n: int, batch_size: int, cycle: int, seed: int) -> np.ndarray:
    """Indices for ``cycle``: consecutive slices of per-epoch permutations.

    Stateless, so a resumed run draws exactly the batches an uninterrupted
    one would.
    """
    start = cycle * batch_size
    out = []
    while len(out) < batch_size:
        epoch, offset = divmod(start + len(out), n)
        perm = np.random.default_rng([seed, epoch]).permutation(n)
        take = min(batch_size - len(out), n - offset)
        out.extend(perm[offset:offset + take])
    return np.asarray(out)


def train(data: dict, config: TrainConfig, out_dir=None, resume=None, extractor=None, progress=None):
    """Train until ``config.total_g_steps`` generator updates have been made.

    ``data`` is the dict returned by :func:`wdnet.synth.load_split`.
    With ``out_dir`` set, a checkpoint is written every
    ``checkpoint_every`` cycles and at the end, and every record is
    appended to ``train_log.jsonl``.  ``resume`` is a checkpoint path.
    Returns ``(trainer, records)``.
    """
    n = len(data["x"])
    if n == 0:
        raise ConfigError("training set is empty")
    torch.manual_seed(config.seed)
    trainer = Trainer.load(resume, config, extractor) if resume else Trainer(config, extractor)
    out_dir = Path(out_dir) if out_dir else None
    log_file = None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_file = open(out_dir / LOG_NAME, "a" if resume else "w", encoding="utf-8")
    records = []
    try:
        while trainer.g_step < config.total_g_steps:
            idx = batch_indices(n, min(config.batch_size, n), trainer.cycle, config.seed)
            batch = to_tensors(data, idx)
            try:
                recs = trainer.train_step(batch, g_limit=config.total_g_steps - trainer.g_step)
            except NonFiniteLossError as exc:
                if log_file:
                    log_file.write(json.dumps(exc.record, sort_keys=True) + "\n")
                raise
            records.extend(recs)
            if log_file:
                for r in recs:
                    log_file.write(json.dumps(r, sort_keys=True) + "\n")
            if progress:
                progress(trainer, recs)
            if out_dir and trainer.cycle % config.checkpoint_every == 0:
                log_file.flush()
                trainer.save(out_dir / CHECKPOINT_NAME)
        if out_dir:
            trainer.save(out_dir / CHECKPOINT_NAME)
    finally:
        if log_file:
            log_file.close()
    return trainer, records


def read_log(path) -> list:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def finite_records(records) -> bool:
    return all(math.isfinite(v) for r in records for v in r.values() if isinstance(v, float))

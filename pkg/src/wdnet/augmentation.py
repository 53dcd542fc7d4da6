"""Harvest watermarks from unlabeled images and synthesize extra training data with them.

A trained generator predicts the watermark colours, matte and mask of an
image it has never seen labelled.  The tight crop of that prediction is
turned back into a reusable asset and pasted onto clean hosts, giving an
augmented training split tagged ``"augmented"``.
"""

from __future__ import annotations

import json
import logging
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import io as pngio
from .errors import ConfigError
from .imaging import binarize
from .synth import (DatasetManifest, SynthesisConfig, WatermarkAsset, placement_fit_rate, quantize_sample,
                    read_hosts, sample_placement, sample_rng, synthesize_sample, write_sample)

log = logging.getLogger(__name__)

AUGMENTED_SPLIT = "augmented"
AUGMENT_STREAM = 1
# below this, 1000 rejection draws fail often enough to matter
MIN_FIT_RATE = 0.01


@dataclass
class HarvestedWatermark:
    id: str
    rgb: np.ndarray  # cropped predicted watermark, (h, w, 3)
    alpha: np.ndarray  # cropped predicted matte, zero outside the binarized mask
    bbox: tuple  # (top, left, bottom, right), bottom/right exclusive
    area_fraction: float
    mean_opacity: float
    source: str = ""
    checkpoint: str = ""

    def index_entry(self) -> dict:
        return {
            "id": self.id,
            "bbox": [int(v) for v in self.bbox],
            "quality": {"area_fraction": self.area_fraction, "mean_opacity": self.mean_opacity},
            "provenance": {"source": self.source, "checkpoint": self.checkpoint},
        }

    def to_asset(self) -> WatermarkAsset:
        """Re-usable asset: matte divided by its mean in-support opacity, padded by one empty pixel."""
        support = self.alpha > 0
        silhouette = np.where(support, np.clip(self.alpha / self.mean_opacity, 0.0, 1.0), 0.0)
        silhouette = np.pad(silhouette, 1)
        rgb = np.pad(self.rgb, ((1, 1), (1, 1), (0, 0)))
        return WatermarkAsset(self.id, rgb, silhouette)


@dataclass
class Rejection:
    source: str
    reason: str


def mask_bbox(mask: np.ndarray):
    """Smallest (top, left, bottom, right) box holding every nonzero pixel, or None."""
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(mask.any(axis=0))
    return int(rows[0]), int(cols[0]), int(rows[-1]) + 1, int(cols[-1]) + 1


def separate_watermark(generator, x: np.ndarray, source: str = "", checkpoint: str = ""):
    """Extract the watermark of one (H, W, 3) image; returns a HarvestedWatermark or a Rejection."""
    if generator.variant == "baseline":
        raise ConfigError("the baseline generator does not predict watermarks")
    generator.eval()
    with torch.no_grad():
        xt = torch.from_numpy(np.ascontiguousarray(x, dtype=np.float32)).permute(2, 0, 1)[None]
        out = generator(xt)
    m = binarize(out.m_hat[0, 0].numpy()) > 0
    box = mask_bbox(m)
    if box is None:
        return Rejection(source, "no watermark detected")
    t, l, b, r = box
    alpha = np.where(m, out.alpha_hat[0, 0].numpy(), 0.0)[t:b, l:r].astype(np.float32)
    rgb = out.w_hat[0].permute(1, 2, 0).numpy()[t:b, l:r].astype(np.float32)
    support = m[t:b, l:r]
    return HarvestedWatermark(
        id=Path(source).stem if source else "wm",
        rgb=rgb,
        alpha=alpha,
        bbox=box,
        area_fraction=float(m.mean()),
        mean_opacity=float(alpha[support].mean()),
        source=source,
        checkpoint=checkpoint,
    )


@dataclass
class HarvestFilter:
    area_range: tuple = (0.01, 0.5)
    opacity_range: tuple = (0.2, 0.8)

    def check(self, h: HarvestedWatermark):
        lo, hi = self.area_range
        if not lo <= h.area_fraction <= hi:
            return f"mask area fraction {h.area_fraction:.4f} outside [{lo}, {hi}]"
        lo, hi = self.opacity_range
        if not lo <= h.mean_opacity <= hi:
            return f"mean opacity {h.mean_opacity:.4f} outside [{lo}, {hi}]"
        return None


@dataclass
class HarvestResult:
    accepted: list = field(default_factory=list)
    rejected: list = field(default_factory=list)

    def summary(self) -> dict:
        reasons: dict = {}
        for rej in self.rejected:
            key = next((k for k in ("area", "opacity", "unreadable") if k in rej.reason), rej.reason)
            reasons[key] = reasons.get(key, 0) + 1
        return {"accepted": len(self.accepted), "rejected": len(self.rejected), "reasons": reasons}


def harvest(generator, unlabeled_dir, filt: HarvestFilter | None = None, checkpoint: str = "") -> HarvestResult:
    """Separate the watermark of every PNG in ``unlabeled_dir`` and keep the plausible ones."""
    filt = filt or HarvestFilter()
    paths = pngio.list_pngs(unlabeled_dir) if Path(unlabeled_dir).is_dir() else []
    if not paths:
        raise ConfigError(f"no PNG images in {unlabeled_dir}")
    result = HarvestResult()
    for path in paths:
        try:
            x = pngio.read_rgb(path)
            found = separate_watermark(generator, x, source=path.name, checkpoint=checkpoint)
        except (OSError, ValueError) as exc:
            result.rejected.append(Rejection(path.name, f"unreadable: {exc}"))
            continue
        if isinstance(found, Rejection):
            result.rejected.append(found)
            continue
        reason = filt.check(found)
        if reason:
            result.rejected.append(Rejection(path.name, reason))
        else:
            result.accepted.append(found)
    return result


def save_harvest(directory, harvested) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for h in harvested:
        pngio.write_rgb(directory / f"{h.id}.rgb.png", h.rgb)
        pngio.write_gray(directory / f"{h.id}.alpha.png", h.alpha)
    index = directory / "index.json"
    index.write_text(json.dumps([h.index_entry() for h in harvested], indent=2, sort_keys=True) + "\n",
                     encoding="utf-8")
    return index


def load_harvest(directory) -> list:
    directory = Path(directory)
    entries = json.loads((directory / "index.json").read_text(encoding="utf-8"))
    out = []
    for e in entries:
        out.append(HarvestedWatermark(
            id=e["id"],
            rgb=pngio.read_rgb(directory / f"{e['id']}.rgb.png"),
            alpha=pngio.read_gray(directory / f"{e['id']}.alpha.png"),
            bbox=tuple(e["bbox"]),
            area_fraction=e["quality"]["area_fraction"],
            mean_opacity=e["quality"]["mean_opacity"],
            source=e["provenance"]["source"],
            checkpoint=e["provenance"]["checkpoint"],
        ))
    return out


def augment_dataset(base_root, harvested, hosts_dir, n_samples: int, seed: int = 0, out_root=None,
                    overrides: dict | None = None) -> DatasetManifest:
    """Append ``n_samples`` samples made from harvested watermarks to a dataset.

    Placement ranges, canvas and mask threshold come from the base
    manifest's synthesis config (``overrides`` may replace any of them);
    opacity is resampled, not copied from the harvested matte.  Assets that
    fit the canvas in under 1% of random placements are listed as skipped.  With
    ``out_root`` the base dataset is copied there first and left untouched.
    """
    if not harvested:
        raise ConfigError("augment_dataset needs at least one harvested watermark")
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    base_root = Path(base_root)
    base = DatasetManifest.load(base_root)
    root = base_root
    if out_root is not None and Path(out_root).resolve() != base_root.resolve():
        root = Path(out_root)
        if root.exists() and any(root.iterdir()):
            raise ConfigError(f"output directory {root} is not empty")
        shutil.copytree(base_root, root, dirs_exist_ok=True)
    cfg_dict = {**base.config, **(overrides or {})}
    cfg_dict["seed"] = seed
    config = SynthesisConfig.from_dict(cfg_dict)
    canvas = (config.canvas, config.canvas)

    skipped: list = []
    hosts = read_hosts(hosts_dir, config.canvas, skipped)
    if not hosts:
        raise ConfigError(f"no readable PNG hosts in {hosts_dir}")
    assets = []
    for h in harvested:
        asset = h.to_asset()
        if placement_fit_rate(asset, config, canvas) >= MIN_FIT_RATE:
            assets.append((h, asset))
        else:
            # e.g. a tall, narrow harvest that overflows the canvas at almost every scale and rotation
            skipped.append({"file": h.source, "reason": f"harvested asset {h.id} cannot fit the canvas"})
    if not assets:
        raise ConfigError("no harvested watermark fits the canvas at the configured scale range")
    existing = {e["id"] for e in base.entries}

    manifest = DatasetManifest(
        seed=base.seed,
        entries=[dict(e) for e in base.entries],
        skipped=list(base.skipped) + skipped,
        config=base.config,
    )
    for k in range(n_samples):
        rng = sample_rng(seed, k, AUGMENT_STREAM)
        host_name, host = hosts[k % len(hosts)]
        src, asset = assets[int(rng.integers(len(assets)))]
        spec = sample_placement(rng, config, asset, canvas)
        sample = quantize_sample(synthesize_sample(host, asset, spec, config.tau), config.tau)
        sample_id = f"aug{k:06d}"
        if sample_id in existing:
            raise ConfigError(f"{base_root} already contains augmented sample {sample_id}")
        write_sample(root, AUGMENTED_SPLIT, sample_id, sample)
        manifest.entries.append({
            "id": sample_id,
            "split": AUGMENTED_SPLIT,
            "host": host_name,
            "asset": src.id,
            "placement": spec.to_dict(),
            "provenance": {
                "harvested_from": src.source,
                "checkpoint": src.checkpoint,
                "bbox": [int(v) for v in src.bbox],
                "augment_seed": int(seed),
            },
        })
    manifest.recount()
    manifest.save(root)
    return manifest

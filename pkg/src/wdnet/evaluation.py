"""Run a model over a dataset split and score it."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import checkpoint as ckpt
from . import metrics
from .errors import ConfigError
from .nets import WDNet
from .synth import DatasetManifest, load_split

METRICS = ("psnr", "ssim", "rmse", "rmse_w")


@dataclass
class MetricReport:
    dataset: str
    model: str
    split: str = "test"
    per_image: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.per_image)

    def aggregate(self) -> None:
        s = {"count": self.count, "skipped": len(self.skipped)}
        for k in METRICS:
            vals = [r[k] for r in self.per_image]
            s[k] = float(np.mean(vals)) if vals else float("nan")
        ious = [r["mask_iou"] for r in self.per_image if "mask_iou" in r]
        if ious:
            s["mask_iou"] = float(np.mean(ious))
        s["empty_masks"] = sum(1 for r in self.per_image if r.get("empty_mask"))
        self.summary = s

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        return path

    def table_row(self, label: str) -> str:
        s = self.summary
        return f"{label:<14}{s['psnr']:>9.2f}{s['ssim']:>9.4f}{s['rmse']:>9.2f}{s['rmse_w']:>9.2f}"


TABLE_HEADER = f"{'Model':<14}{'PSNR':>9}{'SSIM':>9}{'RMSE':>9}{'RMSE_w':>9}"


def format_table(rows: dict) -> str:
    """Fixed-width table of several reports keyed by row label."""
    lines = [TABLE_HEADER, "-" * len(TABLE_HEADER)]
    lines += [rep.table_row(label) for label, rep in rows.items()]
    return "\n".join(lines)


def generator_predictor(generator: WDNet, batch_size: int = 8):
    """Wrap a generator as ``predict(x_nhwc) -> dict(y_out=..., m_hat=...)`` on numpy arrays."""
    generator.eval()

    def predict(x: np.ndarray) -> dict:
        outs: dict = {}
        with torch.no_grad():
            for i in range(0, len(x), batch_size):
                xb = torch.from_numpy(np.ascontiguousarray(x[i:i + batch_size])).float().permute(0, 3, 1, 2)
                out = generator(xb)
                outs.setdefault("y_out", []).append(out.y_out.permute(0, 2, 3, 1).numpy())
                if out.m_hat is not None:
                    outs.setdefault("m_hat", []).append(out.m_hat[:, 0].numpy())
        return {k: np.concatenate(v) for k, v in outs.items()}

    return predict


def identity_predictor(x: np.ndarray) -> dict:
    return {"y_out": x}


def resolve_model(model):
    """Accept a generator, a checkpoint path, or a predictor callable."""
    if isinstance(model, WDNet):
        return generator_predictor(model), f"in-memory {model.variant}"
    if isinstance(model, (str, Path)):
        g, _ = ckpt.load_generator(model)
        return generator_predictor(g), str(model)
    if callable(model):
        return model, getattr(model, "__name__", "callable")
    raise ConfigError(f"cannot evaluate a {type(model).__name__}")


def evaluate(model, dataset_root, split: str = "test", oracle=False, label=None) -> MetricReport:
    """Score ``model`` on every sample of ``split`` under ``dataset_root``.

    RMSE_w uses the ground-truth mask.  When the model predicts a mask,
    its IoU against the ground truth (both binarized at 0.5) is reported
    as well.  ``oracle=True`` passes the ground truth through instead of
    running a model.
    """
    manifest = DatasetManifest.load(dataset_root)
    data = load_split(dataset_root, (split,), manifest)
    if oracle:
        predict, name = (lambda x: {"y_out": data["y"]}), "oracle"
    else:
        predict, name = resolve_model(model)
    report = MetricReport(dataset=str(dataset_root), model=label or name, split=split,
                          skipped=list(data["skipped"]))
    if len(data["ids"]) == 0:
        report.aggregate()
        return report
    pred = predict(data["x"])
    for i, sid in enumerate(data["ids"]):
        y_hat, y, m = pred["y_out"][i], data["y"][i], data["mask"][i]
        rw, empty = metrics.rmse_w(y_hat, y, m)
        rec = {
            "id": sid,
            "psnr": metrics.psnr(y_hat, y),
            "ssim": metrics.ssim(y_hat, y),
            "rmse": metrics.rmse(y_hat, y),
            "rmse_w": rw,
        }
        if empty:
            rec["empty_mask"] = True
        if "m_hat" in pred:
            rec["mask_iou"] = metrics.mask_iou(pred["m_hat"][i], m)
        report.per_image.append(rec)
    report.aggregate()
    return report

"""Command-line entry point: ``wdnet <command> [options]``.

Commands
  synth     build a synthetic dataset (optionally from a generated toy corpus)
  train     train a generator on a dataset
  eval      score a checkpoint on a dataset split
  remove    write watermark-free images for a directory of PNGs
  separate  harvest watermarks from unlabeled images
  augment   add samples made from harvested watermarks to a dataset
  ablate    train and compare baseline / decompnet / wdnet and the supervision toggle

Every command writes ``result.json`` into ``--out``.  Exit status: 0 ok,
2 usage error, 3 configuration error, 4 I/O error, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import config as cfgmod
from .errors import ConfigError, NonFiniteLossError, UsageError

log = logging.getLogger("wdnet")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3, 4


def _common(p: argparse.ArgumentParser, out_required=True) -> None:
    p.add_argument("--config", type=Path, help="YAML run configuration (sections synth/train/harvest/augment/eval)")
    p.add_argument("--seed", type=int, help="seed applied to the synth, train and augment sections")
    p.add_argument("--out", type=Path, required=out_required, help="output directory (receives result.json)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key, e.g. train.total_g_steps=300 (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wdnet", description="Visible watermark decomposition and removal.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("synth", help="build a synthetic watermark dataset")
    _common(p)
    p.add_argument("--hosts", type=Path, help="directory of clean host PNGs")
    p.add_argument("--assets", type=Path, help="directory of watermark assets (<name>.rgb.png + <name>.alpha.png)")
    p.add_argument("--toy", nargs=2, type=int, metavar=("HOSTS", "ASSETS"),
                   help="generate a procedural corpus of HOSTS hosts and ASSETS logos under <out>/corpus")

    p = sub.add_parser("train", help="train a generator")
    _common(p)
    p.add_argument("--dataset", type=Path, required=True, help="dataset root (contains manifest.json)")
    p.add_argument("--checkpoint", type=Path, help="training checkpoint to resume from")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _common(p)
    p.add_argument("--dataset", type=Path, required=True, help="dataset root; may differ from the training set")
    p.add_argument("--checkpoint", type=Path, help="generator checkpoint")
    p.add_argument("--identity", action="store_true", help="score the no-op model (output = input)")

    p = sub.add_parser("remove", help="remove watermarks from images")
    _common(p)
    p.add_argument("--checkpoint", type=Path, required=True, help="generator checkpoint")
    p.add_argument("--dataset", type=Path, required=True, help="a PNG file or a directory of PNGs")

    p = sub.add_parser("separate", help="harvest watermarks from unlabeled images")
    _common(p)
    p.add_argument("--checkpoint", type=Path, required=True, help="generator checkpoint")
    p.add_argument("--dataset", type=Path, required=True, help="directory of unlabeled watermarked PNGs")

    p = sub.add_parser("augment", help="augment a dataset with harvested watermarks")
    _common(p)
    p.add_argument("--dataset", type=Path, required=True, help="base dataset root")
    p.add_argument("--harvest", type=Path, required=True, help="output directory of a 'separate' run")
    p.add_argument("--hosts", type=Path, required=True, help="directory of clean host PNGs")

    p = sub.add_parser("ablate", help="train and compare model variants")
    _common(p)
    p.add_argument("--dataset", type=Path, required=True, help="dataset root")
    return parser


def _write_result(out: Path, result: dict) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / "result.json"
    path.write_text(json.dumps(result, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def cmd_synth(args, cfg):
    from .synth import build_dataset, dataset_digest
    from .toy import write_toy_corpus

    if args.toy:
        hosts, assets, _ = write_toy_corpus(args.out / "corpus", args.toy[0], args.toy[1], seed=cfg.synth.seed,
                                            host_size=cfg.synth.canvas)
    elif args.hosts and args.assets:
        hosts, assets = args.hosts, args.assets
    else:
        raise UsageError("synth needs --hosts and --assets, or --toy HOSTS ASSETS")
    root = args.out / "dataset" if args.toy else args.out
    manifest = build_dataset(hosts, assets, cfg.synth, root)
    digest = dataset_digest(root)
    print(f"dataset {root}  samples {manifest.counts}  sha256 {digest}")
    return {"dataset": str(root), "counts": manifest.counts, "sha256": digest, "skipped": len(manifest.skipped)}


def cmd_train(args, cfg):
    from .synth import load_split
    from .training import CHECKPOINT_NAME, LOG_NAME, train

    data = load_split(args.dataset, cfg.train.splits)
    t0 = time.time()

    def progress(trainer, recs):
        if args.verbose and trainer.cycle % 50 == 0:
            r = recs[-1]
            log.info("step %d  content %.4f  loss_g %.4f  loss_d %.4f", r["step"], r["content"], r["loss_g"], r["loss_d"])

    trainer, records = train(data, cfg.train, args.out, resume=args.checkpoint, progress=progress)
    last = records[-1] if records else {}
    print(f"trained {trainer.g_step} generator steps ({trainer.d_step} discriminator) in {time.time() - t0:.1f}s")
    return {
        "checkpoint": str(args.out / CHECKPOINT_NAME),
        "log": str(args.out / LOG_NAME),
        "g_step": trainer.g_step,
        "d_step": trainer.d_step,
        "final": last,
    }


def cmd_eval(args, cfg):
    from .evaluation import evaluate, format_table, identity_predictor

    if args.identity:
        report = evaluate(identity_predictor, args.dataset, cfg.eval.split, label="identity")
    elif args.checkpoint:
        report = evaluate(args.checkpoint, args.dataset, cfg.eval.split)
    else:
        raise UsageError("eval needs --checkpoint or --identity")
    report.save(args.out / "report.json")
    label = "Identity" if args.identity else "Model"
    print(format_table({label: report}))
    return {"report": str(args.out / "report.json"), "summary": report.summary}


def cmd_remove(args, cfg):
    import numpy as np
    import torch

    from . import checkpoint as ckpt
    from . import io as pngio

    g, _ = ckpt.load_generator(args.checkpoint)
    src = args.dataset
    paths = [src] if src.is_file() else pngio.list_pngs(src)
    if not paths:
        raise ConfigError(f"no PNG images in {src}")
    written = []
    for path in paths:
        x = pngio.read_rgb(path)
        with torch.no_grad():
            out = g(torch.from_numpy(np.ascontiguousarray(x)).permute(2, 0, 1)[None])
        dest = args.out / path.name
        pngio.write_rgb(dest, out.y_out[0].permute(1, 2, 0).numpy())
        written.append(str(dest))
    print(f"wrote {len(written)} image(s) to {args.out}")
    return {"outputs": written}


def cmd_separate(args, cfg):
    from . import checkpoint as ckpt
    from .augmentation import harvest, save_harvest

    g, _ = ckpt.load_generator(args.checkpoint)
    result = harvest(g, args.dataset, cfg.harvest, checkpoint=args.checkpoint.name)
    index = save_harvest(args.out, result.accepted)
    summary = result.summary()
    print(f"harvested {summary['accepted']} watermark(s), rejected {summary['rejected']}")
    return {"index": str(index), **summary,
            "rejections": [{"source": r.source, "reason": r.reason} for r in result.rejected]}


def cmd_augment(args, cfg):
    from .augmentation import augment_dataset, load_harvest
    from .synth import dataset_digest

    harvested = load_harvest(args.harvest)
    manifest = augment_dataset(args.dataset, harvested, args.hosts, cfg.augment.n_samples, cfg.augment.seed,
                               out_root=args.out)
    digest = dataset_digest(args.out)
    print(f"augmented dataset {args.out}  samples {manifest.counts}  sha256 {digest}")
    return {"dataset": str(args.out), "counts": manifest.counts, "sha256": digest}


ABLATIONS = (
    ("Baseline", {"variant": "baseline"}),
    ("DecompNet", {"variant": "decompnet"}),
    ("WDNet", {"variant": "wdnet"}),
)
UNSUPERVISED = "WDNet w/o S"


def cmd_ablate(args, cfg):
    """Train the three architecture variants plus WDNet without the matte/colour/mask terms."""
    from .evaluation import evaluate, format_table
    from .synth import load_split
    from .training import train

    data = load_split(args.dataset, cfg.train.splits)
    runs = [(label, replace(cfg.train, variant=spec["variant"])) for label, spec in ABLATIONS]
    runs.append((UNSUPERVISED, replace(cfg.train, variant="wdnet",
                                       loss=replace(cfg.train.loss, mask=0.0, watermark=0.0))))
    reports = {}
    for label, tc in runs:
        run_dir = args.out / label.lower().replace(" ", "_").replace("/", "")
        trainer, _ = train(data, tc, run_dir)
        reports[label] = evaluate(trainer.generator, args.dataset, cfg.eval.split, label=label)
        reports[label].save(run_dir / "report.json")
        log.info("%s done", label)
    table = format_table({label: reports[label] for label, _ in ABLATIONS})
    supervision = format_table({label: reports[label] for label in ("WDNet", UNSUPERVISED)})
    (args.out / "ablation.txt").write_text(table + "\n", encoding="utf-8")
    (args.out / "supervision.txt").write_text(supervision + "\n", encoding="utf-8")
    print(table)
    print()
    print(supervision)
    return {"table": str(args.out / "ablation.txt"), "supervision_table": str(args.out / "supervision.txt"),
            "rows": {label: {k: rep.summary[k] for k in ("psnr", "ssim", "rmse", "rmse_w")}
                     for label, rep in reports.items()}}


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "remove": cmd_remove,
    "separate": cmd_separate,
    "augment": cmd_augment,
    "ablate": cmd_ablate,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = cfgmod.load(args.config, args.overrides, args.seed)
        result = COMMANDS[args.command](args, cfg)
        _write_result(args.out, {"command": args.command, "status": "ok", **result})
        return EXIT_OK
    except UsageError as exc:
        return _fail(args, "usage", exc, EXIT_USAGE)
    except ConfigError as exc:
        return _fail(args, "config", exc, EXIT_CONFIG)
    except (FileNotFoundError, PermissionError, IsADirectoryError, NotADirectoryError) as exc:
        return _fail(args, "io", exc, EXIT_IO)
    except NonFiniteLossError as exc:
        return _fail(args, "numeric", exc, EXIT_ERROR, record=exc.record)
    except OSError as exc:
        return _fail(args, "io", exc, EXIT_IO)


def _fail(args, category: str, exc: Exception, code: int, record=None) -> int:
    print(f"wdnet {args.command}: {category} error: {exc}", file=sys.stderr)
    try:
        result = {"command": args.command, "status": "error", "category": category, "message": str(exc)}
        if record:
            result["record"] = record
        _write_result(args.out, result)
    except OSError:
        pass
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

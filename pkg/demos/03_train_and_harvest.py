"""
Training a small remover, then reusing what it finds
====================================================

A quarter-width generator is trained briefly on a procedural dataset and
compared with doing nothing.  The trained model then separates logos it
was never taught from unlabeled images, and those separated logos seed
new training samples.

Three training logos are far too few for the model to generalize, so
expect PSNR on the held-out logo to sit near or below the identity.  The
masks are still good enough to harvest from, which is the point here.

Pass a step count as the first argument for a longer run (default 2000,
about three minutes on one core).
"""

import sys
import tempfile
from pathlib import Path

import numpy as np
import torch

from wdnet import io as pngio
from wdnet.augmentation import HarvestFilter, augment_dataset, harvest
from wdnet.evaluation import evaluate, format_table, identity_predictor
from wdnet.synth import SynthesisConfig, build_dataset, load_split
from wdnet.toy import write_toy_corpus
from wdnet.training import toy_config, train

torch.set_num_threads(1)
steps = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
out = Path(tempfile.mkdtemp(prefix="wdnet-demo-"))

hosts, assets, names = write_toy_corpus(out / "corpus", n_hosts=44, n_assets=4, seed=1)
# large placements give a small model enough watermark pixels to learn from
cfg = SynthesisConfig(canvas=64, samples_per_host=3, seed=1, test_hosts=4, test_assets=names[-1:],
                      scale_range=(0.5, 0.9))
build_dataset(hosts, assets, cfg, out / "dataset")
data = load_split(out / "dataset", ("train",))
print("training on", len(data["x"]), "samples for", steps, "generator steps")

trainer, log = train(data, toy_config(total_g_steps=steps, seed=0), out / "run")
print("content loss: first %.3f, last %.3f" % (log[0]["content"], log[-1]["content"]))

reports = {
    "Identity": evaluate(identity_predictor, out / "dataset", label="identity"),
    "WDNet": evaluate(trainer.generator, out / "dataset", label="wdnet"),
}
print(format_table(reports))
print("mask IoU on held-out logos: %.3f" % reports["WDNet"].summary["mask_iou"])

# the held-out test images stand in for an unlabeled, watermarked collection
unlabeled = out / "unlabeled"
for i, x in enumerate(load_split(out / "dataset", ("test",))["x"]):
    pngio.write_rgb(unlabeled / f"img_{i:03d}.png", x)
found = harvest(trainer.generator, unlabeled, HarvestFilter(), checkpoint="demo")
print("harvest:", found.summary())

if found.accepted:
    m = augment_dataset(out / "dataset", found.accepted, hosts, n_samples=20, seed=0, out_root=out / "augmented")
    print("augmented dataset counts:", m.counts)
    print("e.g.", m.entries[-1]["provenance"])
else:
    # a short run may not produce confident masks yet; try a few thousand steps
    print("nothing accepted; rerun with more steps")

"""Synthetic watermark dataset construction.

One watermark is placed per host image with random size, position,
rotation and opacity, and every sample is written with full ground truth
(watermarked image, clean target, watermark layer, alpha matte, mask).

On-disk layout::

    <root>/manifest.json
    <root>/<split>/{watermarked,target,watermark,alpha,mask}/<id>.png
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from . import io as pngio
from .errors import ConfigError, UsageError
from .imaging import DEFAULT_TAU, compose, mask_from_alpha

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
LAYERS = ("watermarked", "target", "watermark", "alpha", "mask")
MAX_REJECTIONS = 1000


@dataclass(frozen=True)
class WatermarkAsset:
    """A logo: colours plus its silhouette matte (zero outside the logo)."""

    name: str
    rgb: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        rgb = np.asarray(self.rgb, dtype=np.float32)
        alpha = np.asarray(self.alpha, dtype=np.float32)
        if alpha.ndim == 3 and alpha.shape[-1] == 1:
            alpha = alpha[..., 0]
        if rgb.ndim != 3 or rgb.shape[-1] != 3 or rgb.shape[:2] != alpha.shape:
            raise UsageError(f"asset {self.name!r}: rgb {rgb.shape} and alpha {alpha.shape} disagree")
        if not alpha.max() > 0:
            raise UsageError(f"asset {self.name!r} has an empty matte")
        edges = (alpha[0], alpha[-1], alpha[:, 0], alpha[:, -1])
        if not any((e == 0).all() for e in edges):
            raise UsageError(f"asset {self.name!r} has no all-zero border row or column")
        object.__setattr__(self, "rgb", rgb)
        object.__setattr__(self, "alpha", alpha)

    @property
    def shape(self):
        return self.alpha.shape

    def save(self, directory) -> None:
        directory = Path(directory)
        pngio.write_rgb(directory / f"{self.name}.rgb.png", self.rgb)
        pngio.write_gray(directory / f"{self.name}.alpha.png", self.alpha)

    @classmethod
    def load(cls, directory, name: str) -> "WatermarkAsset":
        directory = Path(directory)
        return cls(
            name,
            pngio.read_rgb(directory / f"{name}.rgb.png"),
            pngio.read_gray(directory / f"{name}.alpha.png"),
        )


def load_assets(directory) -> list[WatermarkAsset]:
    """Assets stored as ``<name>.rgb.png`` + ``<name>.alpha.png`` or as RGBA ``<name>.png``."""
    directory = Path(directory)
    assets = []
    for path in sorted(directory.glob("*.png")):
        fname = path.name
        if fname.endswith(".alpha.png"):
            continue
        if fname.endswith(".rgb.png"):
            name = fname[: -len(".rgb.png")]
            if not (directory / f"{name}.alpha.png").exists():
                log.warning("asset %s has no alpha file, skipped", name)
                continue
            assets.append(WatermarkAsset.load(directory, name))
        else:
            with Image.open(path) as im:
                if "A" not in im.getbands():
                    log.warning("%s has no alpha channel, skipped", path)
                    continue
                rgba = np.asarray(im.convert("RGBA"), dtype=np.float32) / 255.0
            assets.append(WatermarkAsset(path.stem, rgba[..., :3], rgba[..., 3]))
    return assets


@dataclass(frozen=True)
class PlacementSpec:
    scale: float  # watermark width / canvas width
    rotation: float  # degrees, counter-clockwise
    center: tuple  # (row, col) in canvas pixel coordinates
    opacity: float

    def to_dict(self) -> dict:
        return {
            "scale": float(self.scale),
            "rotation": float(self.rotation),
            "center": [float(self.center[0]), float(self.center[1])],
            "opacity": float(self.opacity),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlacementSpec":
        return cls(float(d["scale"]), float(d["rotation"]), tuple(d["center"]), float(d["opacity"]))


@dataclass
class SynthesisConfig:
    canvas: int = 128
    scale_range: tuple = (0.3, 0.7)
    rotation_range: tuple = (0.0, 360.0)
    opacity_range: tuple = (0.3, 0.7)
    samples_per_host: int = 1
    seed: int = 0
    tau: float = DEFAULT_TAU
    # the last ``test_hosts`` hosts (sorted by filename) form the test split
    test_hosts: int = 0
    # asset names reserved for the test split; all others are used for training
    test_assets: tuple = ()

    def __post_init__(self):
        self.scale_range = tuple(float(v) for v in self.scale_range)
        self.rotation_range = tuple(float(v) for v in self.rotation_range)
        self.opacity_range = tuple(float(v) for v in self.opacity_range)
        self.test_assets = tuple(self.test_assets)
        self.validate()

    def validate(self) -> None:
        def check_range(name, r, lo, hi):
            if len(r) != 2 or not lo <= r[0] <= r[1] <= hi:
                raise ConfigError(f"{name} must satisfy {lo} <= low <= high <= {hi}, got {r}")

        if self.canvas < 8:
            raise ConfigError(f"canvas must be at least 8 pixels, got {self.canvas}")
        check_range("scale_range", self.scale_range, 0.0, 1.0)
        if self.scale_range[0] <= 0:
            raise ConfigError("scale_range must be strictly positive")
        check_range("rotation_range", self.rotation_range, 0.0, 360.0)
        check_range("opacity_range", self.opacity_range, 0.0, 1.0)
        if self.samples_per_host < 1:
            raise ConfigError("samples_per_host must be >= 1")
        if not 0.0 < self.tau < 1.0:
            raise ConfigError(f"tau must lie in (0, 1), got {self.tau}")
        if self.test_hosts < 0:
            raise ConfigError("test_hosts must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthesisConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown synthesis key(s): {sorted(unknown)}")
        return cls(**d)


@dataclass
class Sample:
    x: np.ndarray
    y: np.ndarray
    w: np.ndarray
    alpha: np.ndarray
    mask: np.ndarray
    meta: PlacementSpec | None = None


@dataclass
class DatasetManifest:
    seed: int
    entries: list = field(default_factory=list)
    counts: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    version: int = MANIFEST_VERSION

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    def save(self, root) -> Path:
        path = Path(root) / "manifest.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        return path

    @classmethod
    def load(cls, root) -> "DatasetManifest":
        path = Path(root)
        if path.is_dir():
            path = path / "manifest.json"
        d = json.loads(path.read_text(encoding="utf-8"))
        if d.get("version") != MANIFEST_VERSION:
            raise ConfigError(f"unsupported manifest version {d.get('version')!r}")
        return cls(**d)

    def split_ids(self, split: str) -> list[str]:
        return [e["id"] for e in self.entries if e["split"] == split]

    def recount(self) -> None:
        counts: dict = {}
        for e in self.entries:
            counts[e["split"]] = counts.get(e["split"], 0) + 1
        self.counts = counts


# -- geometry ---------------------------------------------------------------

def _zoom(asset: WatermarkAsset, scale: float, canvas_w: int) -> float:
    return scale * canvas_w / asset.shape[1]


def _half_extents(h: float, w: float, rotation: float):
    t = math.radians(rotation)
    c, s = abs(math.cos(t)), abs(math.sin(t))
    return (c * h + s * w) / 2.0, (s * h + c * w) / 2.0


def footprint_inside(asset: WatermarkAsset, spec: PlacementSpec, canvas) -> bool:
    """Whether the rotated, scaled bounding box of ``asset`` lies inside the canvas."""
    H, W = canvas
    k = _zoom(asset, spec.scale, W)
    hh, hw = _half_extents(k * asset.shape[0], k * asset.shape[1], spec.rotation)
    r, c = spec.center
    tol = 1e-9
    return (r - hh >= -0.5 - tol and r + hh <= H - 0.5 + tol
            and c - hw >= -0.5 - tol and c + hw <= W - 0.5 + tol)


def placement_fit_rate(asset: WatermarkAsset, config: SynthesisConfig, canvas, draws: int = 1000,
                       seed: int = 0) -> float:
    """Fraction of placements drawn like ``sample_placement`` that fit the canvas."""
    H, W = canvas
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(draws):
        spec = PlacementSpec(_uniform(rng, *config.scale_range), _uniform(rng, *config.rotation_range) % 360.0,
                             (_uniform(rng, -0.5, H - 0.5), _uniform(rng, -0.5, W - 0.5)), 0.5)
        hits += footprint_inside(asset, spec, canvas)
    return hits / draws


def transform_asset(asset: WatermarkAsset, spec: PlacementSpec, canvas):
    """Scale, rotate and translate ``asset`` onto a blank canvas.

    Returns ``(w_full, alpha_full)`` where ``alpha_full`` is the warped
    silhouette times ``spec.opacity``.  A single bilinear resampling does
    the whole affine map; colours are resampled premultiplied so the
    logo's background never bleeds into its edges.
    """
    H, W = canvas
    if not footprint_inside(asset, spec, (H, W)):
        raise UsageError(f"placement {spec} does not fit a {H}x{W} canvas")
    h_a, w_a = asset.shape
    k = _zoom(asset, spec.scale, W)
    t = math.radians(spec.rotation)
    cos_t, sin_t = math.cos(t), math.sin(t)

    rr, cc = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij")
    dr = rr - spec.center[0]
    dc = cc - spec.center[1]
    # inverse rotation, then undo the zoom
    src_r = (cos_t * dr + sin_t * dc) / k + (h_a - 1) / 2.0
    src_c = (-sin_t * dr + cos_t * dc) / k + (w_a - 1) / 2.0
    coords = np.stack([src_r, src_c])

    def warp(a):
        return ndimage.map_coordinates(a.astype(np.float64), coords, order=1, mode="constant", cval=0.0)

    a = np.clip(warp(asset.alpha), 0.0, 1.0)
    premult = np.stack([warp(asset.rgb[..., ch] * asset.alpha) for ch in range(3)], axis=-1)
    rgb = np.zeros((H, W, 3))
    inside = a > 1e-12
    rgb[inside] = premult[inside] / a[inside, None]
    a[~inside] = 0.0
    return np.clip(rgb, 0.0, 1.0).astype(np.float32), (spec.opacity * a).astype(np.float32)


def _uniform(rng, lo: float, hi: float, open_interval: bool = False) -> float:
    if lo == hi:
        return lo
    while True:
        v = float(rng.uniform(lo, hi))
        if not open_interval or lo < v < hi:
            return v


def sample_placement(rng: np.random.Generator, config: SynthesisConfig, asset: WatermarkAsset, canvas) -> PlacementSpec:
    """Draw a placement uniformly from the configured ranges, rejecting ones that do not fit."""
    H, W = canvas
    for _ in range(MAX_REJECTIONS):
        scale = _uniform(rng, *config.scale_range)
        rotation = _uniform(rng, *config.rotation_range) % 360.0
        center = (_uniform(rng, -0.5, H - 0.5), _uniform(rng, -0.5, W - 0.5))
        opacity = _uniform(rng, *config.opacity_range, open_interval=True)
        spec = PlacementSpec(scale, rotation, center, opacity)
        if footprint_inside(asset, spec, canvas):
            return spec
    raise ConfigError(
        f"no placement of asset {asset.name!r} fits a {H}x{W} canvas after {MAX_REJECTIONS} draws; "
        "lower scale_range"
    )


def synthesize_sample(host: np.ndarray, asset: WatermarkAsset, spec: PlacementSpec, tau: float = DEFAULT_TAU) -> Sample:
    host = np.asarray(host, dtype=np.float32)
    if host.ndim != 3 or host.shape[-1] != 3:
        raise UsageError(f"host must be (H, W, 3), got {host.shape}")
    w_full, alpha_full = transform_asset(asset, spec, host.shape[:2])
    x = compose(host, w_full, alpha_full)
    return Sample(x, host, w_full, alpha_full, mask_from_alpha(alpha_full, tau), spec)


def quantize_sample(sample: Sample, tau: float = DEFAULT_TAU) -> Sample:
    """The sample as it reads back from 8-bit PNGs.

    Ground-truth layers are quantized first and the watermarked image is
    recomposed from them, so the stored files satisfy the composition
    model to within half a quantization step.
    """
    y = pngio.quantize(sample.y)
    w = pngio.quantize(sample.w)
    alpha = pngio.quantize(sample.alpha)
    x = pngio.quantize(compose(y, w, alpha))
    return Sample(x, y, w, alpha, mask_from_alpha(alpha, tau), sample.meta)


def write_sample(root, split: str, sample_id: str, sample: Sample) -> None:
    root = Path(root) / split
    pngio.write_rgb(root / "watermarked" / f"{sample_id}.png", sample.x)
    pngio.write_rgb(root / "target" / f"{sample_id}.png", sample.y)
    pngio.write_rgb(root / "watermark" / f"{sample_id}.png", sample.w)
    pngio.write_gray(root / "alpha" / f"{sample_id}.png", sample.alpha)
    pngio.write_gray(root / "mask" / f"{sample_id}.png", sample.mask)


def read_sample(root, split: str, sample_id: str) -> Sample:
    root = Path(root) / split
    return Sample(
        pngio.read_rgb(root / "watermarked" / f"{sample_id}.png"),
        pngio.read_rgb(root / "target" / f"{sample_id}.png"),
        pngio.read_rgb(root / "watermark" / f"{sample_id}.png"),
        pngio.read_gray(root / "alpha" / f"{sample_id}.png"),
        pngio.read_gray(root / "mask" / f"{sample_id}.png"),
    )


def sample_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for one sample, so samples can be built in any order."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, index)))


def load_host(path, canvas: int) -> np.ndarray:
    with Image.open(path) as im:
        im = im.convert("RGB")
        if im.size != (canvas, canvas):
            im = im.resize((canvas, canvas), Image.BILINEAR)
        return np.asarray(im, dtype=np.float32) / 255.0


def read_hosts(hosts_dir, canvas: int, skipped: list) -> list:
    hosts = []
    for path in pngio.list_pngs(hosts_dir):
        try:
            hosts.append((path.name, load_host(path, canvas)))
        except (OSError, ValueError) as exc:
            log.warning("skipping unreadable host %s: %s", path, exc)
            skipped.append({"file": str(path.name), "reason": f"unreadable host: {exc}"})
    return hosts


def build_dataset(hosts_dir, assets_dir, config: SynthesisConfig, out_root) -> DatasetManifest:
    """Synthesize a train/test dataset and write it under ``out_root``.

    Hosts are taken in sorted filename order; each contributes
    ``samples_per_host`` samples.  Output is a pure function of the seed,
    the config and the input files.
    """
    config.validate()
    skipped: list = []
    hosts = read_hosts(hosts_dir, config.canvas, skipped)
    assets = load_assets(assets_dir)
    if not hosts:
        raise ConfigError(f"no readable PNG hosts in {hosts_dir}")
    if not assets:
        raise ConfigError(f"no watermark assets in {assets_dir}")

    names = {a.name for a in assets}
    missing = set(config.test_assets) - names
    if missing:
        raise ConfigError(f"test_assets not found in {assets_dir}: {sorted(missing)}")
    train_assets = [a for a in assets if a.name not in config.test_assets]
    test_assets = [a for a in assets if a.name in config.test_assets]
    if config.test_hosts > len(hosts):
        raise ConfigError(f"test_hosts={config.test_hosts} but only {len(hosts)} hosts are readable")
    n_train_hosts = len(hosts) - config.test_hosts
    if n_train_hosts and not train_assets:
        raise ConfigError("every asset is reserved for testing; nothing left for the train split")
    if config.test_hosts and not test_assets:
        raise ConfigError("test_hosts > 0 requires at least one entry in test_assets")

    out_root = Path(out_root)
    canvas = (config.canvas, config.canvas)
    manifest = DatasetManifest(seed=int(config.seed), skipped=skipped, config=config.to_dict())
    index = 0
    for h, (host_name, host) in enumerate(hosts):
        split = "train" if h < n_train_hosts else "test"
        pool = train_assets if split == "train" else test_assets
        for _ in range(config.samples_per_host):
            rng = sample_rng(config.seed, index)
            asset = pool[int(rng.integers(len(pool)))]
            spec = sample_placement(rng, config, asset, canvas)
            sample = quantize_sample(synthesize_sample(host, asset, spec, config.tau), config.tau)
            sample_id = f"{index:06d}"
            write_sample(out_root, split, sample_id, sample)
            manifest.entries.append({
                "id": sample_id,
                "split": split,
                "host": host_name,
                "asset": asset.name,
                "placement": spec.to_dict(),
            })
            index += 1
    manifest.recount()
    manifest.save(out_root)
    return manifest


def load_split(root, splits=("train",), manifest: DatasetManifest | None = None) -> dict:
    """Stack every readable sample of the given splits into float32 arrays.

    Returns a dict with ``ids``, ``x``, ``y``, ``w`` (N, H, W, 3), ``alpha``,
    ``mask`` (N, H, W) and ``skipped`` (ids that failed to load).
    """
    if isinstance(splits, str):
        splits = (splits,)
    manifest = manifest or DatasetManifest.load(root)
    out = {k: [] for k in ("ids", "x", "y", "w", "alpha", "mask")}
    skipped = []
    for entry in manifest.entries:
        if entry["split"] not in splits:
            continue
        try:
            s = read_sample(root, entry["split"], entry["id"])
        except (OSError, ValueError) as exc:
            log.warning("skipping sample %s: %s", entry["id"], exc)
            skipped.append(entry["id"])
            continue
        out["ids"].append(entry["id"])
        for k in ("x", "y", "w", "alpha", "mask"):
            out[k].append(getattr(s, k))
    for k in ("x", "y", "w", "alpha", "mask"):
        out[k] = np.stack(out[k]) if out[k] else np.zeros((0,), np.float32)
    out["skipped"] = skipped
    return out


def dataset_digest(root) -> str:
    """SHA-256 over the manifest and every PNG under ``root``, in sorted path order."""
    root = Path(root)
    h = hashlib.sha256()
    files = sorted(p for p in root.rglob("*") if p.is_file() and (p.suffix == ".png" or p.name == "manifest.json"))
    for p in files:
        h.update(p.relative_to(root).as_posix().encode())
        h.update(b"\0")
        h.update(p.read_bytes())
    return h.hexdigest()

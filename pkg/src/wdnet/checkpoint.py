"""Checkpoint container.

A checkpoint is a safetensors file: an 8-byte little-endian header
length, a JSON header describing every tensor (dtype, shape, byte
offsets), then the raw little-endian tensor data.  All tensors are stored
as float32.  The header's ``__metadata__`` holds one key, ``wdnet``, whose
value is a JSON document with

* ``format``: ``"wdnet-checkpoint"``
* ``format_version``: integer, currently 1
* ``generator``: generator config (``variant``, ``decomp``, ``refine``)
* ``discriminator``: discriminator config, if a discriminator is stored
* ``train``: training counters, config and optimizer hyper-parameters, if any

Tensor names are prefixed ``G.`` (generator), ``D.`` (discriminator),
``optG.`` / ``optD.`` (Adam moment estimates, ``<prefix>.<param index>.<key>``).
"""

from __future__ import annotations

import json
from pathlib import Path

import torch
from safetensors.torch import load_file, save_file
from safetensors import safe_open

from .errors import ConfigError

FORMAT = "wdnet-checkpoint"
FORMAT_VERSION = 1


def save(path, tensors: dict, meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"format": FORMAT, "format_version": FORMAT_VERSION, **meta}
    flat = {k: v.detach().to(torch.float32).contiguous().cpu() for k, v in tensors.items()}
    tmp = path.with_suffix(path.suffix + ".tmp")
    save_file(flat, str(tmp), metadata={"wdnet": json.dumps(meta, sort_keys=True)})
    tmp.replace(path)
    return path


def read_meta(path) -> dict:
    with safe_open(str(path), framework="pt") as f:
        raw = (f.metadata() or {}).get("wdnet")
    if raw is None:
        raise ConfigError(f"{path} is not a wdnet checkpoint")
    meta = json.loads(raw)
    if meta.get("format") != FORMAT or meta.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint format {meta.get('format')!r} v{meta.get('format_version')}")
    return meta


def load(path):
    """Return ``(tensors, meta)``."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint {path} does not exist")
    meta = read_meta(path)
    return load_file(str(path)), meta


def module_tensors(module: torch.nn.Module, prefix: str) -> dict:
    return {f"{prefix}.{k}": v for k, v in module.state_dict().items()}


def load_module(module: torch.nn.Module, tensors: dict, prefix: str) -> None:
    own = module.state_dict()
    sub = {k[len(prefix) + 1:]: v for k, v in tensors.items() if k.startswith(prefix + ".")}
    missing = set(own) - set(sub)
    unexpected = set(sub) - set(own)
    if missing or unexpected:
        raise ConfigError(
            f"checkpoint does not match the model: missing {sorted(missing)[:5]}, unexpected {sorted(unexpected)[:5]}"
        )
    for k, v in sub.items():
        if tuple(v.shape) != tuple(own[k].shape):
            raise ConfigError(f"checkpoint tensor {k} has shape {tuple(v.shape)}, model expects {tuple(own[k].shape)}")
    module.load_state_dict({k: v.to(own[k].dtype) for k, v in sub.items()})


def optimizer_tensors(opt: torch.optim.Optimizer, prefix: str):
    """Flatten an optimizer's per-parameter state into named tensors plus JSON-able extras."""
    sd = opt.state_dict()
    tensors, scalars = {}, {}
    for idx, st in sd["state"].items():
        for key, val in st.items():
            if torch.is_tensor(val) and val.ndim > 0:
                tensors[f"{prefix}.{idx}.{key}"] = val
            else:
                scalars[f"{idx}.{key}"] = float(val)
    return tensors, {"param_groups": sd["param_groups"], "scalars": scalars}


def load_optimizer(opt: torch.optim.Optimizer, tensors: dict, extra: dict, prefix: str) -> None:
    state: dict = {}
    for name, val in tensors.items():
        if not name.startswith(prefix + "."):
            continue
        idx, key = name[len(prefix) + 1:].split(".", 1)
        state.setdefault(int(idx), {})[key] = val.clone()
    for name, val in extra["scalars"].items():
        idx, key = name.split(".", 1)
        state.setdefault(int(idx), {})[key] = torch.tensor(val, dtype=torch.float32)
    opt.load_state_dict({"state": state, "param_groups": extra["param_groups"]})


def save_generator(path, generator, extra: dict | None = None) -> Path:
    meta = {"generator": generator.config_dict(), **(extra or {})}
    return save(path, module_tensors(generator, "G"), meta)


def load_generator(path):
    """Build a generator from a checkpoint; returns ``(generator, meta)``."""
    from .nets import WDNet

    tensors, meta = load(path)
    if "generator" not in meta:
        raise ConfigError(f"{path} holds no generator")
    g = WDNet.from_config(meta["generator"])
    load_module(g, tensors, "G")
    g.eval()
    return g, meta

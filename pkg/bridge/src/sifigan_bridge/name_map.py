"""Mapping between framework parameter names and canonical tensor names.

A NameMap is a plain dict: canonical tensor name -> (kind, key) where kind
is "copy" (take the checkpoint tensor at `key` verbatim) or "fold" (`key`
is a module prefix; combine `<key>.weight_g` and `<key>.weight_v` into one
kernel).  The default map matches this package's torch generator; real
releases with different module trees can ship their own map as JSON.
"""

from __future__ import annotations

import json
from pathlib import Path

from .config import GeneratorConfig
from .errors import ExportError
from .inventory import tensor_inventory

NameMap = dict[str, tuple[str, str]]


def module_prefixes(cfg: GeneratorConfig) -> dict[str, str]:
    """Canonical conv prefix -> torch module path for the bundled generator."""
    m = {
        "source.input_conv": "source_net.input_conv",
        "source.excitation_head": "source_net.output_conv",
        "filter.input_conv": "filter_net.input_conv",
        "filter.output_conv": "filter_net.output_conv",
    }
    for i in range(cfg.n_stages):
        m[f"source.up.{i}"] = f"source_net.upsamples.{i}"
        m[f"source.sine_embed.{i}"] = f"source_net.sine_embeds.{i}"
        for j in range(len(cfg.qp_dilations[i])):
            m[f"source.qp.{i}.{j}.pd"] = f"source_net.blocks.{i}.pd.{j}"
            m[f"source.qp.{i}.{j}.fixed"] = f"source_net.blocks.{i}.fixed.{j}"
        m[f"filter.up.{i}"] = f"filter_net.upsamples.{i}"
        m[f"filter.inject.{i}"] = f"filter_net.injections.{i}"
        for k in range(len(cfg.mrf_kernel_sizes)):
            for j in range(len(cfg.mrf_dilations)):
                m[f"filter.mrf.{i}.{k}.{j}"] = f"filter_net.blocks.{i}.convs.{k}.{j}"
    return m


def build_name_map(cfg: GeneratorConfig, folded: bool = True) -> NameMap:
    """Default map for the bundled generator; folded=False maps plain kernels."""
    nm: NameMap = {}
    for canonical, module in module_prefixes(cfg).items():
        nm[canonical + ".bias"] = ("copy", module + ".bias")
        if folded:
            nm[canonical + ".weight"] = ("fold", module)
        else:
            nm[canonical + ".weight"] = ("copy", module + ".weight")
    return nm


def checkpoint_keys(entry: tuple[str, str]) -> list[str]:
    """Checkpoint keys one map entry consumes."""
    kind, key = entry
    if kind == "copy":
        return [key]
    if kind == "fold":
        return [key + ".weight_g", key + ".weight_v"]
    raise ExportError(f"unknown name-map kind {kind!r}")


def validate_name_map(nm: NameMap, cfg: GeneratorConfig) -> None:
    """The map must cover the config's tensor inventory exactly, and no two
    entries may claim the same checkpoint key."""
    inv = tensor_inventory(cfg)
    missing = sorted(set(inv) - set(nm))
    if missing:
        raise ExportError(f"name map covers no source for {missing[0]} "
                          f"({len(missing)} missing in total)")
    extra = sorted(set(nm) - set(inv))
    if extra:
        raise ExportError(f"name map targets unknown tensor {extra[0]}")
    seen: dict[str, str] = {}
    for canonical, entry in nm.items():
        for key in checkpoint_keys(entry):
            if key in seen:
                raise ExportError(f"checkpoint key {key} claimed by both "
                                  f"{seen[key]} and {canonical}")
            seen[key] = canonical


def load_name_map(path: str | Path) -> NameMap:
    raw = json.loads(Path(path).read_text())
    nm: NameMap = {}
    for canonical, entry in raw.items():
        if not (isinstance(entry, list) and len(entry) == 2):
            raise ExportError(f"{path}: entry for {canonical} must be [kind, key]")
        nm[canonical] = (str(entry[0]), str(entry[1]))
    return nm


def save_name_map(nm: NameMap, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps({k: list(v) for k, v in nm.items()}, indent=2, sort_keys=True) + "\n"
    )

"""Export a training checkpoint to the engine's .sfgw weight format.

Reads a torch checkpoint (a bare state dict, or one nested under the usual
"model"/"generator"/"state_dict" wrappers), folds weight normalization into
plain kernels, renames everything onto the engine's canonical inventory and
writes a .sfgw file.  Strict by design: a checkpoint tensor nobody mapped,
a mapped tensor the checkpoint lacks, or a shape mismatch all abort the
export.  Exporting the same checkpoint twice yields byte-identical files.

CLI: `python -m sifigan_bridge.export --ckpt g.pt --config cfg.json
--out weights.sfgw [--name-map map.json]`.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from .config import GeneratorConfig, load_config
from .errors import BridgeError, ExportError
from .inventory import tensor_inventory
from .name_map import NameMap, build_name_map, checkpoint_keys, load_name_map, validate_name_map
from .sfgw import write_sfgw

log = logging.getLogger("sifigan_bridge.export")

# wrapper keys training loops commonly nest the generator under
_WRAPPERS = ("model", "generator", "state_dict")


def _unwrap_state_dict(obj) -> dict:
    if not isinstance(obj, dict):
        raise ExportError(f"checkpoint root is {type(obj).__name__}, expected a dict")
    for key in _WRAPPERS:
        if isinstance(obj.get(key), dict):
            return _unwrap_state_dict(obj[key])
    return obj


def fold_weight_norm(g: np.ndarray, v: np.ndarray) -> np.ndarray:
    """w = g * v / ||v||, norm per dim-0 row over the remaining axes."""
    v64 = np.asarray(v, np.float64)
    norms = np.sqrt((v64**2).sum(axis=tuple(range(1, v64.ndim)), keepdims=True))
    if np.any(norms == 0.0):
        raise ExportError("weight-norm direction tensor has an all-zero row")
    return (v64 * (np.asarray(g, np.float64) / norms)).astype(np.float32)


def export_checkpoint(
    ckpt_path: str | Path,
    cfg: GeneratorConfig,
    out_path: str | Path,
    name_map: NameMap | None = None,
) -> dict[str, np.ndarray]:
    """Fold, rename, validate and write; returns the canonical tensor dict."""
    state = torch.load(ckpt_path, map_location="cpu", weights_only=True)
    sd = _unwrap_state_dict(state)
    tensors = {k: v for k, v in sd.items() if isinstance(v, torch.Tensor)}
    if not tensors:
        raise ExportError(f"{ckpt_path}: no tensors found")

    nm = name_map if name_map is not None else build_name_map(cfg)
    validate_name_map(nm, cfg)
    inventory = tensor_inventory(cfg)

    out: dict[str, np.ndarray] = {}
    consumed: set[str] = set()
    for canonical, entry in nm.items():
        keys = checkpoint_keys(entry)
        for key in keys:
            if key not in tensors:
                raise ExportError(f"checkpoint is missing {key} (needed for {canonical})")
        kind = entry[0]
        if kind == "copy":
            arr = tensors[keys[0]].detach().cpu().numpy().astype(np.float32)
        else:
            g = tensors[keys[0]].detach().cpu().numpy()
            v = tensors[keys[1]].detach().cpu().numpy()
            arr = fold_weight_norm(g, v)
        if tuple(arr.shape) != inventory[canonical]:
            raise ExportError(
                f"{canonical}: shape {tuple(arr.shape)}, inventory wants {inventory[canonical]}"
            )
        out[canonical] = arr
        consumed.update(keys)

    strays = sorted(set(tensors) - consumed)
    if strays:
        raise ExportError(f"unmapped checkpoint tensor {strays[0]} ({len(strays)} in total)")

    write_sfgw(out, out_path)
    log.info("wrote %d tensors to %s", len(out), out_path)
    return out


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="sifigan-export",
        description="fold and rename a training checkpoint into a .sfgw file",
    )
    parser.add_argument("--ckpt", required=True, help="torch checkpoint path")
    parser.add_argument("--config", required=True, help="generator config JSON")
    parser.add_argument("--out", required=True, help="output .sfgw path")
    parser.add_argument("--name-map", default=None, dest="name_map",
                        help="JSON name map (default: bundled generator layout)")
    args = parser.parse_args(argv)

    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        nm = load_name_map(args.name_map) if args.name_map else None
        tensors = export_checkpoint(args.ckpt, cfg, args.out, name_map=nm)
    except (BridgeError, OSError) as exc:
        print(json.dumps({"command": "export", "error": str(exc)}))
        return 1
    report = {
        "command": "export",
        "out": args.out,
        "tensor_count": len(tensors),
        "param_count": int(sum(a.size for a in tensors.values())),
    }
    print(json.dumps(report))
    return 0


if __name__ == "__main__":
    sys.exit(main())

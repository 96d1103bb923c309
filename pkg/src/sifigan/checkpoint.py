"""Checkpoint (.sfgw) and model-config JSON serialization.

File layout, all little-endian:

    bytes 0..3    magic "SFGW"
    bytes 4..7    format version, u32
    bytes 8..15   manifest length in bytes, u64
    then          manifest: JSON object {"tensors": {name: {"shape": [...],
                  "dtype": "f32le", "offset": N}}} with sorted keys and no
                  whitespace, so identical stores serialize byte-identically
    then          zero padding up to the next 64-byte boundary
    then          payload: raw float32 tensor data

Offsets are relative to the payload start and every tensor begins on a
64-byte boundary.  Loading validates magic, version, manifest bounds, dtype,
offset overlap and payload size before touching tensor bytes.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError, ConfigError
from .model import ModelConfig, WeightStore

MAGIC = b"SFGW"
FORMAT_VERSION = 1
ALIGNMENT = 64
_HEADER = struct.Struct("<4sIQ")


def _align(n: int) -> int:
    return (n + ALIGNMENT - 1) // ALIGNMENT * ALIGNMENT


def save_weights(store: WeightStore, path: str | Path) -> None:
    """Serialize a weight store; identical stores produce identical bytes."""
    names = sorted(store)
    entries = {}
    offset = 0
    for name in names:
        arr = store[name]
        entries[name] = {
            "dtype": "f32le",
            "offset": offset,
            "shape": list(arr.shape),
        }
        offset = _align(offset + arr.nbytes)

    manifest = json.dumps({"tensors": entries}, sort_keys=True, separators=(",", ":")).encode()
    payload_start = _align(_HEADER.size + len(manifest))

    blob = bytearray(payload_start + offset)
    _HEADER.pack_into(blob, 0, MAGIC, FORMAT_VERSION, len(manifest))
    blob[_HEADER.size : _HEADER.size + len(manifest)] = manifest
    for name in names:
        arr = store[name]
        start = payload_start + entries[name]["offset"]
        blob[start : start + arr.nbytes] = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(blob))


def load_weights(path: str | Path, cfg: ModelConfig | None = None) -> WeightStore:
    """Read a .sfgw file; with a config, also enforce its tensor inventory."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise CheckpointError(f"{path}: too short for a checkpoint header")
    magic, version, manifest_len = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    if _HEADER.size + manifest_len > len(blob):
        raise CheckpointError(f"{path}: manifest length {manifest_len} exceeds file size")

    try:
        manifest = json.loads(blob[_HEADER.size : _HEADER.size + manifest_len])
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt manifest: {exc}") from exc
    if not isinstance(manifest, dict) or not isinstance(manifest.get("tensors"), dict):
        raise CheckpointError(f"{path}: manifest missing 'tensors' object")

    payload_start = _align(_HEADER.size + manifest_len)
    payload_size = len(blob) - payload_start
    if payload_size < 0:
        raise CheckpointError(f"{path}: truncated payload (no room after manifest)")

    spans = []
    tensors = {}
    for name, entry in manifest["tensors"].items():
        if not isinstance(entry, dict):
            raise CheckpointError(f"{path}: tensor {name}: manifest entry must be an object")
        if entry.get("dtype") != "f32le":
            raise CheckpointError(f"{path}: tensor {name}: unsupported dtype {entry.get('dtype')!r}")
        shape = entry.get("shape")
        offset = entry.get("offset")
        if (
            not isinstance(shape, list)
            or not all(isinstance(d, int) and d >= 0 for d in shape)
            or not isinstance(offset, int)
            or offset < 0
        ):
            raise CheckpointError(f"{path}: tensor {name}: malformed shape or offset")
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4
        if offset % ALIGNMENT:
            raise CheckpointError(f"{path}: tensor {name}: offset {offset} not {ALIGNMENT}-byte aligned")
        if offset + nbytes > payload_size:
            raise CheckpointError(
                f"{path}: truncated payload for tensor {name} "
                f"(needs {offset + nbytes} bytes, payload has {payload_size})"
            )
        spans.append((offset, offset + nbytes, name))
        start = payload_start + offset
        data = np.frombuffer(blob, dtype="<f4", count=nbytes // 4, offset=start)
        tensors[name] = data.reshape(shape).copy()

    spans.sort()
    for (_, prev_end, prev_name), (start, _, name) in zip(spans, spans[1:]):
        if start < prev_end:
            raise CheckpointError(f"{path}: tensors {prev_name} and {name} overlap")

    store = WeightStore(tensors)
    if cfg is not None:
        store.validate_for(cfg)
    return store


_CONFIG_FIELDS = {f.name for f in dataclasses.fields(ModelConfig)}


def load_config(path: str | Path) -> ModelConfig:
    """Parse a model config JSON file; unknown fields are an error."""
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    unknown = sorted(set(raw) - _CONFIG_FIELDS)
    if unknown:
        raise ConfigError(f"{path}: unknown config field {unknown[0]!r}")
    return ModelConfig(**raw)


def save_config(cfg: ModelConfig, path: str | Path) -> None:
    doc = {}
    for f in dataclasses.fields(ModelConfig):
        value = getattr(cfg, f.name)
        if value is None:
            continue
        doc[f.name] = value
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

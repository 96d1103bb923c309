"""Reader/writer for the engine's .sfgw weight files.

Layout (little-endian): magic "SFGW", u32 version 1, u64 manifest byte
length, then a JSON manifest {"tensors": {name: {"dtype": "f32le",
"offset": N, "shape": [...]}}} with sorted keys and no whitespace, zero
padding to a 64-byte boundary, then raw float32 payload.  Offsets are
payload-relative and 64-byte aligned.  The writer sorts tensors by name so
the same mapping always serializes to the same bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"SFGW"
VERSION = 1
ALIGN = 64
_HEADER = struct.Struct("<4sIQ")


def _aligned(n: int) -> int:
    return (n + ALIGN - 1) // ALIGN * ALIGN


def write_sfgw(tensors: dict[str, np.ndarray], path: str | Path) -> None:
    names = sorted(tensors)
    arrays = {n: np.ascontiguousarray(tensors[n], dtype="<f4") for n in names}
    entries = {}
    offset = 0
    for name in names:
        entries[name] = {"dtype": "f32le", "offset": offset, "shape": list(arrays[name].shape)}
        offset = _aligned(offset + arrays[name].nbytes)
    manifest = json.dumps({"tensors": entries}, sort_keys=True, separators=(",", ":")).encode()
    payload_at = _aligned(_HEADER.size + len(manifest))

    blob = bytearray(payload_at + offset)
    _HEADER.pack_into(blob, 0, MAGIC, VERSION, len(manifest))
    blob[_HEADER.size : _HEADER.size + len(manifest)] = manifest
    for name in names:
        start = payload_at + entries[name]["offset"]
        blob[start : start + arrays[name].nbytes] = arrays[name].tobytes()
    Path(path).write_bytes(bytes(blob))


def read_sfgw(path: str | Path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: shorter than the fixed header")
    magic, version, manifest_len = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if _HEADER.size + manifest_len > len(blob):
        raise FormatError(f"{path}: manifest overruns the file")
    try:
        manifest = json.loads(blob[_HEADER.size : _HEADER.size + manifest_len])
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: corrupt manifest: {exc}") from exc
    if not isinstance(manifest, dict) or not isinstance(manifest.get("tensors"), dict):
        raise FormatError(f"{path}: manifest has no 'tensors' object")

    payload_at = _aligned(_HEADER.size + manifest_len)
    out = {}
    for name, entry in manifest["tensors"].items():
        if entry.get("dtype") != "f32le":
            raise FormatError(f"{path}: {name}: unsupported dtype {entry.get('dtype')!r}")
        shape = tuple(int(d) for d in entry["shape"])
        offset = int(entry["offset"])
        count = int(np.prod(shape, dtype=np.int64))
        start = payload_at + offset
        if offset % ALIGN or start + count * 4 > len(blob):
            raise FormatError(f"{path}: {name}: bad offset {offset}")
        out[name] = (
            np.frombuffer(blob, dtype="<f4", count=count, offset=start).reshape(shape).copy()
        )
    return out

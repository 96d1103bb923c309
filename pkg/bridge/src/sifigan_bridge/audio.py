"""Mono WAV I/O on top of scipy, plus the raw stage-dump format.

The engine writes IEEE float-32 WAVs (and optionally PCM-16); scipy's
wavfile module reads both.  Stage dumps are raw little-endian float32
arrays named `<canonical tap path>.f32` with a sibling shapes.json.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import FormatError


def read_wav(path: str | Path) -> tuple[np.ndarray, int]:
    """Return (float samples in [-1, 1] scale, sample rate)."""
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise FormatError(f"{path}: expected mono audio, got shape {data.shape}")
    if data.dtype == np.int16:
        data = data.astype(np.float32) / 32768.0
    elif data.dtype != np.float32:
        raise FormatError(f"{path}: unsupported sample dtype {data.dtype}")
    return data, int(rate)


def write_wav(samples: np.ndarray, rate: int, path: str | Path) -> None:
    wavfile.write(path, int(rate), np.asarray(samples, dtype=np.float32))


def write_stage_dumps(stages: dict[str, np.ndarray], directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, arr in stages.items():
        np.ascontiguousarray(arr, dtype="<f4").tofile(directory / f"{name}.f32")
    shapes = {name: list(np.asarray(arr).shape) for name, arr in stages.items()}
    (directory / "shapes.json").write_text(json.dumps(shapes, indent=2, sort_keys=True))


def read_stage_dumps(directory: str | Path) -> dict[str, np.ndarray]:
    directory = Path(directory)
    try:
        shapes = json.loads((directory / "shapes.json").read_text())
    except FileNotFoundError:
        raise FormatError(f"{directory}: no shapes.json index") from None
    out = {}
    for name, shape in shapes.items():
        data = np.fromfile(directory / f"{name}.f32", dtype="<f4")
        if data.size != int(np.prod(shape)):
            raise FormatError(f"{directory}: {name}.f32 does not match shape {shape}")
        out[name] = data.reshape(shape)
    return out

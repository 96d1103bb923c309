"""Feature bundle directories: manifest.json plus raw f32 stream files.

Bridge-side copy of the engine's bundle layout so fixtures and the oracle
can produce and consume utterances without engine imports.  Streams are
frame-major little-endian float32; the manifest records name/dims/frames
per stream and the bundle-wide frame shift.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError

STREAMS = ("cf0", "vuv", "mgc", "bap")


@dataclass(frozen=True)
class Utterance:
    cf0: np.ndarray  # (frames,) strictly positive Hz
    vuv: np.ndarray  # (frames,) 0/1
    mgc: np.ndarray  # (frames, dims)
    bap: np.ndarray  # (frames, dims)
    frame_shift_ms: float = 5.0

    @property
    def n_frames(self) -> int:
        return int(self.cf0.shape[0])


def write_bundle(utt: Utterance, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    streams = []
    for name in STREAMS:
        arr = np.asarray(getattr(utt, name), dtype="<f4").reshape(utt.n_frames, -1)
        arr.tofile(directory / f"{name}.f32")
        streams.append(
            {"name": name, "dims": arr.shape[1], "frames": utt.n_frames, "dtype": "f32le"}
        )
    manifest = {"frame_shift_ms": utt.frame_shift_ms, "streams": streams}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_bundle(directory: str | Path) -> Utterance:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
    except FileNotFoundError:
        raise FormatError(f"{directory}: no manifest.json") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{directory}: bad manifest: {exc}") from exc

    entries = {e["name"]: e for e in manifest.get("streams", [])}
    missing = [s for s in STREAMS if s not in entries]
    if missing:
        raise FormatError(f"{directory}: missing streams {missing}")
    arrays = {}
    for name in STREAMS:
        entry = entries[name]
        frames, dims = int(entry["frames"]), int(entry["dims"])
        data = np.fromfile(directory / f"{name}.f32", dtype="<f4")
        if data.size != frames * dims:
            raise FormatError(f"{directory}: {name}.f32 has {data.size} values, "
                              f"manifest says {frames}x{dims}")
        arrays[name] = data.reshape(frames, dims)
    return Utterance(
        cf0=arrays["cf0"][:, 0],
        vuv=arrays["vuv"][:, 0],
        mgc=arrays["mgc"],
        bap=arrays["bap"],
        frame_shift_ms=float(manifest.get("frame_shift_ms", 5.0)),
    )

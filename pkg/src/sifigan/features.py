"""WORLD feature bundles, F0 transformation and WAV audio I/O.

A feature bundle is a directory holding `manifest.json` plus one raw
little-endian float32 file per stream (`<name>.f32`, frame-major).  The
manifest lists each stream's name, dims, frames and dtype together with the
bundle-wide frame shift:

    {"frame_shift_ms": 5.0,
     "streams": [{"name": "cf0", "dims": 1, "frames": 412, "dtype": "f32le"},
                 ...]}

Audio is mono RIFF/WAVE.  Writing uses IEEE float-32 samples (format tag 3,
with fmt extension and fact chunk) so round trips are bit-exact; a PCM-16
mode exists for players that cannot read float WAVs.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, FeatureError
from .excitation import Waveform

log = logging.getLogger("sifigan.features")

REQUIRED_STREAMS = {"cf0": 1, "vuv": 1, "mgc": None, "bap": None}

WAVE_FORMAT_PCM = 1
WAVE_FORMAT_IEEE_FLOAT = 3


@dataclass(frozen=True)
class FeatureSeq:
    """One utterance worth of frame-level WORLD features.

    cf0 is the continuous F0 track in Hz (interpolated through unvoiced
    regions, so strictly positive); vuv is the binary voicing decision.
    mgc and bap are frame-major (frames, dims).
    """

    cf0: np.ndarray
    vuv: np.ndarray
    mgc: np.ndarray
    bap: np.ndarray
    frame_shift_ms: float = 5.0

    def __post_init__(self):
        for name in ("cf0", "vuv"):
            arr = getattr(self, name)
            if arr.ndim != 1:
                raise FeatureError(f"stream {name} must be 1-d, got shape {arr.shape}")
        for name in ("mgc", "bap"):
            arr = getattr(self, name)
            if arr.ndim != 2:
                raise FeatureError(f"stream {name} must be 2-d, got shape {arr.shape}")
        frames = {name: len(getattr(self, name)) for name in ("cf0", "vuv", "mgc", "bap")}
        if len(set(frames.values())) != 1:
            raise FeatureError(f"streams disagree on frame count: {frames}")
        for name in ("cf0", "vuv", "mgc", "bap"):
            if np.isnan(getattr(self, name)).any():
                raise FeatureError(f"stream {name} contains NaN")
        if self.n_frames and float(self.cf0.min()) <= 0.0:
            raise FeatureError("cf0 must be strictly positive (continuous F0)")
        bad = ~np.isin(self.vuv, (0.0, 1.0))
        if bad.any():
            raise FeatureError(f"vuv must be binary, found value {self.vuv[bad][0]}")
        if self.frame_shift_ms <= 0:
            raise FeatureError(f"frame_shift_ms must be positive, got {self.frame_shift_ms}")

    @property
    def n_frames(self) -> int:
        return int(self.cf0.shape[0])

    @property
    def frame_rate(self) -> float:
        return 1000.0 / self.frame_shift_ms

    def stream(self, name: str) -> np.ndarray:
        if name not in ("cf0", "vuv", "mgc", "bap"):
            raise FeatureError(f"unknown stream {name!r}")
        return getattr(self, name)


def _read_stream_file(path: Path, frames: int, dims: int, stream: str) -> np.ndarray:
    if not path.is_file():
        raise FeatureError(f"stream {stream}: missing file {path.name}")
    expected = frames * dims * 4
    actual = path.stat().st_size
    if actual != expected:
        raise FeatureError(
            f"stream {stream}: {path.name} is {actual} bytes, "
            f"expected {frames}x{dims}x4 = {expected}"
        )
    data = np.fromfile(path, dtype="<f4")
    return data.reshape(frames, dims)


def load_feature_bundle(directory: str | Path) -> FeatureSeq:
    """Read a feature bundle directory into a validated FeatureSeq."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.is_file():
        raise FeatureError(f"no manifest.json in {directory}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise FeatureError(f"manifest.json is not valid JSON: {exc}") from exc

    frame_shift = float(manifest.get("frame_shift_ms", 5.0))
    entries = {}
    for entry in manifest.get("streams", []):
        name = entry.get("name")
        if name is None:
            raise FeatureError("manifest stream entry without a name")
        if entry.get("dtype", "f32le") != "f32le":
            raise FeatureError(f"stream {name}: unsupported dtype {entry.get('dtype')!r}")
        entries[name] = (int(entry["frames"]), int(entry["dims"]))

    missing = [name for name in REQUIRED_STREAMS if name not in entries]
    if missing:
        raise FeatureError(f"manifest missing required streams: {', '.join(missing)}")
    extras = sorted(set(entries) - set(REQUIRED_STREAMS))
    if extras:
        log.debug("ignoring extra streams: %s", ", ".join(extras))

    frame_counts = {name: entries[name][0] for name in REQUIRED_STREAMS}
    if len(set(frame_counts.values())) != 1:
        raise FeatureError(f"streams disagree on frame count: {frame_counts}")

    arrays = {}
    for name in REQUIRED_STREAMS:
        frames, dims = entries[name]
        want_dims = REQUIRED_STREAMS[name]
        if want_dims is not None and dims != want_dims:
            raise FeatureError(f"stream {name}: expected {want_dims} dims, manifest says {dims}")
        arrays[name] = _read_stream_file(directory / f"{name}.f32", frames, dims, name)

    return FeatureSeq(
        cf0=arrays["cf0"][:, 0].copy(),
        vuv=arrays["vuv"][:, 0].copy(),
        mgc=arrays["mgc"],
        bap=arrays["bap"],
        frame_shift_ms=frame_shift,
    )


def save_feature_bundle(seq: FeatureSeq, directory: str | Path) -> None:
    """Write a FeatureSeq as a bundle directory (inverse of load)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    streams = []
    for name in REQUIRED_STREAMS:
        arr = seq.stream(name)
        flat = arr.reshape(seq.n_frames, -1).astype("<f4")
        flat.tofile(directory / f"{name}.f32")
        streams.append(
            {"name": name, "dims": flat.shape[1], "frames": seq.n_frames, "dtype": "f32le"}
        )
    manifest = {"frame_shift_ms": seq.frame_shift_ms, "streams": streams}
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )


def transform_f0(seq: FeatureSeq, scale: float) -> FeatureSeq:
    """Multiply the continuous F0 track by `scale`; other streams untouched."""
    if not np.isfinite(scale) or scale <= 0:
        raise ConfigError(f"f0 scale must be a positive finite number, got {scale}")
    if scale == 1.0:
        return seq
    return replace(seq, cf0=(seq.cf0 * np.float32(scale)).astype(np.float32))


def write_wav(
    wav: Waveform,
    path: str | Path,
    *,
    pcm16: bool = False,
    dither_seed: int = 0x5EED,
) -> int:
    """Write a mono WAV file; returns how many samples exceeded [-1, 1].

    Samples are stored as IEEE float-32 (out-of-range values kept verbatim,
    only counted) or, with pcm16, quantized to 16-bit PCM after triangular
    dither and clamping.
    """
    samples = np.ascontiguousarray(wav.samples, dtype="<f4")
    n = samples.shape[0]
    rate = int(wav.sample_rate)
    clipped = int(np.count_nonzero(np.abs(samples) > 1.0))
    if clipped:
        log.warning("%s: %d samples exceed [-1, 1]", path, clipped)

    if pcm16:
        rng = np.random.default_rng(dither_seed)
        # TPDF dither of one LSB peak-to-peak before rounding
        dither = (rng.random(n) - rng.random(n)).astype(np.float64)
        scaled = samples.astype(np.float64) * 32767.0 + dither
        pcm = np.clip(np.rint(scaled), -32768, 32767).astype("<i2")
        payload = pcm.tobytes()
        header = struct.pack(
            "<4sI4s4sIHHIIHH4sI",
            b"RIFF",
            36 + len(payload),
            b"WAVE",
            b"fmt ",
            16,
            WAVE_FORMAT_PCM,
            1,
            rate,
            rate * 2,
            2,
            16,
            b"data",
            len(payload),
        )
    else:
        payload = samples.tobytes()
        header = struct.pack(
            "<4sI4s4sIHHIIHHH4sII4sI",
            b"RIFF",
            50 + len(payload),
            b"WAVE",
            b"fmt ",
            18,
            WAVE_FORMAT_IEEE_FLOAT,
            1,
            rate,
            rate * 4,
            4,
            32,
            0,  # cbSize: zero-length fmt extension
            b"fact",
            4,
            n,
            b"data",
            len(payload),
        )
    Path(path).write_bytes(header + payload)
    return clipped


def read_wav(path: str | Path) -> Waveform:
    """Read a mono float-32 or PCM-16 WAV written by this package."""
    blob = Path(path).read_bytes()
    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise FeatureError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(blob):
        chunk_id = blob[pos : pos + 4]
        (size,) = struct.unpack_from("<I", blob, pos + 4)
        body = blob[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise FeatureError(f"{path}: truncated {chunk_id!r} chunk")
        if chunk_id == b"fmt ":
            fmt = body
        elif chunk_id == b"data":
            data = body
        pos += 8 + size + (size % 2)

    if fmt is None or data is None:
        raise FeatureError(f"{path}: missing fmt or data chunk")
    tag, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if channels != 1:
        raise FeatureError(f"{path}: only mono supported, got {channels} channels")

    if tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        samples = np.frombuffer(data, dtype="<f4").copy()
    elif tag == WAVE_FORMAT_PCM and bits == 16:
        samples = (np.frombuffer(data, dtype="<i2").astype(np.float32) / 32768.0)
    else:
        raise FeatureError(f"{path}: unsupported format tag {tag} with {bits} bits")
    return Waveform(samples=samples, sample_rate=float(rate))

"""Sample-rate sine excitation from a frame-rate continuous-F0 track."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FeatureError

# Default sine parameters (amplitude, voiced noise std, unvoiced std is
# amplitude/3); overridable through the model config.
SINE_AMP = 0.1
SINE_NOISE_STD = 0.003
# Fallback voicing threshold when no v/uv stream is supplied; continuous F0
# never reaches zero, so anything below this is treated as unvoiced.
VOICED_F0_MIN_HZ = 10.0


@dataclass
class Waveform:
    """Mono sample-rate signal."""

    samples: np.ndarray  # float32, shape (n,)
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 1:
            raise FeatureError(f"waveform must be 1-d, got shape {self.samples.shape}")

    @property
    def duration(self) -> float:
        return self.samples.shape[0] / self.sample_rate

    def __len__(self) -> int:
        return int(self.samples.shape[0])


@dataclass
class F0Track:
    """F0 values in Hz at a fixed rate (frame rate or sample rate)."""

    values: np.ndarray  # float32, shape (n,)
    rate: float  # steps per second
    voiced: np.ndarray | None = None  # bool, shape (n,)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 1:
            raise FeatureError(f"f0 track must be 1-d, got shape {self.values.shape}")
        if self.voiced is not None:
            self.voiced = np.asarray(self.voiced, dtype=bool)
            if self.voiced.shape != self.values.shape:
                raise FeatureError("voiced mask length does not match f0 track")

    def __len__(self) -> int:
        return int(self.values.shape[0])


def upsample_f0(track: F0Track, hop: int) -> F0Track:
    """Expand a frame-rate track to hop samples per frame.

    Values are linearly interpolated between frame centers and held flat
    before the first / after the last center.  The voiced mask, when
    present, is upsampled by repetition.
    """
    if hop < 1:
        raise ConfigError(f"hop must be >= 1, got {hop}")
    frames = len(track)
    if frames == 0:
        raise FeatureError("cannot upsample an empty f0 track")
    centers = (np.arange(frames, dtype=np.float64) + 0.5) * hop
    t = np.arange(frames * hop, dtype=np.float64)
    values = np.interp(t, centers, track.values.astype(np.float64))
    voiced = None
    if track.voiced is not None:
        voiced = np.repeat(track.voiced, hop)
    return F0Track(values.astype(np.float32), rate=track.rate * hop, voiced=voiced)


def generate_sine(
    track: F0Track,
    seed: int,
    vuv: np.ndarray | None = None,
    amp: float = SINE_AMP,
    noise_std: float = SINE_NOISE_STD,
) -> Waveform:
    """Sine-plus-noise source signal from a sample-rate F0 track.

    Voiced sample t is amp*sin(phi_t) + N(0, noise_std^2) with the phase
    accumulated as phi_t = 2*pi*sum_{k<t} f_k / rate (64-bit running sum,
    initial phase 0).  Unvoiced samples are N(0, (amp/3)^2).  The seed is
    mandatory: the same seed always yields the bit-identical signal.
    """
    n = len(track)
    if vuv is not None:
        vuv = np.asarray(vuv)
        if vuv.shape != (n,):
            raise ConfigError(
                f"v/uv mask length {vuv.shape} does not match f0 track length {n}"
            )
        voiced = vuv > 0.5
    elif track.voiced is not None:
        voiced = track.voiced
    else:
        voiced = track.values > VOICED_F0_MIN_HZ

    f = track.values.astype(np.float64)
    increments = 2.0 * np.pi * f / float(track.rate)
    phase = np.cumsum(increments) - increments  # exclusive running sum
    sine = np.where(voiced, amp * np.sin(phase), 0.0)

    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(n)
    std = np.where(voiced, noise_std, amp / 3.0)
    samples = (sine + noise * std).astype(np.float32)
    return Waveform(samples, sample_rate=int(round(track.rate)))

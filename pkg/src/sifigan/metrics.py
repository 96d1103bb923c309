"""Signal metrics: STFT/mel projection, spectral losses, LPC residual,
F0 track comparison and the real-time-factor benchmark.

Everything here computes in float64; these are measurements over waveforms,
not part of the bit-deterministic synthesis path.  The mel L1 distance and
the excitation regularization distance share one definition of the log-mel
transform psi: triangular HTK-mel filterbank rows normalized to sum 1,
applied to STFT magnitudes, floored at 1e-5 before the log.
"""

from __future__ import annotations

import math
import platform
import time
from dataclasses import dataclass

import numpy as np

from .errors import MetricError
from .excitation import F0Track, Waveform

LOG_FLOOR = 1e-5
LAMBDA_MEL = 45.0
LAMBDA_REG = 1.0


@dataclass(frozen=True)
class MelConfig:
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float = 12000.0
    fft_size: int = 1024
    hop: int = 120

    def __post_init__(self):
        if self.n_mels < 1 or self.fft_size < 4 or self.hop < 1:
            raise MetricError("n_mels, fft_size and hop must be positive")
        if not 0 <= self.fmin < self.fmax:
            raise MetricError(f"need 0 <= fmin < fmax, got {self.fmin}..{self.fmax}")


@dataclass(frozen=True)
class LpcConfig:
    order: int = 24
    frame_length: int = 600  # 25 ms at 24 kHz
    hop: int = 120

    def __post_init__(self):
        if self.order < 1 or self.frame_length < 2 or self.hop < 1:
            raise MetricError("order, frame_length and hop must be positive")
        if self.order >= self.frame_length:
            raise MetricError("LPC order must be smaller than the frame length")


@dataclass
class Spectrogram:
    magnitude: np.ndarray  # (frames, bins)
    fft_size: int
    hop: int
    sample_rate: float
    window: str = "hann"

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1


def _hann_periodic(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def _frame(x: np.ndarray, length: int, hop: int) -> np.ndarray:
    """(n_frames, length) view-copy; x is zero-padded to cover the tail."""
    if x.shape[0] < length:
        raise MetricError(f"signal length {x.shape[0]} shorter than one {length}-sample window")
    n_frames = 1 + math.ceil((x.shape[0] - length) / hop)
    padded = np.zeros((n_frames - 1) * hop + length, dtype=np.float64)
    padded[: x.shape[0]] = x
    idx = np.arange(length)[None, :] + hop * np.arange(n_frames)[:, None]
    return padded[idx]


def stft(x: Waveform, cfg: MelConfig = MelConfig()) -> Spectrogram:
    """Centered magnitude STFT with a periodic Hann window."""
    samples = np.asarray(x.samples, dtype=np.float64)
    if samples.shape[0] < cfg.fft_size:
        raise MetricError(
            f"signal of {samples.shape[0]} samples is shorter than one "
            f"{cfg.fft_size}-sample window"
        )
    pad = cfg.fft_size // 2
    centered = np.pad(samples, pad, mode="reflect")
    n_frames = 1 + samples.shape[0] // cfg.hop
    idx = np.arange(cfg.fft_size)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    frames = centered[idx] * _hann_periodic(cfg.fft_size)
    magnitude = np.abs(np.fft.rfft(frames, axis=1))
    return Spectrogram(
        magnitude=magnitude,
        fft_size=cfg.fft_size,
        hop=cfg.hop,
        sample_rate=float(x.sample_rate),
    )


def mel_filterbank(cfg: MelConfig, sample_rate: float) -> np.ndarray:
    """(n_mels, bins) triangular filterbank, each row normalized to sum 1."""
    if cfg.fmax > sample_rate / 2:
        raise MetricError(f"fmax {cfg.fmax} exceeds Nyquist {sample_rate / 2}")

    def hz_to_mel(f):
        return 2595.0 * np.log10(1.0 + np.asarray(f, np.float64) / 700.0)

    def mel_to_hz(m):
        return 700.0 * (10.0 ** (np.asarray(m, np.float64) / 2595.0) - 1.0)

    points_hz = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2))
    bin_hz = np.arange(cfg.fft_size // 2 + 1) * sample_rate / cfg.fft_size
    fb = np.zeros((cfg.n_mels, bin_hz.shape[0]), dtype=np.float64)
    for m in range(cfg.n_mels):
        lo, center, hi = points_hz[m : m + 3]
        rising = (bin_hz - lo) / max(center - lo, 1e-12)
        falling = (hi - bin_hz) / max(hi - center, 1e-12)
        fb[m] = np.clip(np.minimum(rising, falling), 0.0, None)
        total = fb[m].sum()
        if total <= 0:
            raise MetricError(
                f"mel bin {m} has no FFT-bin support; raise fft_size or lower n_mels"
            )
        fb[m] /= total
    return fb


def mel_project(spec: Spectrogram, cfg: MelConfig = MelConfig()) -> np.ndarray:
    """Project magnitudes onto the mel basis: (frames, n_mels)."""
    fb = mel_filterbank(cfg, spec.sample_rate)
    if spec.magnitude.shape[1] != fb.shape[1]:
        raise MetricError(
            f"spectrogram has {spec.magnitude.shape[1]} bins, filterbank expects {fb.shape[1]}"
        )
    return spec.magnitude @ fb.T


def _log_mel(x: Waveform, cfg: MelConfig) -> np.ndarray:
    return np.log(np.maximum(mel_project(stft(x, cfg), cfg), LOG_FLOOR))


def mel_l1(a: Waveform, b: Waveform, cfg: MelConfig = MelConfig()) -> float:
    """Mean absolute log-mel difference between two equal-length waveforms."""
    if len(a) != len(b):
        raise MetricError(f"waveform lengths differ: {len(a)} vs {len(b)}")
    if a.sample_rate != b.sample_rate:
        raise MetricError("waveform sample rates differ")
    return float(np.mean(np.abs(_log_mel(a, cfg) - _log_mel(b, cfg))))


def levinson_durbin(r: np.ndarray, order: int) -> tuple[np.ndarray, float]:
    """Solve the Toeplitz normal equations for predictor coefficients.

    Returns (a, err) where a[k-1] weights x[t-k] in the prediction
    x_hat[t] = sum_k a[k-1] x[t-k] and err is the residual power.
    """
    r = np.asarray(r, dtype=np.float64)
    if r.ndim != 1 or r.shape[0] < order + 1:
        raise MetricError(f"need {order + 1} autocorrelation lags, got shape {r.shape}")
    if not np.isfinite(r).all():
        raise MetricError("non-finite autocorrelation")
    a = np.zeros(order, dtype=np.float64)
    err = float(r[0])
    if err == 0.0:
        return a, 0.0
    for m in range(order):
        acc = r[m + 1] - np.dot(a[:m], r[m:0:-1])
        k = acc / err
        a[: m + 1] = np.concatenate([a[:m] - k * a[:m][::-1], [k]])
        err *= 1.0 - k * k
        if err <= 0.0:
            err = 0.0
            break
    return a, err


def lpc_residual(x: Waveform, cfg: LpcConfig = LpcConfig()) -> Waveform:
    """Inverse-filter x frame by frame and overlap-add the residual.

    Each Hann-windowed frame gets its own predictor from Levinson-Durbin;
    the residual e = x - x_hat is overlap-added and divided by the summed
    analysis windows.  Zero-energy frames pass through unchanged.
    """
    samples = np.asarray(x.samples, dtype=np.float64)
    frames = _frame(samples, cfg.frame_length, cfg.hop)
    window = _hann_periodic(cfg.frame_length)
    windowed = frames * window

    out = np.zeros((frames.shape[0] - 1) * cfg.hop + cfg.frame_length, dtype=np.float64)
    wsum = np.zeros_like(out)
    for i, frame in enumerate(windowed):
        r = np.correlate(frame, frame, mode="full")[cfg.frame_length - 1 :][: cfg.order + 1]
        if r[0] == 0.0:
            resid = frame
        else:
            a, _ = levinson_durbin(r, cfg.order)
            pred = np.zeros_like(frame)
            for k in range(1, cfg.order + 1):
                pred[k:] += a[k - 1] * frame[:-k]
            resid = frame - pred
        start = i * cfg.hop
        out[start : start + cfg.frame_length] += resid
        wsum[start : start + cfg.frame_length] += window
    covered = wsum > 1e-8
    out[covered] /= wsum[covered]
    out[~covered] = 0.0
    return Waveform(out[: samples.shape[0]].astype(np.float32), x.sample_rate)


def reg_loss(
    excitation: Waveform,
    reference: Waveform,
    mel_cfg: MelConfig = MelConfig(),
    lpc_cfg: LpcConfig = LpcConfig(),
) -> float:
    """Mean |log psi(S) - log psi(S_hat)| where S comes from the reference's
    LPC residual and S_hat from the excitation."""
    if len(excitation) != len(reference):
        raise MetricError(
            f"waveform lengths differ: {len(excitation)} vs {len(reference)}"
        )
    target = lpc_residual(reference, lpc_cfg)
    return float(np.mean(np.abs(_log_mel(target, mel_cfg) - _log_mel(excitation, mel_cfg))))


def estimate_f0(
    x: Waveform,
    fmin: float = 60.0,
    fmax: float = 1000.0,
    *,
    frame_length: int = 600,
    hop: int = 120,
    clarity_threshold: float = 0.5,
) -> F0Track:
    """Normalized-autocorrelation pitch tracker with parabolic refinement.

    Each frame picks the shortest lag whose normalized autocorrelation is a
    local maximum above the clarity threshold; a periodic signal correlates
    equally well at every multiple of its period, so a global argmax would
    drift down an octave.  Frames with no such peak are unvoiced (f0 = 0).
    """
    rate = float(x.sample_rate)
    if not 0 < fmin < fmax < rate / 2:
        raise MetricError(f"need 0 < fmin < fmax < Nyquist, got {fmin}..{fmax} at {rate} Hz")
    lag_min = max(2, int(math.floor(rate / fmax)))
    lag_max = int(math.ceil(rate / fmin))
    if lag_max >= frame_length - 1:
        raise MetricError(
            f"fmin {fmin} needs lag {lag_max} but frames have only {frame_length} samples"
        )
    frames = _frame(np.asarray(x.samples, np.float64), frame_length, hop)
    frames = frames - frames.mean(axis=1, keepdims=True)
    n = frames.shape[0]
    values = np.zeros(n, dtype=np.float32)
    voiced = np.zeros(n, dtype=bool)
    for i, frame in enumerate(frames):
        energy = np.dot(frame, frame)
        if energy <= 0.0:
            continue
        acf = np.correlate(frame, frame, mode="full")[frame_length - 1 :]
        # normalize each lag by the energies of the two overlapping segments
        csum = np.concatenate([[0.0], np.cumsum(frame * frame)])
        lags = np.arange(lag_min, lag_max + 1)
        head = csum[frame_length - lags] - csum[0]
        tail = csum[frame_length] - csum[lags]
        denom = np.sqrt(head * tail)
        valid = denom > 0
        nacf = np.where(valid, acf[lag_min : lag_max + 1] / np.where(valid, denom, 1.0), 0.0)
        peaks = np.where(
            (nacf[1:-1] > clarity_threshold)
            & (nacf[1:-1] >= nacf[:-2])
            & (nacf[1:-1] >= nacf[2:])
        )[0]
        if peaks.shape[0] == 0:
            continue
        best = int(peaks[0]) + 1
        lag = float(lags[best])
        y0, y1, y2 = nacf[best - 1 : best + 2]
        denom2 = y0 - 2.0 * y1 + y2
        if denom2 != 0.0:
            lag += 0.5 * (y0 - y2) / denom2
        voiced[i] = True
        values[i] = rate / lag
    return F0Track(values=values, rate=rate / hop, voiced=voiced)


def _common_voiced(a: F0Track, b: F0Track) -> np.ndarray:
    if len(a.values) != len(b.values):
        raise MetricError(f"track lengths differ: {len(a.values)} vs {len(b.values)}")
    va = a.voiced if a.voiced is not None else a.values > 0
    vb = b.voiced if b.voiced is not None else b.values > 0
    return np.asarray(va) & np.asarray(vb)


def log_f0_rmse(a: F0Track, b: F0Track) -> float:
    """RMSE of natural-log F0 over frames voiced in both tracks."""
    both = _common_voiced(a, b)
    if not both.any():
        raise MetricError("no frames voiced in both tracks")
    fa = np.asarray(a.values, np.float64)[both]
    fb = np.asarray(b.values, np.float64)[both]
    if (fa <= 0).any() or (fb <= 0).any():
        raise MetricError("voiced frames must carry positive f0")
    diff = np.log(fa) - np.log(fb)
    return float(np.sqrt(np.mean(diff * diff)))


def vuv_error(a: F0Track, b: F0Track) -> float:
    """Percentage of frames whose voicing decisions disagree."""
    if len(a.values) != len(b.values):
        raise MetricError(f"track lengths differ: {len(a.values)} vs {len(b.values)}")
    va = np.asarray(a.voiced if a.voiced is not None else a.values > 0, bool)
    vb = np.asarray(b.voiced if b.voiced is not None else b.values > 0, bool)
    return float(np.mean(va != vb) * 100.0)


def rtf_benchmark(
    weights,
    cfg,
    feature_seqs,
    *,
    seed: int = 0,
    warmup: int = 1,
    threads: int = 1,
) -> dict:
    """Time synthesize() over the given utterances on a pinned thread count.

    Warm-up runs are excluded from the measurement.  Returns a JSON-ready
    report with total synthesis time, audio time, RTF, a per-stage time
    breakdown and the parameter count.
    """
    from threadpoolctl import threadpool_limits

    from .model import count_params, synthesize

    seqs = list(feature_seqs)
    if not seqs:
        raise MetricError("rtf_benchmark needs at least one utterance")
    if threads < 1:
        raise MetricError(f"threads must be >= 1, got {threads}")

    stage_totals: dict[str, float] = {}
    audio_seconds = 0.0
    synthesis_seconds = 0.0
    with threadpool_limits(limits=threads):
        for _ in range(warmup):
            synthesize(seqs[0], 1.0, weights, cfg, seed=seed)
        for seq in seqs:
            stage_times: dict[str, float] = {}
            begin = time.perf_counter()
            result = synthesize(seq, 1.0, weights, cfg, seed=seed, stage_times=stage_times)
            synthesis_seconds += time.perf_counter() - begin
            audio_seconds += result.speech.duration
            for name, value in stage_times.items():
                stage_totals[name] = stage_totals.get(name, 0.0) + value

    return {
        "clips": len(seqs),
        "audio_seconds": audio_seconds,
        "synthesis_seconds": synthesis_seconds,
        "rtf": synthesis_seconds / audio_seconds,
        "stages": stage_totals,
        "param_count": count_params(weights),
        "threads": threads,
        "host": {
            "machine": platform.machine(),
            "python": platform.python_version(),
            "numpy": np.__version__,
            "system": platform.system(),
        },
    }

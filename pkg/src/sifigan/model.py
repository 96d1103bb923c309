"""Source-filter generator: topology, weight naming and forward pass.

The generator has two halves.  The source network turns conditioning
features plus a sine excitation into a source representation and a 1-channel
excitation signal; each of its stages upsamples by one rate, adds a
downsampled sine embedding and refines with a pitch-adaptive residual block
whose dilations follow the per-sample F0.  The filter network upsamples the
conditioning features along the same ladder, injects the source
representation at every resolution and shapes the spectrum with
multi-receptive-field residual stacks before the tanh output head.

All weights live in a flat WeightStore keyed by dotted canonical names
(`source.up.0.weight`, `filter.mrf.2.1.0.bias`, ...).  The exact name/shape
inventory is `required_tensor_shapes(cfg)`; everything else (random init,
checkpoint validation, the exporter in the companion bridge package) derives
from it.
"""

from __future__ import annotations

import hashlib
import logging
import math
import time
from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from .errors import CheckpointError, ConfigError, FeatureError
from .excitation import F0Track, Waveform, generate_sine, upsample_f0
from .features import FeatureSeq, transform_f0
from .kernels import (
    DilationSchedule,
    compute_dilation_schedule,
    conv1d,
    leaky_relu,
    pd_conv1d,
    tanh_act,
    transposed_conv1d,
)

log = logging.getLogger("sifigan.model")

IO_KERNEL_SIZE = 7  # input convs and waveform/excitation heads


def _as_int_tuple(values, name: str) -> tuple[int, ...]:
    try:
        out = tuple(int(v) for v in values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a list of integers") from exc
    if any(v < 1 for v in out):
        raise ConfigError(f"{name} entries must be >= 1, got {out}")
    return out


@dataclass(frozen=True)
class ModelConfig:
    """Static generator topology plus synthesis constants.

    Channel ladders list the width after the input conv followed by the
    width after each upsampling stage, so their length is
    len(upsample_rates) + 1 and each step halves.
    """

    sample_rate: int = 24000
    hop_length: int = 120
    upsample_rates: tuple[int, ...] = (5, 4, 3, 2)
    filter_channels: tuple[int, ...] = (512, 256, 128, 64, 32)
    source_channels: tuple[int, ...] = (256, 128, 64, 32, 16)
    qp_dilations: tuple[tuple[int, ...], ...] = ((1,), (1, 2), (1, 2, 4), (1, 2, 4, 8))
    dense_factors: tuple[float, ...] = (0.5, 1.0, 4.0, 8.0)
    mrf_kernel_sizes: tuple[int, ...] = (3, 5, 7)
    mrf_dilations: tuple[int, ...] = (1, 3, 5)
    injection_mode: str = "downsampled"
    cond_streams: tuple[tuple[str, int], ...] = (("mgc", 40), ("bap", 3))
    cond_mean: tuple[float, ...] | None = None
    cond_scale: tuple[float, ...] | None = None
    sine_amp: float = 0.1
    sine_noise_std: float = 0.003

    def __post_init__(self):
        object.__setattr__(self, "upsample_rates", _as_int_tuple(self.upsample_rates, "upsample_rates"))
        object.__setattr__(self, "filter_channels", _as_int_tuple(self.filter_channels, "filter_channels"))
        object.__setattr__(self, "source_channels", _as_int_tuple(self.source_channels, "source_channels"))
        object.__setattr__(self, "mrf_kernel_sizes", _as_int_tuple(self.mrf_kernel_sizes, "mrf_kernel_sizes"))
        object.__setattr__(self, "mrf_dilations", _as_int_tuple(self.mrf_dilations, "mrf_dilations"))
        object.__setattr__(self, "qp_dilations", tuple(_as_int_tuple(d, "qp_dilations") for d in self.qp_dilations))
        object.__setattr__(self, "dense_factors", tuple(float(a) for a in self.dense_factors))
        object.__setattr__(self, "cond_streams", tuple((str(n), int(d)) for n, d in self.cond_streams))

        if self.sample_rate < 1 or self.hop_length < 1:
            raise ConfigError("sample_rate and hop_length must be positive")
        if math.prod(self.upsample_rates) != self.hop_length:
            raise ConfigError(
                f"upsample rates {self.upsample_rates} multiply to "
                f"{math.prod(self.upsample_rates)}, not hop_length {self.hop_length}"
            )
        if self.sample_rate % self.hop_length != 0:
            raise ConfigError(
                f"hop_length {self.hop_length} must divide sample_rate {self.sample_rate}"
            )
        n = self.n_stages
        for label, ladder in (("filter", self.filter_channels), ("source", self.source_channels)):
            if len(ladder) != n + 1:
                raise ConfigError(
                    f"{label}_channels must list {n + 1} widths for {n} stages, got {len(ladder)}"
                )
            for a, b in zip(ladder, ladder[1:]):
                if a != 2 * b:
                    raise ConfigError(f"{label}_channels must halve per stage, got {ladder}")
        if len(self.qp_dilations) != n:
            raise ConfigError(f"qp_dilations must have {n} stage entries")
        if len(self.dense_factors) != n:
            raise ConfigError(f"dense_factors must have {n} stage entries")
        if any(a <= 0 for a in self.dense_factors):
            raise ConfigError("dense factors must be positive")
        if not self.mrf_kernel_sizes or not self.mrf_dilations:
            raise ConfigError("mrf_kernel_sizes and mrf_dilations must be non-empty")
        if any(k % 2 == 0 for k in self.mrf_kernel_sizes):
            raise ConfigError(f"mrf kernel sizes must be odd, got {self.mrf_kernel_sizes}")
        if self.injection_mode not in ("downsampled", "direct"):
            raise ConfigError(
                f"injection_mode must be 'downsampled' or 'direct', got {self.injection_mode!r}"
            )
        if self.injection_mode == "direct":
            for sc, fc in zip(self.source_channels[1:], self.filter_channels[1:]):
                if sc > fc:
                    raise ConfigError(
                        "direct injection needs source stage widths <= filter widths, "
                        f"got {self.source_channels} vs {self.filter_channels}"
                    )
        if not self.cond_streams:
            raise ConfigError("cond_streams must not be empty")
        for opt in ("cond_mean", "cond_scale"):
            vec = getattr(self, opt)
            if vec is not None:
                vec = tuple(float(v) for v in vec)
                object.__setattr__(self, opt, vec)
                if len(vec) != self.cond_dim:
                    raise ConfigError(f"{opt} must have {self.cond_dim} entries, got {len(vec)}")
        if self.cond_scale is not None and any(s == 0 for s in self.cond_scale):
            raise ConfigError("cond_scale entries must be non-zero")
        if self.sine_amp <= 0 or self.sine_noise_std < 0:
            raise ConfigError("sine_amp must be positive and sine_noise_std non-negative")

    @property
    def n_stages(self) -> int:
        return len(self.upsample_rates)

    @property
    def cond_dim(self) -> int:
        return sum(d for _, d in self.cond_streams)

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.hop_length

    def stage_hop(self, stage: int) -> int:
        """Samples per input frame at the output of stage `stage`."""
        return math.prod(self.upsample_rates[: stage + 1])

    def stage_stride(self, stage: int) -> int:
        """Downsample factor from full rate to the output of stage `stage`."""
        return math.prod(self.upsample_rates[stage + 1 :])

    def stage_rate(self, stage: int) -> float:
        """Sample rate at the output of stage `stage`."""
        return self.sample_rate / self.stage_stride(stage)


class WeightStore(Mapping[str, np.ndarray]):
    """Immutable name -> float32 tensor map for one generator."""

    def __init__(self, tensors: Mapping[str, np.ndarray]):
        converted = {}
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype=np.float32)
            arr.setflags(write=False)
            converted[str(name)] = arr
        self._tensors = converted

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self._tensors[name]
        except KeyError:
            raise CheckpointError(f"missing tensor {name}") from None

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def validate_for(self, cfg: ModelConfig) -> None:
        """Check exact agreement with the config's required inventory."""
        required = required_tensor_shapes(cfg)
        missing = [n for n in required if n not in self._tensors]
        if missing:
            raise CheckpointError(f"missing tensor {missing[0]} ({len(missing)} missing in total)")
        extras = sorted(set(self._tensors) - set(required))
        if extras:
            raise CheckpointError(f"unexpected tensor {extras[0]} ({len(extras)} extra in total)")
        for name, shape in required.items():
            got = self._tensors[name].shape
            if got != shape:
                raise CheckpointError(f"tensor {name} has shape {got}, expected {shape}")


def required_tensor_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Canonical tensor inventory: insertion-ordered name -> shape map.

    Convolution weights are (out, in, kernel); transposed-convolution
    weights are (in, out, kernel); biases are (out,).
    """
    shapes: dict[str, tuple[int, ...]] = {}

    def conv(prefix: str, c_out: int, c_in: int, kernel: int):
        shapes[f"{prefix}.weight"] = (c_out, c_in, kernel)
        shapes[f"{prefix}.bias"] = (c_out,)

    def tconv(prefix: str, c_in: int, c_out: int, kernel: int):
        shapes[f"{prefix}.weight"] = (c_in, c_out, kernel)
        shapes[f"{prefix}.bias"] = (c_out,)

    sc, fc = cfg.source_channels, cfg.filter_channels

    conv("source.input_conv", sc[0], cfg.cond_dim, IO_KERNEL_SIZE)
    for i, rate in enumerate(cfg.upsample_rates):
        stride = cfg.stage_stride(i)
        tconv(f"source.up.{i}", sc[i], sc[i + 1], 2 * rate)
        conv(f"source.sine_embed.{i}", sc[i + 1], 1, 2 * stride + 1)
        for j in range(len(cfg.qp_dilations[i])):
            conv(f"source.qp.{i}.{j}.pd", sc[i + 1], sc[i + 1], 3)
            conv(f"source.qp.{i}.{j}.fixed", sc[i + 1], sc[i + 1], 3)
    conv("source.excitation_head", 1, sc[-1], IO_KERNEL_SIZE)

    conv("filter.input_conv", fc[0], cfg.cond_dim, IO_KERNEL_SIZE)
    for i, rate in enumerate(cfg.upsample_rates):
        stride = cfg.stage_stride(i)
        tconv(f"filter.up.{i}", fc[i], fc[i + 1], 2 * rate)
        conv(f"filter.inject.{i}", fc[i + 1], sc[-1], 2 * stride + 1)
        for k, kernel in enumerate(cfg.mrf_kernel_sizes):
            for j in range(len(cfg.mrf_dilations)):
                conv(f"filter.mrf.{i}.{k}.{j}", fc[i + 1], fc[i + 1], kernel)
    conv("filter.output_conv", 1, fc[-1], IO_KERNEL_SIZE)
    return shapes


def count_params(weights: WeightStore) -> int:
    """Total number of scalar parameters across all tensors."""
    return int(sum(t.size for t in weights.values()))


def init_random_weights(cfg: ModelConfig, seed: int) -> WeightStore:
    """Normal(0, 0.01) weights and zero biases, seeded per tensor name.

    Each tensor gets its own generator keyed by (seed, sha256(name)), so the
    values do not depend on enumeration order.
    """
    tensors = {}
    for name, shape in required_tensor_shapes(cfg).items():
        if name.endswith(".bias"):
            tensors[name] = np.zeros(shape, dtype=np.float32)
        else:
            digest = hashlib.sha256(name.encode()).digest()
            rng = np.random.default_rng([seed, int.from_bytes(digest[:8], "little")])
            tensors[name] = rng.normal(0.0, 0.01, size=shape).astype(np.float32)
    return WeightStore(tensors)


@dataclass(frozen=True)
class ConvWeights:
    weight: np.ndarray
    bias: np.ndarray


@dataclass(frozen=True)
class QPResBlockSpec:
    """Pitch-adaptive residual block: weights for one stage's iterations."""

    channels: int
    dilations: tuple[int, ...]
    dense_factor: float
    adaptive: tuple[ConvWeights, ...]  # 3-tap pitch-dependent convs
    fixed: tuple[ConvWeights, ...]  # kernel-3 follow-up convs

    def __post_init__(self):
        if not (len(self.adaptive) == len(self.fixed) == len(self.dilations)):
            raise ConfigError("one adaptive/fixed weight pair per dilation required")


@dataclass(frozen=True)
class MRFSpec:
    """Multi-receptive-field stack: parallel residual branches, one per kernel."""

    channels: int
    kernel_sizes: tuple[int, ...]
    dilations: tuple[int, ...]
    convs: tuple[tuple[ConvWeights, ...], ...]  # [kernel][dilation]


def _conv_weights(weights: WeightStore, prefix: str) -> ConvWeights:
    return ConvWeights(weights[f"{prefix}.weight"], weights[f"{prefix}.bias"])


def qp_spec(cfg: ModelConfig, weights: WeightStore, stage: int) -> QPResBlockSpec:
    dils = cfg.qp_dilations[stage]
    return QPResBlockSpec(
        channels=cfg.source_channels[stage + 1],
        dilations=dils,
        dense_factor=cfg.dense_factors[stage],
        adaptive=tuple(_conv_weights(weights, f"source.qp.{stage}.{j}.pd") for j in range(len(dils))),
        fixed=tuple(_conv_weights(weights, f"source.qp.{stage}.{j}.fixed") for j in range(len(dils))),
    )


def mrf_spec(cfg: ModelConfig, weights: WeightStore, stage: int) -> MRFSpec:
    convs = tuple(
        tuple(
            _conv_weights(weights, f"filter.mrf.{stage}.{k}.{j}")
            for j in range(len(cfg.mrf_dilations))
        )
        for k in range(len(cfg.mrf_kernel_sizes))
    )
    return MRFSpec(
        channels=cfg.filter_channels[stage + 1],
        kernel_sizes=cfg.mrf_kernel_sizes,
        dilations=cfg.mrf_dilations,
        convs=convs,
    )


def qp_resblock_forward(
    x: np.ndarray, spec: QPResBlockSpec, schedule: DilationSchedule
) -> np.ndarray:
    """Iterate leaky ReLU -> pitch-dependent conv -> leaky ReLU -> fixed conv,
    adding a residual connection after each iteration."""
    if schedule.dilations.shape[0] != x.shape[1]:
        raise ConfigError(
            f"schedule length {schedule.dilations.shape[0]} != feature length {x.shape[1]}"
        )
    for pd_w, fx_w, base in zip(spec.adaptive, spec.fixed, spec.dilations):
        iter_sched = schedule if base == 1 else DilationSchedule(
            dilations=schedule.dilations * base,
            base_dilation=base,
            dense_factor=schedule.dense_factor,
            local_rate=schedule.local_rate,
            n_clamped=schedule.n_clamped,
        )
        h = pd_conv1d(leaky_relu(x), pd_w.weight, pd_w.bias, schedule=iter_sched)
        h = conv1d(leaky_relu(h), fx_w.weight, fx_w.bias, padding="same")
        x = x + h
    return x


def mrf_forward(x: np.ndarray, spec: MRFSpec) -> np.ndarray:
    """Average of per-kernel residual branches; each branch applies its
    dilated convs with a residual add after every conv (no second conv)."""
    acc = None
    for branch, kernel in zip(spec.convs, spec.kernel_sizes):
        b = x
        for cw, dil in zip(branch, spec.dilations):
            b = b + conv1d(leaky_relu(b), cw.weight, cw.bias, dilation=dil, padding="same")
        acc = b if acc is None else acc + b
    return acc / np.float32(len(spec.convs))


@dataclass
class SourceResult:
    excitation: np.ndarray  # (1, frames * hop)
    representation: np.ndarray  # final stage output, full rate
    stage_outputs: list[np.ndarray]  # per-stage QP block outputs


def _stage_schedules(cfg: ModelConfig, track: F0Track) -> list[DilationSchedule]:
    """Base-dilation-1 schedule per stage, at that stage's sample rate."""
    schedules = []
    for i in range(cfg.n_stages):
        stage_track = upsample_f0(track, cfg.stage_hop(i))
        schedules.append(
            compute_dilation_schedule(
                stage_track.values,
                local_rate=stage_track.rate,
                dense_factor=cfg.dense_factors[i],
                base_dilation=1,
            )
        )
    return schedules


def source_forward(
    cond: np.ndarray,
    sine: np.ndarray,
    weights: WeightStore,
    cfg: ModelConfig,
    schedules: list[DilationSchedule],
    taps: dict[str, np.ndarray] | None = None,
) -> SourceResult:
    """Run the source half: cond (cond_dim, frames), sine (1, frames * hop)."""
    frames = cond.shape[1]
    if sine.shape[1] != frames * cfg.hop_length:
        raise ConfigError(
            f"sine length {sine.shape[1]} != frames {frames} x hop {cfg.hop_length}"
        )
    x = conv1d(cond, *_pair(weights, "source.input_conv"), padding="same")
    if taps is not None:
        taps["source.input"] = x.copy()
    stage_outputs = []
    for i, rate in enumerate(cfg.upsample_rates):
        x = transposed_conv1d(
            leaky_relu(x),
            *_pair(weights, f"source.up.{i}"),
            stride=rate,
            padding=rate // 2 + rate % 2,
            output_padding=rate % 2,
        )
        if taps is not None:
            taps[f"source.up.{i}"] = x.copy()
        stride = cfg.stage_stride(i)
        emb = conv1d(
            sine,
            *_pair(weights, f"source.sine_embed.{i}"),
            stride=stride,
            padding=stride,
        )
        x = x + emb
        x = qp_resblock_forward(x, qp_spec(cfg, weights, i), schedules[i])
        stage_outputs.append(x)
        if taps is not None:
            taps[f"source.stage.{i}"] = x.copy()
    excitation = conv1d(leaky_relu(x), *_pair(weights, "source.excitation_head"), padding="same")
    if taps is not None:
        taps["source.excitation"] = excitation.copy()
    return SourceResult(excitation=excitation, representation=x, stage_outputs=stage_outputs)


def filter_forward(
    cond: np.ndarray,
    source: SourceResult,
    weights: WeightStore,
    cfg: ModelConfig,
    taps: dict[str, np.ndarray] | None = None,
) -> np.ndarray:
    """Run the filter half over the same conditioning; returns (1, samples)."""
    x = conv1d(cond, *_pair(weights, "filter.input_conv"), padding="same")
    if taps is not None:
        taps["filter.input"] = x.copy()
    for i, rate in enumerate(cfg.upsample_rates):
        x = transposed_conv1d(
            leaky_relu(x),
            *_pair(weights, f"filter.up.{i}"),
            stride=rate,
            padding=rate // 2 + rate % 2,
            output_padding=rate % 2,
        )
        if taps is not None:
            taps[f"filter.up.{i}"] = x.copy()
        if cfg.injection_mode == "downsampled":
            stride = cfg.stage_stride(i)
            inj = conv1d(
                source.representation,
                *_pair(weights, f"filter.inject.{i}"),
                stride=stride,
                padding=stride,
            )
            x = x + inj
        else:
            stage_out = source.stage_outputs[i]
            if stage_out.shape[1] != x.shape[1]:
                raise ConfigError(
                    f"direct injection length mismatch at stage {i}: "
                    f"{stage_out.shape[1]} vs {x.shape[1]}"
                )
            # narrower source ladders land in the leading channels
            x[: stage_out.shape[0]] += stage_out
        if taps is not None:
            taps[f"filter.inject.{i}"] = x.copy()
        x = mrf_forward(x, mrf_spec(cfg, weights, i))
        if taps is not None:
            taps[f"filter.stage.{i}"] = x.copy()
    x = tanh_act(conv1d(leaky_relu(x), *_pair(weights, "filter.output_conv"), padding="same"))
    if taps is not None:
        taps["filter.output"] = x.copy()
    return x


def _pair(weights: WeightStore, prefix: str):
    return weights[f"{prefix}.weight"], weights[f"{prefix}.bias"]


@dataclass
class SynthesisResult:
    speech: Waveform
    excitation: Waveform
    f0_scale: float
    taps: dict[str, np.ndarray] | None = None


def _build_cond(features: FeatureSeq, cfg: ModelConfig) -> np.ndarray:
    parts = []
    for name, dims in cfg.cond_streams:
        arr = features.stream(name)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.shape[1] != dims:
            raise FeatureError(
                f"stream {name} has {arr.shape[1]} dims, model expects {dims}"
            )
        parts.append(arr.T)
    cond = np.concatenate(parts, axis=0).astype(np.float32)
    if cfg.cond_mean is not None:
        cond = cond - np.asarray(cfg.cond_mean, np.float32)[:, None]
    if cfg.cond_scale is not None:
        cond = cond / np.asarray(cfg.cond_scale, np.float32)[:, None]
    return cond


def synthesize(
    features: FeatureSeq,
    f0_scale: float,
    weights: WeightStore,
    cfg: ModelConfig,
    seed: int,
    collect_taps: bool = False,
    stage_times: dict[str, float] | None = None,
) -> SynthesisResult:
    """Full forward pass: features + scaled F0 -> speech and excitation.

    Deterministic in (features, f0_scale, weights, cfg, seed).  When a dict
    is passed as stage_times, wall-clock seconds per pipeline stage are
    added into it (used by the benchmark; no effect on the output).
    """
    if not np.isfinite(f0_scale) or f0_scale <= 0:
        raise ConfigError(f"f0_scale must be positive and finite, got {f0_scale}")
    if not (0.25 <= f0_scale <= 4.0):
        log.warning("f0_scale %.3g outside the evaluated 0.25..4 range", f0_scale)
    if abs(features.frame_rate - cfg.frame_rate) > 1e-6:
        raise FeatureError(
            f"features at {features.frame_rate:.6g} frames/s but model expects "
            f"{cfg.frame_rate:.6g} (frame shift {features.frame_shift_ms} ms)"
        )

    def tick(label: str, since: float) -> float:
        now = time.perf_counter()
        if stage_times is not None:
            stage_times[label] = stage_times.get(label, 0.0) + (now - since)
        return now

    t = time.perf_counter()
    scaled = transform_f0(features, f0_scale)
    track = F0Track(
        values=scaled.cf0.astype(np.float32),
        rate=cfg.frame_rate,
        voiced=scaled.vuv > 0.5,
    )
    full = upsample_f0(track, cfg.hop_length)
    sine = generate_sine(
        full, seed=seed, amp=cfg.sine_amp, noise_std=cfg.sine_noise_std
    )
    t = tick("excitation", t)

    taps: dict[str, np.ndarray] | None = {} if collect_taps else None
    sine_map = sine.samples[None, :]
    if taps is not None:
        taps["sine"] = sine_map.copy()

    cond = _build_cond(scaled, cfg)
    schedules = _stage_schedules(cfg, track)
    t = tick("schedules", t)
    src = source_forward(cond, sine_map, weights, cfg, schedules, taps)
    t = tick("source_network", t)
    speech = filter_forward(cond, src, weights, cfg, taps)
    tick("filter_network", t)

    return SynthesisResult(
        speech=Waveform(np.ascontiguousarray(speech[0]), float(cfg.sample_rate)),
        excitation=Waveform(np.ascontiguousarray(src.excitation[0]), float(cfg.sample_rate)),
        f0_scale=float(f0_scale),
        taps=taps,
    )

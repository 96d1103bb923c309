"""Independent reference forward pass for the engine's generator.

Everything here is a straight-line float64 numpy rendering of the published
topology: no dispatch tricks, no BLAS-shaped loops, no code shared with the
engine.  When the two implementations disagree beyond float32 accumulation
noise, that disagreement is the finding.

The engine quantizes a few interfaces to float32 (feature files, the
upsampled F0 track, the sine source); the oracle applies the same casts at
the same boundaries, then computes in float64 in between.  Dilation
schedules are integers and must agree exactly, so they are derived from the
float32-quantized track with the same clamp-floor formula.

CLI: `python -m sifigan_bridge.oracle --config cfg.json --weights w.sfgw
--features bundle/ --out oracle.wav --dump-stages dir/`.  Stage dumps use
the engine's canonical tap names so the two dump trees diff directly.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import write_stage_dumps, write_wav
from .bundles import Utterance, read_bundle
from .config import GeneratorConfig, load_config
from .errors import BridgeError, FormatError
from .sfgw import read_sfgw

log = logging.getLogger("sifigan_bridge.oracle")

F0_FLOOR_HZ = 1.0


# ---------------------------------------------------------------- conditioning

def upsample_track(values: np.ndarray, hop: int) -> np.ndarray:
    """Frame-rate values -> hop samples per frame, float32 like the engine.

    Linear interpolation between frame centers (i + 0.5) * hop, held flat
    past the first/last center.
    """
    frames = values.shape[0]
    centers = (np.arange(frames) + 0.5) * hop
    grid = np.arange(frames * hop, dtype=np.float64)
    return np.interp(grid, centers, np.asarray(values, np.float64)).astype(np.float32)


def sine_excitation(
    f0: np.ndarray,
    voiced: np.ndarray,
    rate: float,
    seed: int,
    amp: float,
    noise_std: float,
) -> np.ndarray:
    """Sample-rate sine-plus-noise source, float32.

    Phase is the exclusive float64 running sum of 2*pi*f/rate; voiced noise
    has std `noise_std`, unvoiced samples are pure noise with std amp/3.
    The noise stream is numpy's seeded default generator, which is part of
    the engine's documented determinism contract.
    """
    f64 = np.asarray(f0, np.float64)
    steps = 2.0 * np.pi * f64 / float(rate)
    phase = np.concatenate([[0.0], np.cumsum(steps[:-1])])
    sine = np.where(voiced, amp * np.sin(phase), 0.0)
    noise = np.random.default_rng(seed).standard_normal(f64.shape[0])
    std = np.where(voiced, noise_std, amp / 3.0)
    return (sine + noise * std).astype(np.float32)


def dilation_factors(f0: np.ndarray, rate: float, dense_factor: float) -> np.ndarray:
    """Per-sample dilation multiplier: floor(rate / (f * a)) when > 1, else 1."""
    f = np.maximum(np.asarray(f0, np.float64), F0_FLOOR_HZ)
    period = rate / (f * dense_factor)
    return np.where(period > 1.0, np.floor(period), 1.0).astype(np.int64)


def stage_dilation_factors(cfg: GeneratorConfig, cf0: np.ndarray) -> list[np.ndarray]:
    """Base-1 dilation factors per stage, at each stage's sample rate."""
    out = []
    for i in range(cfg.n_stages):
        hop = cfg.stage_hop(i)
        track = upsample_track(cf0, hop)
        out.append(dilation_factors(track, cfg.frame_rate * hop, cfg.dense_factors[i]))
    return out


def build_cond(utt: Utterance, cfg: GeneratorConfig) -> np.ndarray:
    """Stack conditioning streams to (cond_dim, frames), normalized float32."""
    parts = []
    for name, dims in cfg.cond_streams:
        arr = np.asarray(getattr(utt, name), np.float32)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.shape[1] != dims:
            raise FormatError(f"stream {name}: {arr.shape[1]} dims, config says {dims}")
        parts.append(arr.T)
    cond = np.concatenate(parts, axis=0)
    if cfg.cond_mean is not None:
        cond = cond - np.asarray(cfg.cond_mean, np.float32)[:, None]
    if cfg.cond_scale is not None:
        cond = cond / np.asarray(cfg.cond_scale, np.float32)[:, None]
    return cond


# ------------------------------------------------------------- float64 layers

def leaky(x: np.ndarray, slope: float = 0.1) -> np.ndarray:
    return np.where(x > 0.0, x, slope * x)


def conv(
    x: np.ndarray,
    w: np.ndarray,
    b: np.ndarray | None = None,
    stride: int = 1,
    dilation: int = 1,
    padding: int | None = None,
) -> np.ndarray:
    """Correlation of x (c_in, t) with w (c_out, c_in, k), zero padded.

    padding=None means 'same' (odd kernels, stride 1).  All math float64;
    one einsum over a stacked tap tensor.
    """
    w = np.asarray(w, np.float64)
    c_out, c_in, k = w.shape
    if padding is None:
        padding = dilation * (k - 1) // 2
    t_in = x.shape[1]
    xp = np.zeros((c_in, t_in + 2 * padding))
    xp[:, padding : padding + t_in] = x
    t_out = (t_in + 2 * padding - dilation * (k - 1) - 1) // stride + 1
    span = (t_out - 1) * stride + 1
    taps = np.stack([xp[:, j * dilation : j * dilation + span : stride] for j in range(k)])
    out = np.einsum("oik,kit->ot", w, taps)
    if b is not None:
        out = out + np.asarray(b, np.float64)[:, None]
    return out


def tconv(
    x: np.ndarray,
    w: np.ndarray,
    b: np.ndarray | None,
    stride: int,
    padding: int,
    output_padding: int,
) -> np.ndarray:
    """Fractionally-strided correlation; w is (c_in, c_out, k).

    Scatters w[i, o, j] * x[i, m] onto position m*stride + j - padding.
    """
    w = np.asarray(w, np.float64)
    c_in, c_out, k = w.shape
    t_in = x.shape[1]
    t_out = (t_in - 1) * stride - 2 * padding + k + output_padding
    spread = np.einsum("iok,it->okt", w, np.asarray(x, np.float64))
    full = np.zeros((c_out, (t_in - 1) * stride + k))
    for j in range(k):
        full[:, j : j + (t_in - 1) * stride + 1 : stride] += spread[:, j, :]
    out = full[:, padding : padding + t_out]
    if b is not None:
        out = out + np.asarray(b, np.float64)[:, None]
    return out


def adaptive_conv(
    x: np.ndarray, w: np.ndarray, b: np.ndarray | None, dilations: np.ndarray
) -> np.ndarray:
    """3-tap conv reading x[t - d_t], x[t], x[t + d_t]; out-of-range taps are zero."""
    w = np.asarray(w, np.float64)
    t = x.shape[1]
    pos = np.arange(t)
    left = pos - dilations
    right = pos + dilations
    xl = x[:, np.clip(left, 0, t - 1)] * (left >= 0)
    xr = x[:, np.clip(right, 0, t - 1)] * (right < t)
    out = w[:, :, 0] @ xl + w[:, :, 1] @ x + w[:, :, 2] @ xr
    if b is not None:
        out = out + np.asarray(b, np.float64)[:, None]
    return out


# ------------------------------------------------------------------- forward

@dataclass
class OracleResult:
    speech: np.ndarray  # (n,) float32
    excitation: np.ndarray  # (n,) float32
    stages: dict[str, np.ndarray]  # canonical tap name -> float64 map


def oracle_forward(
    cfg: GeneratorConfig,
    weights: dict[str, np.ndarray],
    features: Utterance,
    sine: np.ndarray,
    schedules: list[np.ndarray],
) -> OracleResult:
    """Run the whole generator once, recording every intermediate map.

    `sine` is the float32 full-rate source signal, `schedules` the base-1
    dilation factor array per stage.
    """
    W = lambda name: np.asarray(weights[name], np.float64)  # noqa: E731
    B = lambda name: np.asarray(weights[name], np.float64)  # noqa: E731

    def wb(prefix):
        return W(prefix + ".weight"), B(prefix + ".bias")

    stages: dict[str, np.ndarray] = {}
    cond = build_cond(features, cfg).astype(np.float64)
    sine_map = np.asarray(sine, np.float64)[None, :]
    stages["sine"] = sine_map

    # source half
    x = conv(cond, *wb("source.input_conv"))
    stages["source.input"] = x
    stage_outputs = []
    for i, rate in enumerate(cfg.upsample_rates):
        x = tconv(
            leaky(x),
            *wb(f"source.up.{i}"),
            stride=rate,
            padding=rate // 2 + rate % 2,
            output_padding=rate % 2,
        )
        stages[f"source.up.{i}"] = x
        stride = cfg.stage_stride(i)
        emb = conv(sine_map, *wb(f"source.sine_embed.{i}"), stride=stride, padding=stride)
        x = x + emb
        for j, base in enumerate(cfg.qp_dilations[i]):
            h = adaptive_conv(
                leaky(x), *wb(f"source.qp.{i}.{j}.pd"), dilations=schedules[i] * base
            )
            h = conv(leaky(h), *wb(f"source.qp.{i}.{j}.fixed"))
            x = x + h
        stages[f"source.stage.{i}"] = x
        stage_outputs.append(x)
    excitation = conv(leaky(x), *wb("source.excitation_head"))
    stages["source.excitation"] = excitation
    representation = x

    # filter half
    x = conv(cond, *wb("filter.input_conv"))
    stages["filter.input"] = x
    for i, rate in enumerate(cfg.upsample_rates):
        x = tconv(
            leaky(x),
            *wb(f"filter.up.{i}"),
            stride=rate,
            padding=rate // 2 + rate % 2,
            output_padding=rate % 2,
        )
        stages[f"filter.up.{i}"] = x
        if cfg.injection_mode == "downsampled":
            stride = cfg.stage_stride(i)
            x = x + conv(
                representation, *wb(f"filter.inject.{i}"), stride=stride, padding=stride
            )
        else:
            head = stage_outputs[i]
            x = np.concatenate([x[: head.shape[0]] + head, x[head.shape[0] :]], axis=0)
        stages[f"filter.inject.{i}"] = x
        acc = None
        for k in range(len(cfg.mrf_kernel_sizes)):
            branch = x
            for j, dil in enumerate(cfg.mrf_dilations):
                branch = branch + conv(
                    leaky(branch), *wb(f"filter.mrf.{i}.{k}.{j}"), dilation=dil
                )
            acc = branch if acc is None else acc + branch
        x = acc / len(cfg.mrf_kernel_sizes)
        stages[f"filter.stage.{i}"] = x
    out = np.tanh(conv(leaky(x), *wb("filter.output_conv")))
    stages["filter.output"] = out

    return OracleResult(
        speech=out[0].astype(np.float32),
        excitation=excitation[0].astype(np.float32),
        stages=stages,
    )


def run_oracle(
    cfg: GeneratorConfig,
    weights: dict[str, np.ndarray],
    utt: Utterance,
    f0_scale: float = 1.0,
    seed: int = 0,
) -> OracleResult:
    """Derive sine and schedules from the features, then run the forward."""
    if f0_scale <= 0:
        raise BridgeError(f"f0_scale must be positive, got {f0_scale}")
    cf0 = (np.asarray(utt.cf0, np.float32) * np.float32(f0_scale)).astype(np.float32)
    voiced = np.asarray(utt.vuv) > 0.5
    full = upsample_track(cf0, cfg.hop_length)
    sine = sine_excitation(
        full,
        np.repeat(voiced, cfg.hop_length),
        rate=float(cfg.sample_rate),
        seed=seed,
        amp=cfg.sine_amp,
        noise_std=cfg.sine_noise_std,
    )
    schedules = stage_dilation_factors(cfg, cf0)
    return oracle_forward(cfg, weights, utt, sine, schedules)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="sifigan-oracle",
        description="reference forward pass over one feature bundle",
    )
    parser.add_argument("--config", required=True)
    parser.add_argument("--weights", required=True, help=".sfgw file")
    parser.add_argument("--features", required=True, help="feature bundle directory")
    parser.add_argument("--out", default=None, help="write the waveform here as WAV")
    parser.add_argument("--excitation-out", default=None, help="write the excitation WAV")
    parser.add_argument("--dump-stages", default=None, metavar="DIR",
                        help="write every intermediate map as raw f32 under DIR")
    parser.add_argument("--f0-scale", type=float, default=1.0, dest="f0_scale")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        weights = read_sfgw(args.weights)
        utt = read_bundle(args.features)
        result = run_oracle(cfg, weights, utt, f0_scale=args.f0_scale, seed=args.seed)
        if args.out:
            write_wav(result.speech, cfg.sample_rate, args.out)
        if args.excitation_out:
            write_wav(result.excitation, cfg.sample_rate, args.excitation_out)
        if args.dump_stages:
            write_stage_dumps(result.stages, args.dump_stages)
    except (BridgeError, OSError, KeyError) as exc:
        print(json.dumps({"command": "oracle", "error": str(exc)}))
        return 1
    report = {
        "command": "oracle",
        "samples": int(result.speech.shape[0]),
        "f0_scale": args.f0_scale,
        "seed": args.seed,
        "out": args.out,
        "dump_stages": args.dump_stages,
    }
    print(json.dumps(report))
    return 0


if __name__ == "__main__":
    sys.exit(main())

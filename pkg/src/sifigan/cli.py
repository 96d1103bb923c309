"""Batch command line: synth / excite / eval / bench / inspect.

JSON goes to stdout, logs to stderr, so the tool composes in pipelines.
`--jobs` parallelizes across utterances only; every utterance runs
single-threaded (BLAS pinned to one thread), so job count changes
wall-clock time but never a single output byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .checkpoint import load_config, load_weights
from .errors import ConfigError, EngineError
from .excitation import Waveform
from .features import load_feature_bundle, read_wav, write_wav
from .metrics import (
    estimate_f0,
    log_f0_rmse,
    lpc_residual,
    mel_l1,
    reg_loss,
    rtf_benchmark,
    vuv_error,
)
from .model import ModelConfig, count_params, synthesize

log = logging.getLogger("sifigan")


@dataclass(frozen=True)
class RunManifest:
    """Everything one batch run needs; built from CLI flags."""

    config_path: Path
    weights_path: Path
    feature_dirs: tuple[Path, ...]
    out_dir: Path
    f0_scale: float = 1.0
    seed: int = 0
    jobs: int = 1
    injection_override: str | None = None
    pcm16: bool = False
    normalize_db: float | None = None
    dump_taps: Path | None = None

    def __post_init__(self):
        if not np.isfinite(self.f0_scale) or self.f0_scale <= 0:
            raise ConfigError(f"f0_scale must be positive, got {self.f0_scale}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        names = [d.name for d in self.feature_dirs]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate utterance names in --features list")


def _load_model(manifest: RunManifest) -> tuple[ModelConfig, object]:
    cfg = load_config(manifest.config_path)
    if manifest.injection_override is not None:
        cfg = dataclasses.replace(cfg, injection_mode=manifest.injection_override)
    store = load_weights(manifest.weights_path, cfg)
    return cfg, store


def _apply_gain(wav: Waveform, target_db: float | None) -> Waveform:
    if target_db is None:
        return wav
    rms = float(np.sqrt(np.mean(np.square(wav.samples, dtype=np.float64))))
    if rms == 0.0:
        log.warning("normalize-db skipped: output is silent")
        return wav
    gain = np.float32(10.0 ** (target_db / 20.0) / rms)
    return Waveform(wav.samples * gain, wav.sample_rate)


def _write_taps(directory: Path, taps: dict) -> None:
    """One raw little-endian float32 file per intermediate feature map,
    named by its dotted path, plus a shapes.json index."""
    directory.mkdir(parents=True, exist_ok=True)
    for name, array in taps.items():
        np.ascontiguousarray(array, dtype="<f4").tofile(directory / f"{name}.f32")
    with open(directory / "shapes.json", "w") as fh:
        json.dump({n: list(a.shape) for n, a in taps.items()}, fh, indent=2, sort_keys=True)


def _run_batch(manifest: RunManifest, *, excitation: bool) -> tuple[dict, int]:
    cfg, store = _load_model(manifest)
    manifest.out_dir.mkdir(parents=True, exist_ok=True)
    if not os.access(manifest.out_dir, os.W_OK):
        raise ConfigError(f"output directory {manifest.out_dir} is not writable")

    def one(bundle_dir: Path) -> dict:
        name = bundle_dir.name
        try:
            feats = load_feature_bundle(bundle_dir)
            result = synthesize(
                feats, manifest.f0_scale, store, cfg, seed=manifest.seed,
                collect_taps=manifest.dump_taps is not None,
            )
            if manifest.dump_taps is not None:
                _write_taps(manifest.dump_taps / name, result.taps)
            wav = result.excitation if excitation else result.speech
            wav = _apply_gain(wav, manifest.normalize_db)
            out_path = manifest.out_dir / f"{name}.wav"
            clipped = write_wav(wav, out_path, pcm16=manifest.pcm16)
            log.info("%s: %d frames -> %s", name, feats.n_frames, out_path)
            return {
                "name": name,
                "status": "ok",
                "wav": str(out_path),
                "frames": feats.n_frames,
                "samples": len(wav),
                "seconds": wav.duration,
                "clipped": clipped,
            }
        except (EngineError, OSError) as exc:
            log.error("%s: %s", name, exc)
            return {"name": name, "status": "error", "error": str(exc)}

    # utterances in parallel, each pinned to one BLAS thread
    with threadpool_limits(limits=1):
        if manifest.jobs == 1:
            records = [one(d) for d in manifest.feature_dirs]
        else:
            with ThreadPoolExecutor(max_workers=manifest.jobs) as pool:
                records = list(pool.map(one, manifest.feature_dirs))

    failed = sum(r["status"] != "ok" for r in records)
    report = {
        "command": "excite" if excitation else "synth",
        "f0_scale": manifest.f0_scale,
        "seed": manifest.seed,
        "injection_mode": cfg.injection_mode,
        "utterances": records,
        "failed": failed,
    }
    return report, 0 if failed == 0 else 1


def _eval_pair(ref_path: Path, gen_path: Path) -> dict:
    try:
        ref = read_wav(ref_path)
        gen = read_wav(gen_path)
        track_ref = estimate_f0(ref)
        track_gen = estimate_f0(gen)
        return {
            "ref": str(ref_path),
            "gen": str(gen_path),
            "status": "ok",
            "mel_l1": mel_l1(gen, ref),
            # compare excitation structure: residual of gen vs residual of ref
            "reg_loss": reg_loss(lpc_residual(gen), ref),
            "log_f0_rmse": log_f0_rmse(track_gen, track_ref),
            "vuv_error": vuv_error(track_gen, track_ref),
        }
    except (EngineError, OSError) as exc:
        log.error("%s vs %s: %s", gen_path, ref_path, exc)
        return {"ref": str(ref_path), "gen": str(gen_path), "status": "error", "error": str(exc)}


METRIC_KEYS = ("mel_l1", "reg_loss", "log_f0_rmse", "vuv_error")


def cmd_eval(ref_paths: list[Path], gen_paths: list[Path]) -> tuple[dict, int]:
    if len(ref_paths) != len(gen_paths):
        raise ConfigError(
            f"--ref and --gen must pair up, got {len(ref_paths)} vs {len(gen_paths)}"
        )
    pairs = [_eval_pair(r, g) for r, g in zip(ref_paths, gen_paths)]
    ok = [p for p in pairs if p["status"] == "ok"]
    report: dict = {"command": "eval", "pairs": pairs, "failed": len(pairs) - len(ok)}
    for key in METRIC_KEYS:
        report[key] = float(np.mean([p[key] for p in ok])) if ok else None
    return report, 0 if report["failed"] == 0 else 1


def cmd_bench(manifest: RunManifest, threads: int) -> tuple[dict, int]:
    cfg, store = _load_model(manifest)
    seqs = [load_feature_bundle(d) for d in manifest.feature_dirs]
    report = rtf_benchmark(store, cfg, seqs, seed=manifest.seed, threads=threads)
    report["command"] = "bench"
    report["injection_mode"] = cfg.injection_mode
    return report, 0


def cmd_inspect(weights_path: Path, config_path: Path | None) -> tuple[dict, int]:
    cfg = load_config(config_path) if config_path is not None else None
    store = load_weights(weights_path, cfg)
    report = {
        "command": "inspect",
        "path": str(weights_path),
        "tensor_count": len(store),
        "param_count": count_params(store),
        "tensors": {name: list(store[name].shape) for name in store},
    }
    if cfg is not None:
        report["matches_config"] = True
    return report, 0


def _manifest_from_args(args: argparse.Namespace) -> RunManifest:
    return RunManifest(
        config_path=Path(args.config),
        weights_path=Path(args.weights),
        feature_dirs=tuple(Path(d) for d in args.features),
        out_dir=Path(getattr(args, "out", ".")),
        f0_scale=getattr(args, "f0_scale", 1.0),
        seed=args.seed,
        jobs=getattr(args, "jobs", 1),
        injection_override=args.injection,
        pcm16=getattr(args, "pcm16", False),
        normalize_db=getattr(args, "normalize_db", None),
        dump_taps=Path(args.dump_taps) if getattr(args, "dump_taps", None) else None,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sifigan",
        description="CPU inference for a source-filter neural vocoder "
        "(acoustic features + F0 scaling -> 24 kHz waveform).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_model_flags(p, with_out=True):
        p.add_argument("--config", required=True, help="model config JSON")
        p.add_argument("--weights", required=True, help=".sfgw weight file")
        p.add_argument(
            "--features",
            required=True,
            nargs="+",
            metavar="DIR",
            help="feature bundle directories, one per utterance",
        )
        p.add_argument("--seed", type=int, default=0, help="noise seed (default 0)")
        p.add_argument(
            "--injection",
            choices=("downsampled", "direct"),
            default=None,
            help="override the config's source-to-filter injection mode",
        )
        if with_out:
            p.add_argument("--out", required=True, help="output directory for WAVs")
            p.add_argument("--f0-scale", type=float, default=1.0, dest="f0_scale")
            p.add_argument("--jobs", type=int, default=1, help="parallel utterances")
            p.add_argument(
                "--pcm16", action="store_true", help="write 16-bit PCM instead of float32"
            )
            p.add_argument(
                "--normalize-db",
                type=float,
                default=None,
                dest="normalize_db",
                metavar="DB",
                help="rescale each output to this RMS level in dBFS (off by default)",
            )
            p.add_argument(
                "--dump-taps",
                default=None,
                dest="dump_taps",
                metavar="DIR",
                help="also write every intermediate feature map as raw float32 "
                "under DIR/<utterance>/ for cross-implementation checks",
            )

    add_model_flags(sub.add_parser("synth", help="synthesize speech WAVs"))
    add_model_flags(sub.add_parser("excite", help="write source-network excitation WAVs"))

    p_eval = sub.add_parser("eval", help="compare generated WAVs against references")
    p_eval.add_argument("--ref", required=True, nargs="+", metavar="WAV")
    p_eval.add_argument("--gen", required=True, nargs="+", metavar="WAV")

    p_bench = sub.add_parser("bench", help="measure the real-time factor")
    add_model_flags(p_bench, with_out=False)
    p_bench.add_argument("--threads", type=int, default=1, help="BLAS thread cap")

    p_inspect = sub.add_parser("inspect", help="summarize a weight file")
    p_inspect.add_argument("--weights", required=True)
    p_inspect.add_argument("--config", default=None, help="validate against this config")

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=os.environ.get("SIFI_LOG", "info").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("synth", "excite"):
            report, code = _run_batch(
                _manifest_from_args(args), excitation=args.command == "excite"
            )
        elif args.command == "eval":
            report, code = cmd_eval(
                [Path(p) for p in args.ref], [Path(p) for p in args.gen]
            )
        elif args.command == "bench":
            report, code = cmd_bench(_manifest_from_args(args), args.threads)
        else:
            report, code = cmd_inspect(
                Path(args.weights), Path(args.config) if args.config else None
            )
    except (EngineError, OSError) as exc:
        log.error("%s", exc)
        print(json.dumps({"command": args.command, "error": str(exc)}, indent=2))
        return 1
    print(json.dumps(report, indent=2))
    return code


if __name__ == "__main__":
    sys.exit(main())

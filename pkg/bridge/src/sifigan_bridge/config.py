"""Generator config JSON, parsed independently of the engine.

The engine documents its config as a flat JSON object; this module reads the
same file into a bridge-local dataclass so exporter and oracle never import
engine code.  Only the checks needed to derive the tensor inventory and the
per-stage geometry are repeated here; the engine remains the authority on
full validation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import FormatError


@dataclass(frozen=True)
class GeneratorConfig:
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
        freeze = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        freeze("upsample_rates", tuple(int(r) for r in self.upsample_rates))
        freeze("filter_channels", tuple(int(c) for c in self.filter_channels))
        freeze("source_channels", tuple(int(c) for c in self.source_channels))
        freeze("qp_dilations", tuple(tuple(int(d) for d in ds) for ds in self.qp_dilations))
        freeze("dense_factors", tuple(float(a) for a in self.dense_factors))
        freeze("mrf_kernel_sizes", tuple(int(k) for k in self.mrf_kernel_sizes))
        freeze("mrf_dilations", tuple(int(d) for d in self.mrf_dilations))
        freeze("cond_streams", tuple((str(n), int(d)) for n, d in self.cond_streams))
        for opt in ("cond_mean", "cond_scale"):
            if getattr(self, opt) is not None:
                freeze(opt, tuple(float(v) for v in getattr(self, opt)))

        if math.prod(self.upsample_rates) != self.hop_length:
            raise FormatError(
                f"upsample_rates {self.upsample_rates} do not multiply to "
                f"hop_length {self.hop_length}"
            )
        n = self.n_stages
        if len(self.filter_channels) != n + 1 or len(self.source_channels) != n + 1:
            raise FormatError("channel ladders must list n_stages + 1 widths")
        if len(self.qp_dilations) != n or len(self.dense_factors) != n:
            raise FormatError("qp_dilations and dense_factors must have one entry per stage")
        if self.injection_mode not in ("downsampled", "direct"):
            raise FormatError(f"unknown injection_mode {self.injection_mode!r}")

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
        """Output samples per input frame after stage `stage`."""
        return math.prod(self.upsample_rates[: stage + 1])

    def stage_stride(self, stage: int) -> int:
        """Full-rate samples per sample at the output of stage `stage`."""
        return math.prod(self.upsample_rates[stage + 1 :])


_FIELDS = {f.name for f in fields(GeneratorConfig)}


def load_config(path: str | Path) -> GeneratorConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise FormatError(f"{path}: config must be a JSON object")
    unknown = sorted(set(raw) - _FIELDS)
    if unknown:
        raise FormatError(f"{path}: unknown config field {unknown[0]!r}")
    return GeneratorConfig(**raw)


def save_config(cfg: GeneratorConfig, path: str | Path) -> None:
    """Write a config JSON the engine accepts (used by fixtures and demos)."""
    doc = {}
    for f in fields(GeneratorConfig):
        value = getattr(cfg, f.name)
        if value is not None:
            doc[f.name] = value
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

"""The engine's canonical tensor inventory, re-derived from a config.

Names follow the engine's dotted scheme (`source.up.0.weight`,
`filter.mrf.2.1.0.bias`, ...).  Convolution weights are (out, in, kernel),
transposed ones (in, out, kernel), biases (out,).  Input convolutions and
the two output heads use kernel 7; sine-embedding and injection downsamplers
use kernel 2*stride + 1.
"""

from __future__ import annotations

import math

from .config import GeneratorConfig

IO_KERNEL = 7


def tensor_inventory(cfg: GeneratorConfig) -> dict[str, tuple[int, ...]]:
    """Insertion-ordered canonical name -> shape map for one generator."""
    inv: dict[str, tuple[int, ...]] = {}

    def add(prefix: str, weight_shape: tuple[int, ...], bias_dim: int):
        inv[f"{prefix}.weight"] = weight_shape
        inv[f"{prefix}.bias"] = (bias_dim,)

    sc, fc = cfg.source_channels, cfg.filter_channels

    add("source.input_conv", (sc[0], cfg.cond_dim, IO_KERNEL), sc[0])
    for i, rate in enumerate(cfg.upsample_rates):
        stride = cfg.stage_stride(i)
        add(f"source.up.{i}", (sc[i], sc[i + 1], 2 * rate), sc[i + 1])
        add(f"source.sine_embed.{i}", (sc[i + 1], 1, 2 * stride + 1), sc[i + 1])
        for j in range(len(cfg.qp_dilations[i])):
            add(f"source.qp.{i}.{j}.pd", (sc[i + 1], sc[i + 1], 3), sc[i + 1])
            add(f"source.qp.{i}.{j}.fixed", (sc[i + 1], sc[i + 1], 3), sc[i + 1])
    add("source.excitation_head", (1, sc[-1], IO_KERNEL), 1)

    add("filter.input_conv", (fc[0], cfg.cond_dim, IO_KERNEL), fc[0])
    for i, rate in enumerate(cfg.upsample_rates):
        stride = cfg.stage_stride(i)
        add(f"filter.up.{i}", (fc[i], fc[i + 1], 2 * rate), fc[i + 1])
        add(f"filter.inject.{i}", (fc[i + 1], sc[-1], 2 * stride + 1), fc[i + 1])
        for k, kernel in enumerate(cfg.mrf_kernel_sizes):
            for j in range(len(cfg.mrf_dilations)):
                add(f"filter.mrf.{i}.{k}.{j}", (fc[i + 1], fc[i + 1], kernel), fc[i + 1])
    add("filter.output_conv", (1, fc[-1], IO_KERNEL), 1)
    return inv


def param_count(cfg: GeneratorConfig) -> int:
    return sum(math.prod(shape) for shape in tensor_inventory(cfg).values())


# Intermediate feature maps the engine can dump (`--dump-taps`) and the
# oracle reproduces, in forward order.  Divergence reports follow this order.
def tap_order(cfg: GeneratorConfig) -> list[str]:
    names = ["sine", "source.input"]
    for i in range(cfg.n_stages):
        names += [f"source.up.{i}", f"source.stage.{i}"]
    names += ["source.excitation", "filter.input"]
    for i in range(cfg.n_stages):
        names += [f"filter.up.{i}", f"filter.inject.{i}", f"filter.stage.{i}"]
    names.append("filter.output")
    return names

"""Torch twin of the engine's generator, in training parameterization.

Every convolution carries weight normalization (the g/v split used during
GAN training), so a state dict from here looks like a real training
checkpoint: `source_net.upsamples.0.weight_g`, `...weight_v`, `...bias`.
The exporter folds those pairs back into plain kernels.

The forward pass mirrors the engine's published topology exactly; it exists
to check exported checkpoints against their framework-side behaviour, not
for speed.  Batch size is expected to be 1.
"""

from __future__ import annotations

import warnings

import numpy as np
import torch
from torch import nn

from . import oracle
from .bundles import Utterance
from .config import GeneratorConfig
from .inventory import tensor_inventory
from .name_map import build_name_map, module_prefixes

IO_KERNEL = 7


class AdaptiveConv1d(nn.Module):
    """3-tap convolution with a per-sample dilation schedule.

    Side taps are gathered at t - d_t and t + d_t and zeroed outside the
    signal, matching the engine's pitch-dependent convolution.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(channels, channels, 3))
        self.bias = nn.Parameter(torch.zeros(channels))
        nn.init.kaiming_uniform_(self.weight, a=5**0.5)

    def forward(self, x: torch.Tensor, dilations: torch.Tensor) -> torch.Tensor:
        t = x.shape[-1]
        pos = torch.arange(t, device=x.device)
        left = pos - dilations
        right = pos + dilations
        xl = x[:, :, left.clamp(0, t - 1)] * (left >= 0).to(x.dtype)
        xr = x[:, :, right.clamp(0, t - 1)] * (right < t).to(x.dtype)
        w = self.weight
        out = torch.einsum("oi,bit->bot", w[:, :, 0], xl)
        out = out + torch.einsum("oi,bit->bot", w[:, :, 1], x)
        out = out + torch.einsum("oi,bit->bot", w[:, :, 2], xr)
        return out + self.bias.view(1, -1, 1)


class QPResBlock(nn.Module):
    """leaky -> adaptive conv -> leaky -> fixed conv, residual add per unit."""

    def __init__(self, channels: int, dilations: tuple[int, ...]):
        super().__init__()
        self.base_dilations = tuple(dilations)
        self.pd = nn.ModuleList(AdaptiveConv1d(channels) for _ in dilations)
        self.fixed = nn.ModuleList(
            nn.Conv1d(channels, channels, 3, padding=1) for _ in dilations
        )
        self.act = nn.LeakyReLU(0.1)

    def forward(self, x: torch.Tensor, factors: torch.Tensor) -> torch.Tensor:
        for base, pd, fixed in zip(self.base_dilations, self.pd, self.fixed):
            h = pd(self.act(x), factors * base)
            h = fixed(self.act(h))
            x = x + h
        return x


class MRFBlock(nn.Module):
    """Parallel residual branches (one kernel size each), averaged."""

    def __init__(self, channels: int, kernel_sizes, dilations):
        super().__init__()
        self.convs = nn.ModuleList(
            nn.ModuleList(
                nn.Conv1d(channels, channels, k, dilation=d, padding=d * (k - 1) // 2)
                for d in dilations
            )
            for k in kernel_sizes
        )
        self.act = nn.LeakyReLU(0.1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        acc = None
        for branch in self.convs:
            b = x
            for conv in branch:
                b = b + conv(self.act(b))
            acc = b if acc is None else acc + b
        return acc / len(self.convs)


def _upsample(c_in: int, c_out: int, rate: int) -> nn.ConvTranspose1d:
    return nn.ConvTranspose1d(
        c_in,
        c_out,
        2 * rate,
        stride=rate,
        padding=rate // 2 + rate % 2,
        output_padding=rate % 2,
    )


class SourceNetwork(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        sc = cfg.source_channels
        self.input_conv = nn.Conv1d(cfg.cond_dim, sc[0], IO_KERNEL, padding=3)
        self.upsamples = nn.ModuleList()
        self.sine_embeds = nn.ModuleList()
        self.blocks = nn.ModuleList()
        for i, rate in enumerate(cfg.upsample_rates):
            stride = cfg.stage_stride(i)
            self.upsamples.append(_upsample(sc[i], sc[i + 1], rate))
            self.sine_embeds.append(
                nn.Conv1d(1, sc[i + 1], 2 * stride + 1, stride=stride, padding=stride)
            )
            self.blocks.append(QPResBlock(sc[i + 1], cfg.qp_dilations[i]))
        self.output_conv = nn.Conv1d(sc[-1], 1, IO_KERNEL, padding=3)
        self.act = nn.LeakyReLU(0.1)

    def forward(self, cond, sine, schedules):
        x = self.input_conv(cond)
        heads = []
        for up, embed, block, factors in zip(
            self.upsamples, self.sine_embeds, self.blocks, schedules
        ):
            x = up(self.act(x))
            x = x + embed(sine)
            x = block(x, factors)
            heads.append(x)
        excitation = self.output_conv(self.act(x))
        return excitation, x, heads


class FilterNetwork(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        fc, sc = cfg.filter_channels, cfg.source_channels
        self.injection_mode = cfg.injection_mode
        self.input_conv = nn.Conv1d(cfg.cond_dim, fc[0], IO_KERNEL, padding=3)
        self.upsamples = nn.ModuleList()
        self.injections = nn.ModuleList()
        self.blocks = nn.ModuleList()
        for i, rate in enumerate(cfg.upsample_rates):
            stride = cfg.stage_stride(i)
            self.upsamples.append(_upsample(fc[i], fc[i + 1], rate))
            self.injections.append(
                nn.Conv1d(sc[-1], fc[i + 1], 2 * stride + 1, stride=stride, padding=stride)
            )
            self.blocks.append(MRFBlock(fc[i + 1], cfg.mrf_kernel_sizes, cfg.mrf_dilations))
        self.output_conv = nn.Conv1d(fc[-1], 1, IO_KERNEL, padding=3)
        self.act = nn.LeakyReLU(0.1)

    def forward(self, cond, representation, heads):
        x = self.input_conv(cond)
        for i, (up, inject, block) in enumerate(
            zip(self.upsamples, self.injections, self.blocks)
        ):
            x = up(self.act(x))
            if self.injection_mode == "downsampled":
                x = x + inject(representation)
            else:
                head = heads[i]
                c = head.shape[1]
                x = torch.cat([x[:, :c] + head, x[:, c:]], dim=1)
            x = block(x)
        return torch.tanh(self.output_conv(self.act(x)))


class SiFiGANGenerator(nn.Module):
    """Full generator; forward(cond, sine, schedules) -> (speech, excitation)."""

    def __init__(self, cfg: GeneratorConfig, use_weight_norm: bool = True):
        super().__init__()
        self.cfg = cfg
        self.source_net = SourceNetwork(cfg)
        self.filter_net = FilterNetwork(cfg)
        if use_weight_norm:
            self.apply(_apply_weight_norm)

    def forward(self, cond, sine, schedules):
        excitation, representation, heads = self.source_net(cond, sine, schedules)
        speech = self.filter_net(cond, representation, heads)
        return speech, excitation


def _apply_weight_norm(module: nn.Module) -> None:
    if isinstance(module, (nn.Conv1d, nn.ConvTranspose1d, AdaptiveConv1d)):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            nn.utils.weight_norm(module)


def prepare_inputs(
    cfg: GeneratorConfig, utt: Utterance, f0_scale: float = 1.0, seed: int = 0
):
    """Build (cond, sine, schedules) tensors the same way the engine does."""
    cf0 = (np.asarray(utt.cf0, np.float32) * np.float32(f0_scale)).astype(np.float32)
    voiced = np.asarray(utt.vuv) > 0.5
    full = oracle.upsample_track(cf0, cfg.hop_length)
    sine = oracle.sine_excitation(
        full,
        np.repeat(voiced, cfg.hop_length),
        rate=float(cfg.sample_rate),
        seed=seed,
        amp=cfg.sine_amp,
        noise_std=cfg.sine_noise_std,
    )
    cond = torch.from_numpy(oracle.build_cond(utt, cfg)).unsqueeze(0)
    sine_t = torch.from_numpy(sine).view(1, 1, -1)
    schedules = [torch.from_numpy(f) for f in oracle.stage_dilation_factors(cfg, cf0)]
    return cond, sine_t, schedules


def load_folded(model: SiFiGANGenerator, tensors: dict[str, np.ndarray]) -> None:
    """Load canonical (already folded) tensors into a weight-norm-free model."""
    nm = build_name_map(model.cfg, folded=False)
    state = {
        key: torch.from_numpy(np.ascontiguousarray(tensors[canonical]))
        for canonical, (_, key) in nm.items()
    }
    model.load_state_dict(state, strict=True)


def sine_passthrough_state_dict(cfg: GeneratorConfig) -> dict[str, torch.Tensor]:
    """Handcrafted weight-normed checkpoint that routes the sine source
    straight to both outputs.

    All kernels are zero except four center taps: the last stage's sine
    embedding, the last injection, and the two output heads.  The residual
    blocks then act as identities and the generator emits
    tanh(leaky(sine)), a fully pitch-controllable waveform.  Zero kernels
    are stored as (g=0, unit direction) so folding is exact.
    """
    targets = {n: np.zeros(s, np.float32) for n, s in tensor_inventory(cfg).items()}
    last = cfg.n_stages - 1
    center = cfg.stage_stride(last)  # kernel 2*stride+1
    targets[f"source.sine_embed.{last}.weight"][0, 0, center] = 1.0
    targets[f"filter.inject.{last}.weight"][0, 0, center] = 1.0
    targets["source.excitation_head.weight"][0, 0, IO_KERNEL // 2] = 1.0
    targets["filter.output_conv.weight"][0, 0, IO_KERNEL // 2] = 1.0

    state: dict[str, torch.Tensor] = {}
    for canonical, module in module_prefixes(cfg).items():
        w = targets[canonical + ".weight"]
        flat = w.reshape(w.shape[0], -1)
        norms = np.sqrt((flat.astype(np.float64) ** 2).sum(axis=1))
        v = w.copy()
        g = norms.astype(np.float32)
        for row in np.flatnonzero(norms == 0.0):
            v[row].flat[0] = 1.0  # unit direction, zero magnitude
        state[module + ".weight_v"] = torch.from_numpy(v)
        state[module + ".weight_g"] = torch.from_numpy(g.reshape(-1, 1, 1))
        state[module + ".bias"] = torch.zeros(targets[canonical + ".bias"].shape[0])
    return state

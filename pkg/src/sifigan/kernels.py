"""Pure 1-D convolution kernels and activations.

Feature maps are float32 arrays of shape (channels, length): channel-major
rows of contiguous time samples.  All kernels here are pure functions over
immutable inputs with no hidden state, so they are reentrant and safe to
call from any number of threads.

Determinism contract: accumulation runs with a fixed kernel-tap outer order
(per tap, a single BLAS matrix product over input channels), so identical
inputs always produce bit-identical outputs.  A constant dilation schedule
makes the pitch-dependent convolution dispatch to the plain dilated one,
keeping the two bit-equal; the time-varying path gathers taps per sample,
sums in float64 and rounds once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

# Continuous-F0 values below this are clamped before the period-length
# division to keep dilation sizes finite.
F0_FLOOR_HZ = 1.0


@dataclass(frozen=True)
class ConvSpec:
    """Static description of a standard 1-D convolution layer."""

    in_channels: int
    out_channels: int
    kernel_size: int
    stride: int = 1
    dilation: int = 1
    padding: int | str = "same"

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be odd and positive, got {self.kernel_size}")
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")
        if self.dilation < 1:
            raise ConfigError(f"dilation must be >= 1, got {self.dilation}")
        if self.padding == "same" and self.stride != 1:
            raise ConfigError("'same' padding is only defined for stride 1")

    @property
    def weight_shape(self) -> tuple[int, int, int]:
        return (self.out_channels, self.in_channels, self.kernel_size)


@dataclass
class DilationSchedule:
    """Per-sample dilation sizes derived from an F0 track.

    For each time step, the period length proportion E = rate / (f0 * dense)
    selects the dilation: floor(E) * base when E > 1, otherwise just base.
    Taps that a large dilation pushes outside the signal read zeros.
    """

    dilations: np.ndarray  # int64, one per time step
    base_dilation: int
    dense_factor: float
    local_rate: float
    n_clamped: int = 0  # f0 samples raised to F0_FLOOR_HZ

    def __len__(self) -> int:
        return int(self.dilations.shape[0])


def _check_feature_map(x: np.ndarray, name: str) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 2:
        raise ConfigError(f"{name}: expected (channels, length) input, got shape {x.shape}")
    if x.dtype != np.float32:
        x = x.astype(np.float32)
    return x


def _check_weight(weight: np.ndarray, bias: np.ndarray | None, name: str):
    weight = np.asarray(weight)
    if weight.ndim != 3:
        raise ConfigError(f"{name}: weight must be 3-d, got shape {weight.shape}")
    if weight.dtype != np.float32:
        weight = weight.astype(np.float32)
    if bias is not None:
        bias = np.asarray(bias, dtype=np.float32)
        if bias.ndim != 1:
            raise ConfigError(f"{name}: bias must be 1-d, got shape {bias.shape}")
    return weight, bias


def conv1d(
    x: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray | None = None,
    *,
    stride: int = 1,
    dilation: int = 1,
    padding: int | str = "same",
    name: str = "conv1d",
) -> np.ndarray:
    """Cross-correlate x (channels, length) with weight (out, in, kernel).

    Padding is symmetric zero padding: an explicit count, or "same" to keep
    the output length equal to the input length (odd kernels, stride 1).
    Output length is (length + 2*pad - dilation*(kernel-1) - 1)//stride + 1.
    """
    x = _check_feature_map(x, name)
    weight, bias = _check_weight(weight, bias, name)
    c_out, c_in, kernel = weight.shape
    if x.shape[0] != c_in:
        raise ConfigError(
            f"{name}: input has {x.shape[0]} channels but weight expects {c_in}"
        )
    if bias is not None and bias.shape[0] != c_out:
        raise ConfigError(f"{name}: bias has {bias.shape[0]} entries, expected {c_out}")
    if stride < 1:
        raise ConfigError(f"{name}: stride must be >= 1, got {stride}")
    if dilation < 1:
        raise ConfigError(f"{name}: dilation must be >= 1, got {dilation}")
    if padding == "same":
        if stride != 1:
            raise ConfigError(f"{name}: 'same' padding requires stride 1")
        if kernel % 2 == 0:
            raise ConfigError(f"{name}: 'same' padding requires an odd kernel")
        pad = dilation * (kernel - 1) // 2
    else:
        pad = int(padding)
        if pad < 0:
            raise ConfigError(f"{name}: negative padding {pad}")

    length = x.shape[1]
    span = dilation * (kernel - 1) + 1
    t_out = (length + 2 * pad - span) // stride + 1
    if t_out < 1:
        raise ConfigError(
            f"{name}: input of length {length} too short for kernel span {span} "
            f"with padding {pad}"
        )

    if pad > 0:
        xp = np.zeros((c_in, length + 2 * pad), dtype=np.float32)
        xp[:, pad : pad + length] = x
    else:
        xp = x

    # per-tap weight slices are contiguous so matmul stays on the BLAS path
    w_taps = np.ascontiguousarray(weight.transpose(2, 0, 1))
    out = np.empty((c_out, t_out), dtype=np.float32)
    for tap in range(kernel):
        start = tap * dilation
        stop = start + (t_out - 1) * stride + 1
        window = xp[:, start:stop:stride]
        if stride != 1:
            window = np.ascontiguousarray(window)
        if tap == 0:
            np.matmul(w_taps[0], window, out=out)
        else:
            out += w_taps[tap] @ window
    if bias is not None:
        out += bias[:, None]
    return out


def transposed_conv1d(
    x: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray | None = None,
    *,
    stride: int,
    padding: int = 0,
    output_padding: int = 0,
    name: str = "transposed_conv1d",
) -> np.ndarray:
    """Fractionally-strided convolution; weight is (in, out, kernel).

    out[o, m*stride - padding + k] += sum_i w[i, o, k] * x[i, m].
    With kernel = 2*stride, padding = ceil(stride/2) and output_padding =
    stride % 2 the output length is exactly stride * input length.
    """
    x = _check_feature_map(x, name)
    weight, bias = _check_weight(weight, bias, name)
    c_in, c_out, kernel = weight.shape
    if x.shape[0] != c_in:
        raise ConfigError(
            f"{name}: input has {x.shape[0]} channels but weight expects {c_in}"
        )
    if stride < 1:
        raise ConfigError(f"{name}: stride must be positive, got {stride}")
    if padding < 0 or output_padding < 0:
        raise ConfigError(f"{name}: negative padding")
    if bias is not None and bias.shape[0] != c_out:
        raise ConfigError(f"{name}: bias has {bias.shape[0]} entries, expected {c_out}")

    t_in = x.shape[1]
    t_out = (t_in - 1) * stride - 2 * padding + kernel + output_padding
    if t_out < 1:
        raise ConfigError(f"{name}: output would be empty (input length {t_in})")

    w_taps = np.ascontiguousarray(weight.transpose(2, 1, 0))  # (k, out, in)
    out = np.zeros((c_out, t_out), dtype=np.float32)
    for tap in range(kernel):
        lo = tap - padding
        # valid input positions m with 0 <= lo + m*stride < t_out
        m0 = 0 if lo >= 0 else (-lo + stride - 1) // stride
        m1 = min(t_in - 1, (t_out - 1 - lo) // stride)
        if m1 < m0:
            continue
        contribution = w_taps[tap] @ x[:, m0 : m1 + 1]
        first = lo + m0 * stride
        out[:, first : lo + m1 * stride + 1 : stride] += contribution
    if bias is not None:
        out += bias[:, None]
    return out


def compute_dilation_schedule(
    f0: np.ndarray,
    local_rate: float,
    dense_factor: float,
    base_dilation: int,
) -> DilationSchedule:
    """Derive per-sample dilation sizes from a per-sample F0 track (Hz).

    f0 is clamped to F0_FLOOR_HZ first; the number of clamped samples is
    recorded on the returned schedule.
    """
    if local_rate <= 0 or dense_factor <= 0:
        raise ConfigError("local_rate and dense_factor must be positive")
    if base_dilation < 1:
        raise ConfigError(f"base_dilation must be >= 1, got {base_dilation}")
    f0 = np.asarray(f0, dtype=np.float64)
    if f0.ndim != 1:
        raise ConfigError(f"f0 track must be 1-d, got shape {f0.shape}")

    n_clamped = int(np.count_nonzero(f0 < F0_FLOOR_HZ))
    f = np.maximum(f0, F0_FLOOR_HZ)
    periods = local_rate / (f * dense_factor)
    factor = np.where(periods > 1.0, np.floor(periods), 1.0).astype(np.int64)
    return DilationSchedule(
        dilations=factor * base_dilation,
        base_dilation=base_dilation,
        dense_factor=dense_factor,
        local_rate=local_rate,
        n_clamped=n_clamped,
    )


def pd_conv1d(
    x: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray | None = None,
    *,
    schedule: DilationSchedule,
    name: str = "pd_conv1d",
) -> np.ndarray:
    """3-tap convolution whose dilation varies per time step.

    Output sample t reads x[t - d_t], x[t], x[t + d_t] (zero padded outside
    the signal).  A constant schedule degenerates to conv1d with that
    dilation and is dispatched there, so both paths share one summation
    order and agree bit-for-bit.
    """
    x = _check_feature_map(x, name)
    weight, bias = _check_weight(weight, bias, name)
    c_out, c_in, kernel = weight.shape
    if kernel != 3:
        raise ConfigError(f"{name}: pitch-dependent convs use kernel 3, got {kernel}")
    if x.shape[0] != c_in:
        raise ConfigError(
            f"{name}: input has {x.shape[0]} channels but weight expects {c_in}"
        )
    dil = schedule.dilations
    length = x.shape[1]
    if dil.shape[0] != length:
        raise ConfigError(
            f"{name}: schedule length {dil.shape[0]} != input length {length}"
        )
    if length == 0:
        return np.zeros((c_out, 0), dtype=np.float32)

    d0 = int(dil[0])
    if np.all(dil == d0):
        return conv1d(x, weight, bias, dilation=d0, padding="same", name=name)

    # Side taps outside the signal read a dedicated zero column, so very
    # large dilations (clamped low F0) cost no padding memory.  This path
    # accumulates in float64 and rounds once at the end.
    xz = np.concatenate(
        [np.zeros((c_in, 1), np.float64), x.astype(np.float64)], axis=1
    )
    t = np.arange(length, dtype=np.int64)
    idx_left = t - dil + 1
    idx_left[idx_left < 1] = 0
    idx_right = t + dil + 1
    idx_right[idx_right > length] = 0
    w64 = np.ascontiguousarray(weight.transpose(2, 0, 1).astype(np.float64))
    out = np.matmul(w64[0], xz[:, idx_left])
    out += w64[1] @ xz[:, 1:]
    out += w64[2] @ xz[:, idx_right]
    if bias is not None:
        out += bias.astype(np.float64)[:, None]
    return out.astype(np.float32)


def leaky_relu(x: np.ndarray, slope: float = 0.1) -> np.ndarray:
    """Elementwise max(x, slope*x) for slope in (0, 1)."""
    if not 0.0 < slope < 1.0:
        raise ConfigError(f"leaky_relu slope must be in (0, 1), got {slope}")
    x = np.asarray(x, dtype=np.float32)
    return np.where(x > 0, x, x * np.float32(slope))


def tanh_act(x: np.ndarray) -> np.ndarray:
    """Elementwise tanh; output lies in [-1, 1]."""
    return np.tanh(np.asarray(x, dtype=np.float32))

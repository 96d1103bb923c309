import numpy as np
import pytest

from sifigan.errors import ConfigError
from oracles import conv1d_reference, pd_conv1d_reference

from sifigan.kernels import (
    ConvSpec,
    compute_dilation_schedule,
    conv1d,
    leaky_relu,
    pd_conv1d,
    tanh_act,
    transposed_conv1d,
)


class TestConv1d:
    def test_identity_kernel(self):
        x = np.array([[1.0, 2.0, 3.0]], dtype=np.float32)
        w = np.array([[[0.0, 1.0, 0.0]]], dtype=np.float32)
        out = conv1d(x, w, np.zeros(1, np.float32))
        np.testing.assert_array_equal(out, x)

    def test_hand_sum_no_pad(self):
        x = np.array([[1.0, 2.0, 3.0, 4.0]], dtype=np.float32)
        w = np.ones((1, 1, 2), dtype=np.float32)
        out = conv1d(x, w, padding=0)
        np.testing.assert_array_equal(out, [[3.0, 5.0, 7.0]])

    @pytest.mark.parametrize("stride,dilation,pad", [(1, 1, 1), (1, 2, 2), (2, 1, 3), (3, 2, 0)])
    def test_matches_triple_loop(self, stride, dilation, pad):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((4, 64)).astype(np.float32)
        w = rng.standard_normal((5, 4, 3)).astype(np.float32)
        b = rng.standard_normal(5).astype(np.float32)
        got = conv1d(x, w, b, stride=stride, dilation=dilation, padding=pad)
        want = conv1d_reference(x, w, b, stride=stride, dilation=dilation, pad=pad)
        assert got.shape == want.shape
        np.testing.assert_allclose(got, want, atol=1e-6)

    def test_same_padding_preserves_length(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((3, 50)).astype(np.float32)
        for kernel, dilation in [(3, 1), (5, 1), (7, 1), (3, 4)]:
            w = rng.standard_normal((2, 3, kernel)).astype(np.float32)
            assert conv1d(x, w, dilation=dilation).shape == (2, 50)

    def test_linearity(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((4, 40)).astype(np.float32)
        y = rng.standard_normal((4, 40)).astype(np.float32)
        w = rng.standard_normal((4, 4, 5)).astype(np.float32)
        alpha = np.float32(3.5)
        np.testing.assert_allclose(
            conv1d(alpha * x, w), alpha * conv1d(x, w), rtol=1e-6, atol=1e-6
        )
        np.testing.assert_allclose(
            conv1d(x + y, w), conv1d(x, w) + conv1d(y, w), rtol=1e-5, atol=1e-6
        )

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((8, 200)).astype(np.float32)
        w = rng.standard_normal((8, 8, 7)).astype(np.float32)
        a = conv1d(x, w)
        b = conv1d(x, w)
        np.testing.assert_array_equal(a, b)

    def test_channel_mismatch_names_layer(self):
        x = np.zeros((3, 10), np.float32)
        w = np.zeros((2, 4, 3), np.float32)
        with pytest.raises(ConfigError, match="filter.up.0"):
            conv1d(x, w, name="filter.up.0")

    def test_bad_arguments(self):
        x = np.zeros((1, 10), np.float32)
        w = np.zeros((1, 1, 3), np.float32)
        with pytest.raises(ConfigError):
            conv1d(x, w, stride=0, padding=0)
        with pytest.raises(ConfigError):
            conv1d(x, np.zeros((1, 1, 4), np.float32), padding="same")
        with pytest.raises(ConfigError):
            conv1d(np.zeros((1, 2), np.float32), np.zeros((1, 1, 5), np.float32), padding=0)


class TestTransposedConv1d:
    def test_length_contract_rate5(self):
        x = np.zeros((2, 7), np.float32)
        w = np.zeros((2, 3, 10), np.float32)
        out = transposed_conv1d(x, w, stride=5, padding=3, output_padding=1)
        assert out.shape == (3, 35)

    def test_hand_expansion(self):
        x = np.array([[1.0]], dtype=np.float32)
        w = np.ones((1, 1, 4), dtype=np.float32)
        out = transposed_conv1d(x, w, stride=2, padding=1)
        np.testing.assert_array_equal(out, [[1.0, 1.0]])

    @pytest.mark.parametrize("stride", [2, 3, 4, 5])
    def test_matches_zero_stuffing_oracle(self, stride):
        rng = np.random.default_rng(stride)
        kernel = 2 * stride
        padding = stride // 2 + stride % 2
        output_padding = stride % 2
        x = rng.standard_normal((3, 11)).astype(np.float32)
        w = rng.standard_normal((3, 2, kernel)).astype(np.float32)
        b = rng.standard_normal(2).astype(np.float32)
        got = transposed_conv1d(
            x, w, b, stride=stride, padding=padding, output_padding=output_padding
        )
        # oracle: insert stride-1 zeros, flip taps, run a plain convolution
        stuffed = np.zeros((3, (x.shape[1] - 1) * stride + 1 + output_padding), np.float32)
        stuffed[:, ::stride][:, : x.shape[1]] = x
        w_flip = np.ascontiguousarray(w[:, :, ::-1].transpose(1, 0, 2))
        want = conv1d(stuffed, w_flip, b, padding=kernel - 1 - padding)
        assert got.shape == want.shape
        np.testing.assert_allclose(got, want, atol=1e-6)

    def test_upsample_chain_times_120(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((4, 9)).astype(np.float32)
        for stride in (5, 4, 3, 2):
            w = rng.standard_normal((x.shape[0], 4, 2 * stride)).astype(np.float32)
            x = transposed_conv1d(
                x, w, stride=stride, padding=stride // 2 + stride % 2,
                output_padding=stride % 2,
            )
        assert x.shape[1] == 9 * 120

    def test_rejects_nonpositive_stride(self):
        with pytest.raises(ConfigError, match="stride"):
            transposed_conv1d(
                np.zeros((1, 4), np.float32), np.zeros((1, 1, 2), np.float32), stride=0
            )


class TestDilationSchedule:
    def test_direct_arithmetic(self):
        sched = compute_dilation_schedule(
            np.full(8, 100.0), local_rate=24000, dense_factor=4, base_dilation=1
        )
        assert np.all(sched.dilations == 60)

    def test_else_branch_keeps_base(self):
        sched = compute_dilation_schedule(
            np.full(8, 12000.0), local_rate=24000, dense_factor=4, base_dilation=2
        )
        assert np.all(sched.dilations == 2)

    def test_sweep_matches_scalar_recomputation(self):
        f0 = np.linspace(100.0, 200.0, 512)
        sched = compute_dilation_schedule(f0, local_rate=24000, dense_factor=4, base_dilation=2)
        import math

        for t, f in enumerate(f0):
            e = 24000 / (max(f, 1.0) * 4)
            want = (math.floor(e) if e > 1 else 1) * 2
            assert sched.dilations[t] == want
        # doubling f0 halves (floored) the dilation, so the sweep is non-increasing
        assert np.all(np.diff(sched.dilations) <= 0)
        assert sched.dilations[0] == 2 * sched.dilations[-1]

    def test_clamp_counts_low_f0(self):
        f0 = np.array([0.0, 0.5, 100.0, 200.0])
        sched = compute_dilation_schedule(f0, local_rate=24000, dense_factor=4, base_dilation=1)
        assert sched.n_clamped == 2
        # clamped entries behave as 1 Hz
        assert sched.dilations[0] == 24000 // 4
        assert sched.dilations[2] == 60
        assert sched.dilations[3] == 30


class TestPdConv1d:
    def test_constant_schedule_equals_dilated_conv_bitwise(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((6, 80)).astype(np.float32)
        w = rng.standard_normal((6, 6, 3)).astype(np.float32)
        b = rng.standard_normal(6).astype(np.float32)
        sched = compute_dilation_schedule(
            np.full(80, 150.0), local_rate=24000, dense_factor=4, base_dilation=1
        )
        d = int(sched.dilations[0])
        got = pd_conv1d(x, w, b, schedule=sched)
        want = conv1d(x, w, b, dilation=d, padding="same")
        np.testing.assert_array_equal(got, want)

    def test_center_tap_identity(self):
        rng = np.random.default_rng(12)
        x = rng.standard_normal((2, 50)).astype(np.float32)
        w = np.zeros((2, 2, 3), np.float32)
        w[0, 0, 1] = 1.0
        w[1, 1, 1] = 1.0
        f0 = rng.uniform(80, 400, 50)
        sched = compute_dilation_schedule(f0, local_rate=24000, dense_factor=4, base_dilation=1)
        np.testing.assert_array_equal(pd_conv1d(x, w, schedule=sched), x)

    def test_time_varying_matches_gather_oracle(self):
        rng = np.random.default_rng(13)
        x = rng.standard_normal((4, 120)).astype(np.float32)
        w = rng.standard_normal((3, 4, 3)).astype(np.float32)
        b = rng.standard_normal(3).astype(np.float32)
        f0 = rng.uniform(60, 500, 120)
        sched = compute_dilation_schedule(f0, local_rate=24000, dense_factor=4, base_dilation=2)
        assert len(np.unique(sched.dilations)) > 1
        got = pd_conv1d(x, w, b, schedule=sched)
        want = pd_conv1d_reference(x, w, b, sched.dilations)
        np.testing.assert_allclose(got, want, atol=1e-6)

    def test_schedule_length_mismatch(self):
        sched = compute_dilation_schedule(
            np.full(10, 100.0), local_rate=24000, dense_factor=4, base_dilation=1
        )
        with pytest.raises(ConfigError, match="schedule length"):
            pd_conv1d(np.zeros((1, 12), np.float32), np.zeros((1, 1, 3), np.float32), schedule=sched)

    def test_rejects_wide_kernels(self):
        sched = compute_dilation_schedule(
            np.full(10, 100.0), local_rate=24000, dense_factor=4, base_dilation=1
        )
        with pytest.raises(ConfigError, match="kernel 3"):
            pd_conv1d(np.zeros((1, 10), np.float32), np.zeros((1, 1, 5), np.float32), schedule=sched)


class TestActivations:
    def test_leaky_relu_values(self):
        out = leaky_relu(np.array([-1.0, 0.0, 2.0], np.float32), 0.1)
        np.testing.assert_allclose(out, [-0.1, 0.0, 2.0], atol=1e-7)

    def test_leaky_relu_identity_on_nonnegative(self):
        x = np.abs(np.random.default_rng(5).standard_normal(100).astype(np.float32))
        np.testing.assert_array_equal(leaky_relu(x), x)

    def test_leaky_relu_rejects_bad_slope(self):
        for slope in (0.0, 1.0, -0.5):
            with pytest.raises(ConfigError):
                leaky_relu(np.zeros(3, np.float32), slope)

    def test_tanh(self):
        assert tanh_act(np.zeros(1, np.float32))[0] == 0.0
        out = tanh_act(np.array([-50.0, 50.0], np.float32))
        assert np.all(out >= -1.0) and np.all(out <= 1.0)


class TestConvSpec:
    def test_rejects_even_kernel(self):
        with pytest.raises(ConfigError):
            ConvSpec(4, 4, kernel_size=4)

    def test_weight_shape(self):
        spec = ConvSpec(3, 8, kernel_size=5)
        assert spec.weight_shape == (8, 3, 5)

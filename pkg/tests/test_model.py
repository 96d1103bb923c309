import numpy as np
import pytest

from oracles import conv1d_reference, leaky_reference, mrf_reference

from sifigan.errors import CheckpointError, ConfigError, FeatureError
from sifigan.features import FeatureSeq
from sifigan.kernels import compute_dilation_schedule, conv1d, leaky_relu
from sifigan.model import (
    ModelConfig,
    WeightStore,
    count_params,
    filter_forward,
    init_random_weights,
    mrf_forward,
    mrf_spec,
    qp_resblock_forward,
    qp_spec,
    required_tensor_shapes,
    source_forward,
    synthesize,
)

SMALL = dict(
    filter_channels=(32, 16, 8, 4, 2),
    source_channels=(16, 8, 4, 2, 1),
)


def small_config(**overrides):
    return ModelConfig(**{**SMALL, **overrides})


def make_features(frames: int, f0_hz: float = 150.0, seed: int = 0) -> FeatureSeq:
    rng = np.random.default_rng(seed)
    return FeatureSeq(
        cf0=np.full(frames, f0_hz, np.float32),
        vuv=np.ones(frames, np.float32),
        mgc=rng.standard_normal((frames, 40)).astype(np.float32),
        bap=rng.standard_normal((frames, 3)).astype(np.float32),
    )


class TestModelConfig:
    def test_defaults_validate(self):
        cfg = ModelConfig()
        assert cfg.hop_length == 120
        assert cfg.cond_dim == 43
        assert cfg.frame_rate == 200.0
        assert cfg.n_stages == 4

    def test_rate_product_must_equal_hop(self):
        with pytest.raises(ConfigError, match="hop_length"):
            ModelConfig(upsample_rates=(5, 4, 3, 2), hop_length=100)

    def test_ladder_must_halve(self):
        with pytest.raises(ConfigError, match="halve"):
            ModelConfig(filter_channels=(512, 256, 130, 64, 32))

    def test_ladder_length_checked(self):
        with pytest.raises(ConfigError, match="widths"):
            ModelConfig(filter_channels=(512, 256, 128, 64))

    def test_unknown_injection_mode(self):
        with pytest.raises(ConfigError, match="injection_mode"):
            ModelConfig(injection_mode="bypass")

    def test_direct_requires_narrower_source(self):
        with pytest.raises(ConfigError, match="direct injection"):
            ModelConfig(
                injection_mode="direct",
                source_channels=(1024, 512, 256, 128, 64),
            )

    def test_stage_geometry(self):
        cfg = ModelConfig()
        assert [cfg.stage_hop(i) for i in range(4)] == [5, 20, 60, 120]
        assert [cfg.stage_stride(i) for i in range(4)] == [24, 6, 2, 1]
        assert [cfg.stage_rate(i) for i in range(4)] == [1000, 4000, 12000, 24000]

    def test_cond_stats_length_checked(self):
        with pytest.raises(ConfigError, match="cond_mean"):
            ModelConfig(cond_mean=(0.0,) * 10)


class TestTensorInventory:
    def test_spot_shapes_default(self):
        shapes = required_tensor_shapes(ModelConfig())
        assert shapes["source.input_conv.weight"] == (256, 43, 7)
        assert shapes["source.up.0.weight"] == (256, 128, 10)
        assert shapes["source.sine_embed.0.weight"] == (128, 1, 49)
        assert shapes["source.sine_embed.3.weight"] == (16, 1, 3)
        assert shapes["source.qp.3.3.pd.weight"] == (16, 16, 3)
        assert shapes["source.excitation_head.weight"] == (1, 16, 7)
        assert shapes["filter.up.0.weight"] == (512, 256, 10)
        assert shapes["filter.inject.0.weight"] == (256, 16, 49)
        assert shapes["filter.mrf.1.2.1.weight"] == (128, 128, 7)
        assert shapes["filter.output_conv.weight"] == (1, 32, 7)

    def test_inventory_count_matches_arithmetic(self):
        cfg = ModelConfig()
        # 2 entries (weight+bias) per conv: input convs (2), per stage:
        # up + sine_embed/inject + qp pairs or mrf convs, plus output heads.
        n_source = 1 + sum(1 + 1 + 2 * len(d) for d in cfg.qp_dilations) + 1
        n_filter = 1 + sum(1 + 1 + 9 for _ in range(4)) + 1
        want = 2 * (n_source + n_filter)
        assert len(required_tensor_shapes(cfg)) == want

    def test_param_count_formula(self):
        cfg = ModelConfig()
        store = init_random_weights(cfg, seed=0)
        total = 0
        for shape in required_tensor_shapes(cfg).values():
            total += int(np.prod(shape))
        assert count_params(store) == total


class TestInitRandomWeights:
    def test_seed_reproducible(self):
        cfg = small_config()
        a = init_random_weights(cfg, seed=42)
        b = init_random_weights(cfg, seed=42)
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_seeds_differ(self):
        cfg = small_config()
        a = init_random_weights(cfg, seed=1)
        b = init_random_weights(cfg, seed=2)
        assert any(not np.array_equal(a[n], b[n]) for n in a if n.endswith("weight"))

    def test_biases_zero_weights_scaled(self):
        store = init_random_weights(ModelConfig(), seed=7)
        for name, arr in store.items():
            if name.endswith(".bias"):
                assert not arr.any()
        big = store["filter.mrf.0.0.0.weight"]
        assert abs(float(big.std()) - 0.01) < 0.002

    def test_generated_store_validates(self):
        cfg = small_config()
        init_random_weights(cfg, seed=0).validate_for(cfg)


class TestWeightStoreValidation:
    def test_missing_tensor_named(self):
        cfg = small_config()
        tensors = dict(init_random_weights(cfg, seed=0))
        del tensors["source.up.1.weight"]
        with pytest.raises(CheckpointError, match="missing tensor source.up.1.weight"):
            WeightStore(tensors).validate_for(cfg)

    def test_extra_tensor_rejected(self):
        cfg = small_config()
        tensors = dict(init_random_weights(cfg, seed=0))
        tensors["stowaway"] = np.zeros(3, np.float32)
        with pytest.raises(CheckpointError, match="unexpected tensor stowaway"):
            WeightStore(tensors).validate_for(cfg)

    def test_shape_mismatch_rejected(self):
        cfg = small_config()
        tensors = dict(init_random_weights(cfg, seed=0))
        tensors["filter.output_conv.bias"] = np.zeros(2, np.float32)
        with pytest.raises(CheckpointError, match="filter.output_conv.bias"):
            WeightStore(tensors).validate_for(cfg)

    def test_tensors_are_readonly(self):
        store = init_random_weights(small_config(), seed=0)
        with pytest.raises(ValueError):
            store["source.input_conv.weight"][0, 0, 0] = 1.0


def _schedule(n, f0=150.0, rate=24000.0, dense=4.0):
    return compute_dilation_schedule(
        np.full(n, f0), local_rate=rate, dense_factor=dense, base_dilation=1
    )


class TestQPResBlock:
    def test_zero_weights_identity(self):
        cfg = small_config()
        store = WeightStore(
            {n: np.zeros(s, np.float32) for n, s in required_tensor_shapes(cfg).items()}
        )
        spec = qp_spec(cfg, store, 3)
        x = np.random.default_rng(0).standard_normal((1, 64)).astype(np.float32)
        out = qp_resblock_forward(x, spec, _schedule(64))
        np.testing.assert_array_equal(out, x)

    def test_center_tap_identity_hand_computed(self):
        cfg = small_config(qp_dilations=((1,), (1,), (1,), (1,)))
        ch = cfg.source_channels[-1]  # 1 channel at the last stage
        tensors = {n: np.zeros(s, np.float32) for n, s in required_tensor_shapes(cfg).items()}
        tensors["source.qp.3.0.pd.weight"][:, :, 1] = np.eye(ch)
        tensors["source.qp.3.0.fixed.weight"][:, :, 1] = np.eye(ch)
        store = WeightStore(tensors)
        x = np.array([[-2.0, -0.5, 0.5, 2.0]], np.float32)
        out = qp_resblock_forward(x, qp_spec(cfg, store, 3), _schedule(4))
        # one iteration of leaky -> identity -> leaky -> identity, residual add:
        # x + leaky(leaky(x)) = 2x for x > 0, x (1 + 0.01) for x < 0
        want = np.array([[-2.02, -0.505, 1.0, 4.0]], np.float32)
        np.testing.assert_allclose(out, want, atol=1e-7)

    def test_constant_f0_equals_plain_dilated_block(self):
        cfg = small_config()
        store = init_random_weights(cfg, seed=5)
        spec = qp_spec(cfg, store, 2)  # dilations (1, 2, 4)
        x = np.random.default_rng(1).standard_normal((spec.channels, 200)).astype(np.float32)
        sched = _schedule(200, f0=100.0, rate=12000.0, dense=cfg.dense_factors[2])
        got = qp_resblock_forward(x, spec, sched)

        d_base = int(sched.dilations[0])
        ref = x
        for pd_w, fx_w, base in zip(spec.adaptive, spec.fixed, spec.dilations):
            h = conv1d(leaky_relu(ref), pd_w.weight, pd_w.bias, dilation=d_base * base, padding="same")
            h = conv1d(leaky_relu(h), fx_w.weight, fx_w.bias, padding="same")
            ref = ref + h
        np.testing.assert_array_equal(got, ref)

    def test_schedule_length_mismatch(self):
        cfg = small_config()
        store = init_random_weights(cfg, seed=0)
        with pytest.raises(ConfigError, match="schedule length"):
            qp_resblock_forward(
                np.zeros((cfg.source_channels[1], 10), np.float32),
                qp_spec(cfg, store, 0),
                _schedule(12),
            )


class TestMRF:
    def test_zero_weights_identity(self):
        cfg = small_config()
        store = WeightStore(
            {n: np.zeros(s, np.float32) for n, s in required_tensor_shapes(cfg).items()}
        )
        x = np.random.default_rng(2).standard_normal((cfg.filter_channels[1], 40)).astype(np.float32)
        out = mrf_forward(x, mrf_spec(cfg, store, 0))
        np.testing.assert_allclose(out, x, atol=1e-7)

    def test_single_kernel_equals_branch(self):
        cfg = small_config(mrf_kernel_sizes=(5,), mrf_dilations=(1, 3))
        store = init_random_weights(cfg, seed=9)
        spec = mrf_spec(cfg, store, 1)
        x = np.random.default_rng(3).standard_normal((spec.channels, 64)).astype(np.float32)
        got = mrf_forward(x, spec)
        b = x
        for cw, dil in zip(spec.convs[0], spec.dilations):
            b = b + conv1d(leaky_relu(b), cw.weight, cw.bias, dilation=dil, padding="same")
        np.testing.assert_array_equal(got, b)

    def test_matches_straight_line_oracle(self):
        cfg = small_config()
        store = init_random_weights(cfg, seed=11)
        spec = mrf_spec(cfg, store, 2)
        x = np.random.default_rng(4).standard_normal((spec.channels, 96)).astype(np.float32)
        got = mrf_forward(x, spec)
        branches = [[(cw.weight, cw.bias) for cw in branch] for branch in spec.convs]
        want = mrf_reference(x, branches, spec.dilations)
        np.testing.assert_allclose(got, want, atol=1e-6)


class TestForwardContracts:
    def test_source_lengths_and_zero_weights(self):
        cfg = small_config()
        frames = 10
        store = WeightStore(
            {n: np.zeros(s, np.float32) for n, s in required_tensor_shapes(cfg).items()}
        )
        feats = make_features(frames)
        res = synthesize(feats, 1.0, store, cfg, seed=0)
        assert len(res.excitation) == frames * 120
        assert len(res.speech) == frames * 120
        assert not res.speech.samples.any()
        assert not res.excitation.samples.any()

    @pytest.mark.parametrize("frames", [1, 3, 17, 50])
    def test_length_contract_random_weights(self, frames):
        cfg = small_config()
        store = init_random_weights(cfg, seed=3)
        res = synthesize(make_features(frames), 1.0, store, cfg, seed=1)
        assert len(res.speech) == frames * cfg.hop_length
        assert len(res.excitation) == frames * cfg.hop_length
        assert float(np.abs(res.speech.samples).max()) <= 1.0

    def test_deterministic_across_runs(self):
        cfg = small_config()
        store = init_random_weights(cfg, seed=3)
        feats = make_features(12, seed=5)
        a = synthesize(feats, 1.0, store, cfg, seed=9)
        b = synthesize(feats, 1.0, store, cfg, seed=9)
        np.testing.assert_array_equal(a.speech.samples, b.speech.samples)
        np.testing.assert_array_equal(a.excitation.samples, b.excitation.samples)

    def test_seed_changes_output(self):
        cfg = small_config()
        store = init_random_weights(cfg, seed=3)
        feats = make_features(12, seed=5)
        a = synthesize(feats, 1.0, store, cfg, seed=9)
        b = synthesize(feats, 1.0, store, cfg, seed=10)
        assert not np.array_equal(a.speech.samples, b.speech.samples)

    def test_f0_scale_one_is_identity(self):
        cfg = small_config()
        store = init_random_weights(cfg, seed=3)
        feats = make_features(12, seed=5)
        a = synthesize(feats, 1.0, store, cfg, seed=9)
        from sifigan.features import transform_f0

        b = synthesize(transform_f0(feats, 1.0), 1.0, store, cfg, seed=9)
        np.testing.assert_array_equal(a.speech.samples, b.speech.samples)

    def test_injection_modes_differ(self):
        feats = make_features(10, seed=2)
        down = small_config(injection_mode="downsampled")
        direct = small_config(injection_mode="direct")
        store = init_random_weights(down, seed=4)
        a = synthesize(feats, 1.0, store, down, seed=0)
        b = synthesize(feats, 1.0, store, direct, seed=0)
        assert a.speech.samples.shape == b.speech.samples.shape
        assert not np.array_equal(a.speech.samples, b.speech.samples)

    def test_taps_collected(self):
        cfg = small_config()
        store = init_random_weights(cfg, seed=3)
        res = synthesize(make_features(4), 1.0, store, cfg, seed=1, collect_taps=True)
        keys = set(res.taps)
        for want in (
            "sine",
            "source.input",
            "source.up.0",
            "source.stage.3",
            "source.excitation",
            "filter.input",
            "filter.inject.2",
            "filter.stage.3",
            "filter.output",
        ):
            assert want in keys
        np.testing.assert_array_equal(res.taps["filter.output"][0], res.speech.samples)
        # taps at stage resolution: stage i runs at 5*20*60*120 per 4 frames
        assert res.taps["source.up.0"].shape[1] == 20
        assert res.taps["filter.stage.2"].shape[1] == 240

    def test_frame_rate_mismatch_rejected(self):
        cfg = small_config()
        store = init_random_weights(cfg, seed=0)
        feats = make_features(8)
        bad = FeatureSeq(
            cf0=feats.cf0, vuv=feats.vuv, mgc=feats.mgc, bap=feats.bap, frame_shift_ms=10.0
        )
        with pytest.raises(FeatureError, match="frames/s"):
            synthesize(bad, 1.0, store, cfg, seed=0)

    def test_bad_scale_rejected(self):
        cfg = small_config()
        store = init_random_weights(cfg, seed=0)
        with pytest.raises(ConfigError, match="f0_scale"):
            synthesize(make_features(4), 0.0, store, cfg, seed=0)

    def test_direct_mode_embeds_in_leading_channels(self):
        # with zero filter weights except an identity-ish output tap, direct
        # injection must surface the source stage output, not zeros
        cfg = small_config(injection_mode="direct")
        tensors = {n: np.zeros(s, np.float32) for n, s in required_tensor_shapes(cfg).items()}
        tensors["source.sine_embed.3.weight"][:, :, 1] = 1.0  # pass sine into stage 3
        tensors["filter.output_conv.weight"][0, 0, 3] = 1.0  # read channel 0
        store = WeightStore(tensors)
        res = synthesize(make_features(4), 1.0, store, cfg, seed=0)
        assert np.abs(res.speech.samples).max() > 0


class TestSourceFilterSplit:
    def test_source_forward_standalone(self):
        cfg = small_config()
        store = init_random_weights(cfg, seed=3)
        frames = 6
        rng = np.random.default_rng(0)
        cond = rng.standard_normal((cfg.cond_dim, frames)).astype(np.float32)
        sine = rng.standard_normal((1, frames * 120)).astype(np.float32)
        from sifigan.excitation import F0Track
        from sifigan.model import _stage_schedules

        track = F0Track(np.full(frames, 200.0, np.float32), rate=200.0)
        schedules = _stage_schedules(cfg, track)
        src = source_forward(cond, sine, store, cfg, schedules)
        assert src.excitation.shape == (1, frames * 120)
        assert src.representation.shape == (cfg.source_channels[-1], frames * 120)
        assert len(src.stage_outputs) == 4
        wav = filter_forward(cond, src, store, cfg)
        assert wav.shape == (1, frames * 120)
        assert np.abs(wav).max() <= 1.0

    def test_sine_length_mismatch(self):
        cfg = small_config()
        store = init_random_weights(cfg, seed=3)
        cond = np.zeros((cfg.cond_dim, 6), np.float32)
        sine = np.zeros((1, 100), np.float32)
        from sifigan.excitation import F0Track
        from sifigan.model import _stage_schedules

        track = F0Track(np.full(6, 200.0, np.float32), rate=200.0)
        with pytest.raises(ConfigError, match="sine length"):
            source_forward(cond, sine, store, cfg, _stage_schedules(cfg, track))

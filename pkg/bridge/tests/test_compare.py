"""Comparison metrics and stage-level divergence localization."""

import numpy as np
import pytest

from sifigan_bridge import (
    FormatError,
    compare_outputs,
    estimate_f0,
    localize_divergence,
    mel_l1,
    rel_l2,
)


def tone(freq, seconds=1.0, rate=24000, amp=0.3):
    t = np.arange(int(seconds * rate)) / rate
    return (amp * np.sin(2 * np.pi * freq * t)).astype(np.float32)


class TestMetrics:
    def test_identical_is_zeros(self):
        x = tone(220.0)
        report = compare_outputs(x, x, 24000)
        assert report == {"max_abs": 0.0, "rel_l2": 0.0, "mel_l1": 0.0}

    def test_differences_register(self):
        a, b = tone(220.0), tone(330.0)
        report = compare_outputs(a, b, 24000)
        assert report["max_abs"] > 0.1
        assert report["rel_l2"] > 0.1
        assert report["mel_l1"] > 0.05

    def test_small_perturbation_stays_small(self):
        a = tone(220.0)
        b = a + np.float32(1e-6)
        report = compare_outputs(a, b, 24000)
        assert report["max_abs"] <= 2e-6
        assert report["rel_l2"] < 1e-4
        assert report["mel_l1"] < 1e-3

    def test_length_mismatch_rejected(self):
        with pytest.raises(FormatError):
            compare_outputs(tone(220)[:100], tone(220)[:99], 24000)

    def test_rel_l2_zero_reference(self):
        zeros = np.zeros(16)
        assert rel_l2(zeros, zeros) == 0.0
        assert rel_l2(np.ones(16), zeros) == np.inf

    def test_mel_l1_gain_shows_up(self):
        # Broadband signal keeps every mel bin above the log floor, so a 2x
        # gain shifts each bin by exactly log10(2).
        rng = np.random.default_rng(3)
        a = (0.1 * rng.standard_normal(48000)).astype(np.float32)
        assert mel_l1(a, a * np.float32(2.0), 24000) == pytest.approx(np.log10(2.0), rel=1e-6)
        # A pure tone leaves most bins clipped at the floor; the metric still
        # registers the change, just diluted.
        b = tone(220.0)
        assert 0.01 < mel_l1(b, b * np.float32(2.0), 24000) < np.log10(2.0)


class TestDivergence:
    def make_stages(self):
        rng = np.random.default_rng(0)
        order = ["sine", "source.input", "source.up.0", "filter.output"]
        stages = {name: rng.normal(size=(4, 32)) for name in order}
        return order, stages

    def test_agreement_names_nothing(self):
        order, stages = self.make_stages()
        first, report = localize_divergence(stages, dict(stages), order, tol=1e-9)
        assert first is None
        assert all(v == 0.0 for v in report.values())

    def test_first_offender_named_in_forward_order(self):
        order, stages = self.make_stages()
        tampered = {k: v.copy() for k, v in stages.items()}
        tampered["source.up.0"] += 0.5
        tampered["filter.output"] += 0.5
        first, report = localize_divergence(stages, tampered, order, tol=1e-6)
        assert first == "source.up.0"
        assert report["source.input"] == 0.0
        assert report["filter.output"] > 1e-3

    def test_missing_tap_rejected(self):
        order, stages = self.make_stages()
        partial = {k: v for k, v in stages.items() if k != "source.input"}
        with pytest.raises(FormatError):
            localize_divergence(stages, partial, order, tol=1e-6)


class TestPitchEstimator:
    def test_clean_tone(self):
        voiced, f0 = estimate_f0(tone(220.0), 24000)
        assert voiced.mean() > 0.9
        assert abs(np.mean(f0[voiced]) - 220.0) < 2.0

    def test_octave_pair(self):
        v1, f1 = estimate_f0(tone(200.0), 24000)
        v2, f2 = estimate_f0(tone(400.0), 24000)
        ratio = np.mean(f2[v2]) / np.mean(f1[v1])
        assert ratio == pytest.approx(2.0, abs=0.05)

    def test_silence_is_unvoiced(self):
        voiced, _ = estimate_f0(np.zeros(24000, np.float32), 24000)
        assert not voiced.any()

    def test_noise_is_mostly_unvoiced(self):
        noise = np.random.default_rng(1).normal(0, 0.1, 24000).astype(np.float32)
        voiced, _ = estimate_f0(noise, 24000)
        assert voiced.mean() < 0.3

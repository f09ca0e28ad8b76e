import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from psynth import features
from psynth.audio_io import Waveform
from psynth.errors import InsufficientDataError, SilentInputError
from psynth.features import (
    FEATURE_NAMES,
    FeatureNormalizer,
    TimbralVector,
    denormalize,
    envelope_follow,
    extract_timbral,
    fit_normalizer,
    normalize,
    parametric_envelope,
    spectral_centroid,
)
from conftest import decaying_sine

SR = 16000


class TestEnvelopeFollow:
    def test_zero_in_zero_out(self):
        env = envelope_follow(Waveform(np.zeros(1000), SR))
        assert np.all(env.values == 0)

    def test_step_response_closed_form(self):
        env = envelope_follow(Waveform(np.ones(200), SR))
        alpha = math.exp(-1 / 80)
        for n in (0, 10, 79, 150):
            assert env.values[n] == pytest.approx(1 - alpha ** (n + 1), abs=1e-12)
        assert env.values[79] == pytest.approx(1 - math.exp(-80 / 80), abs=1e-6)

    def test_impulse_decay_closed_form(self):
        x = np.zeros(500)
        x[0] = 1.0
        env = envelope_follow(Waveform(x, SR))
        alpha_a = math.exp(-1 / 80)
        alpha_r = math.exp(-1 / 800)
        assert env.values[0] == pytest.approx(1 - alpha_a, abs=1e-12)
        ratios = env.values[1:200] / env.values[:199]
        assert np.max(np.abs(ratios - alpha_r)) < 1e-9

    def test_bounded_and_level_monotone(self, rng):
        x = rng.uniform(-1, 1, 3000)
        full = envelope_follow(Waveform(x, SR)).values
        assert full.min() >= 0 and full.max() <= 1
        for a in (0.25, 0.8):
            scaled = envelope_follow(Waveform(a * x, SR)).values
            assert np.all(scaled <= full + 1e-12)
            assert np.allclose(scaled, a * full, atol=1e-12)

    def test_rejects_nonpositive_times(self):
        with pytest.raises(ValueError):
            envelope_follow(Waveform(np.ones(10), SR), attack_ms=0)


class TestParametricEnvelope:
    def test_instant_attack_decay(self):
        env = parametric_envelope(0.0, 100.0, 1.0, 16000)
        assert env.values[0] == pytest.approx(1.0)
        assert env.values[1600] == pytest.approx(math.exp(-1), abs=1e-9)

    def test_ramp_end(self):
        env = parametric_envelope(5.0, 100.0, 1.0, 16000)
        assert env.values[80] == pytest.approx(1.0)
        assert env.values[40] == pytest.approx(0.5)

    def test_amplitude_scaling(self):
        env = parametric_envelope(2.0, 50.0, 0.5, 16000)
        assert np.max(env.values) == pytest.approx(0.5)


class TestSpectralCentroid:
    def test_silence_is_zero(self):
        assert spectral_centroid(Waveform(np.zeros(4000), SR)) == 0.0

    def test_pure_sine(self):
        t = np.arange(16000) / SR
        c = spectral_centroid(Waveform(0.8 * np.sin(2 * np.pi * 1000 * t), SR))
        assert abs(c - 1000) <= 16.0

    def test_white_noise_near_quarter_rate(self):
        centroids = []
        for seed in range(4):
            x = np.random.default_rng(seed).uniform(-1, 1, 16000)
            centroids.append(spectral_centroid(Waveform(x, SR)))
        assert abs(np.mean(centroids) - 4000) < 400


class TestExtractTimbral:
    def test_silence_raises(self):
        with pytest.raises(SilentInputError):
            extract_timbral(Waveform(np.zeros(16000), SR))

    def test_low_vs_high_sine(self):
        low = extract_timbral(Waveform(decaying_sine(60), SR))
        high = extract_timbral(Waveform(decaying_sine(2000), SR))
        assert low.brightness < high.brightness
        assert low.depth > high.depth

    def test_noise_layer_raises_roughness_and_sharpness(self, rng):
        tone = decaying_sine(400)
        noise = 10 ** (-12 / 20) * rng.standard_normal(len(tone)) * np.exp(
            -np.arange(len(tone)) / (0.25 * SR)
        )
        clean = extract_timbral(Waveform(tone, SR))
        noisy = extract_timbral(Waveform(tone + noise, SR))
        assert noisy.roughness >= clean.roughness
        assert noisy.sharpness >= clean.sharpness

    def test_deterministic(self):
        w = Waveform(decaying_sine(150), SR)
        a, b = extract_timbral(w), extract_timbral(w)
        assert a == b


class TestMonotoneProxies:
    """The seven ordering contracts on constructed signal pairs."""

    def test_brightness_rises_with_frequency(self):
        values = [extract_timbral(Waveform(decaying_sine(f), SR)).brightness
                  for f in (100, 250, 600, 1500, 4000)]
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_depth_rises_with_low_band_share(self):
        low, high = decaying_sine(100), decaying_sine(1000)
        values = [extract_timbral(Waveform(frac * low + (1 - frac) * high, SR)).depth
                  for frac in (0.1, 0.4, 0.7, 0.95)]
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_boominess_rises_with_low_band_share(self):
        low, high = decaying_sine(60, decay_s=0.5), decaying_sine(800, decay_s=0.5)
        values = [extract_timbral(Waveform(frac * low + (1 - frac) * high, SR)).boominess
                  for frac in (0.2, 0.5, 0.9)]
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_sharpness_rises_with_high_bark_energy(self, rng):
        base = decaying_sine(300)
        noise = rng.standard_normal(len(base))
        spec = np.fft.rfft(noise)
        freqs = np.fft.rfftfreq(len(base), 1 / SR)
        spec[(freqs < 5000) | (freqs > 7800)] = 0
        hiss = np.fft.irfft(spec, len(base))
        hiss /= np.max(np.abs(hiss))
        values = [extract_timbral(Waveform(base + g * hiss, SR)).sharpness
                  for g in (0.0, 0.1, 0.3)]
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_warmth_rises_with_low_mid_level(self):
        body, warm = decaying_sine(1200), decaying_sine(200)
        values = [extract_timbral(Waveform(body + g * warm, SR)).warmth
                  for g in (0.0, 0.3, 0.8)]
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_hardness_rises_with_attack_slope(self):
        t = np.arange(16000) / SR
        carrier = np.sin(2 * np.pi * 500 * t) * np.exp(-t / 0.2)
        values = []
        for attack_s in (0.015, 0.005, 0.001):
            ramp = np.minimum(t / attack_s, 1.0)
            values.append(extract_timbral(Waveform(carrier * ramp, SR)).hardness)
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_roughness_rises_with_beating_partner(self):
        f0 = 2000.0
        t = np.arange(16000) / SR
        base = np.exp(-t / 0.25) * np.sin(2 * np.pi * f0 * t)
        values = []
        for g in (0.0, 0.4, 0.9):
            partner = g * np.exp(-t / 0.25) * np.sin(2 * np.pi * f0 * 1.02 * t)
            values.append(extract_timbral(Waveform(base + partner, SR)).roughness)
        assert all(a < b for a, b in zip(values, values[1:]))


class TestNormalizer:
    def test_fit_min_max(self):
        vecs = [TimbralVector.from_array(np.full(7, v)) for v in (2.0, 4.0, 6.0)]
        n = fit_normalizer(vecs)
        assert np.all(n.mins == 2.0) and np.all(n.maxs == 6.0)
        assert not n.degenerate.any()

    def test_degenerate_flag(self):
        base = np.arange(7, dtype=float)
        warmth_idx = FEATURE_NAMES.index("warmth")
        arrays = [base + k for k in range(3)]
        for arr in arrays:
            arr[warmth_idx] = 3.0
        n = fit_normalizer([TimbralVector.from_array(a) for a in arrays])
        assert n.degenerate[warmth_idx]
        assert not n.degenerate[0]

    def test_insufficient_data(self):
        with pytest.raises(InsufficientDataError):
            fit_normalizer([TimbralVector.from_array(np.zeros(7))])

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.lists(st.floats(-100, 100), min_size=7, max_size=7),
                    min_size=2, max_size=12))
    def test_normalized_values_in_unit_interval(self, rows):
        vecs = [TimbralVector.from_array(np.array(r)) for r in rows]
        n = fit_normalizer(vecs)
        for v in vecs:
            out = normalize(n, v).as_array()
            assert np.all(out >= 0.0) and np.all(out <= 1.0)

    def test_boundaries_and_midpoint(self):
        lo = TimbralVector.from_array(np.zeros(7))
        hi = TimbralVector.from_array(np.ones(7) * 4)
        mid = TimbralVector.from_array(np.ones(7) * 2)
        n = fit_normalizer([lo, hi])
        assert np.all(normalize(n, lo).as_array() == 0.0)
        assert np.all(normalize(n, hi).as_array() == 1.0)
        assert np.all(normalize(n, mid).as_array() == 0.5)

    def test_out_of_range_clamped(self):
        n = fit_normalizer([TimbralVector.from_array(np.zeros(7)),
                            TimbralVector.from_array(np.ones(7))])
        wild = TimbralVector.from_array(np.full(7, 9.0))
        assert np.all(normalize(n, wild).as_array() == 1.0)

    def test_denormalize_inverse(self, rng):
        vecs = [TimbralVector.from_array(rng.uniform(-5, 5, 7)) for _ in range(6)]
        n = fit_normalizer(vecs)
        for v in vecs:
            back = denormalize(n, normalize(n, v)).as_array()
            assert np.max(np.abs(back - v.as_array())) < 1e-9

    def test_degenerate_rules(self):
        mins = np.zeros(7)
        maxs = np.ones(7)
        maxs[1] = 0.0  # depth degenerate
        n = FeatureNormalizer(mins, maxs)
        v = TimbralVector.from_array(np.full(7, 0.25))
        out = normalize(n, v).as_array()
        assert out[1] == 0.5
        back = denormalize(n, TimbralVector.from_array(out, normalized=True)).as_array()
        assert back[1] == 0.0  # stored min

    def test_json_round_trip(self):
        n = fit_normalizer([TimbralVector.from_array(np.arange(7, dtype=float)),
                            TimbralVector.from_array(np.arange(7, dtype=float) * 2)])
        doc = n.to_json()
        assert "normalizer-v1" in doc
        back = FeatureNormalizer.from_json(doc)
        assert np.array_equal(back.mins, n.mins)
        assert np.array_equal(back.maxs, n.maxs)

    def test_canonical_order_in_json(self):
        n = fit_normalizer([TimbralVector.from_array(np.zeros(7)),
                            TimbralVector.from_array(np.ones(7))])
        assert tuple(n.to_dict()["features"].keys()) == FEATURE_NAMES

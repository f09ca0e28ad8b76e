"""Feature-coherence evaluation: sweep, resynthesize, re-extract, score.

For every evaluation record and every feature, the harness sets that one
normalized feature to low/mid/high (default 0.2/0.5/0.8, holding the other
six at the record's values), synthesizes a waveform through the backend,
re-extracts the descriptors and normalizes them with the training
normalizer. Three strict ordering tests are scored per pair:

    E1: high > low      E2: high > mid      E3: mid > low

Ties count as failures. The harness is backend-agnostic: anything mapping
(envelope, features) to a waveform can be scored. Two reference backends
ship with it: a monotone additive synthesizer whose measured descriptors
rise with their control by construction (the harness must score 1.0 on
it), and a constant backend that ignores its controls (must score 0.0).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .audio_io import Waveform
from .errors import SilentInputError, SilentOutputError
from .features import (
    FEATURE_NAMES,
    FeatureNormalizer,
    extract_timbral,
    fit_normalizer,
    normalize_array,
)
from .net import Checkpoint, ConditioningInput, forward, make_conditioning

log = logging.getLogger(__name__)

_SILENCE_PEAK = 1e-5


@dataclass(frozen=True)
class SweepLevels:
    low: float = 0.2
    mid: float = 0.5
    high: float = 0.8

    def __post_init__(self):
        if not 0.0 <= self.low < self.mid < self.high <= 1.0:
            raise ValueError("levels must satisfy 0 <= low < mid < high <= 1")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.low, self.mid, self.high)


class CheckpointBackend:
    """Synthesis through a trained model checkpoint."""

    def __init__(self, ckpt: Checkpoint, sample_rate: int = 16000):
        self.ckpt = ckpt
        self.sample_rate = sample_rate
        self.controlled_features = FEATURE_NAMES

    def __call__(self, envelope: np.ndarray, fs: np.ndarray) -> np.ndarray:
        cond = make_conditioning(envelope, fs, self.ckpt.config)
        return forward(self.ckpt.params, self.ckpt.config, cond, self.sample_rate).samples


class MonotoneOracleBackend:
    """Additive synthesizer with one independent knob per feature.

    Each normalized control drives a separate component chosen so the
    matching descriptor rises strictly with it: body frequency for
    brightness, low sine levels for depth/boominess, a 250 Hz partial for
    warmth, a beating pair near 1.9 kHz for roughness, band-limited high
    noise for sharpness and an onset click for hardness. The input envelope
    is ignored; noise realizations are fixed so the map is a pure function
    of the feature vector.
    """

    controlled_features = FEATURE_NAMES

    def __init__(self, n: int = 16000, sample_rate: int = 16000, seed: int = 1234):
        self.n = n
        self.sample_rate = sample_rate
        rng = np.random.default_rng(seed)
        self._click = rng.uniform(-1.0, 1.0, 32)
        noise = rng.standard_normal(n)
        spectrum = np.fft.rfft(noise)
        freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
        spectrum[(freqs < 4500) | (freqs > 7800)] = 0.0
        band = np.fft.irfft(spectrum, n)
        self._high_noise = band / np.max(np.abs(band))

    def __call__(self, envelope: np.ndarray, fs: np.ndarray) -> np.ndarray:
        hardness, depth, brightness, roughness, boominess, warmth, sharpness = np.clip(
            np.asarray(fs, dtype=np.float64), 0.0, 1.0
        )
        t = np.arange(self.n) / self.sample_rate
        # every sustained component ramps in over 50 ms so the onset click is
        # the only source of early envelope slope (the hardness proxy)
        ramp = np.minimum(t / 0.05, 1.0)

        def tone(freq, amp, decay_s):
            return amp * ramp * np.exp(-t / decay_s) * np.sin(2.0 * np.pi * freq * t)

        f_body = 100.0 * 15.0**brightness
        body = tone(f_body, 1.0, 0.25)
        low = tone(80.0, 0.05 + 0.9 * depth, 0.30)
        boom = tone(45.0, 0.25 + 0.7 * boominess, 0.45)
        warm = tone(250.0, 0.05 + 0.9 * warmth, 0.30)
        a_pair = 0.08 + 0.9 * roughness
        pair = 0.5 * (tone(1900.0, a_pair, 0.30) + tone(1900.0 * 1.03, a_pair, 0.30))
        sharp = (0.05 + 0.5 * sharpness) * ramp * np.exp(-t / 0.20) * self._high_noise
        click = np.zeros(self.n)
        click[:32] = (0.1 + 0.8 * hardness) * self._click

        x = body + low + boom + warm + pair + sharp + click
        return 0.9 * x / np.max(np.abs(x))


class ConstantBackend:
    """Ignores its controls entirely; every strict ordering test must fail."""

    controlled_features: tuple = ()

    def __init__(self, waveform: np.ndarray | None = None, n: int = 16000,
                 sample_rate: int = 16000):
        if waveform is None:
            t = np.arange(n) / sample_rate
            waveform = 0.5 * np.exp(-t / 0.2) * np.sin(2.0 * np.pi * 120.0 * t)
        self._wave = np.asarray(waveform, dtype=np.float64)

    def __call__(self, envelope: np.ndarray, fs: np.ndarray) -> np.ndarray:
        return self._wave.copy()


def sweep_one(backend, envelope: np.ndarray, fs: np.ndarray, feature_index: int,
              levels: SweepLevels, normalizer: FeatureNormalizer,
              sample_rate: int = 16000) -> tuple[float, float, float]:
    """Measured normalized value of feature `feature_index` at each sweep level."""
    measured = []
    for level in levels.as_tuple():
        swept = np.array(fs, dtype=np.float64)
        swept[feature_index] = level
        out = np.asarray(backend(envelope, swept), dtype=np.float64)
        if len(out) == 0 or np.max(np.abs(out)) < _SILENCE_PEAK:
            raise SilentOutputError(
                f"backend produced silence sweeping {FEATURE_NAMES[feature_index]} to {level}"
            )
        try:
            raw = extract_timbral(Waveform(out, sample_rate))
        except SilentInputError as exc:
            raise SilentOutputError(str(exc)) from exc
        measured.append(normalize_array(normalizer, raw.as_array())[feature_index])
    return tuple(measured)  # type: ignore[return-value]


def score(m_low: float, m_mid: float, m_high: float) -> tuple[bool, bool, bool]:
    """E1: high > low, E2: high > mid, E3: mid > low. Strict; ties fail."""
    return (m_high > m_low, m_high > m_mid, m_mid > m_low)


@dataclass
class CoherenceReport:
    levels: SweepLevels
    feature_names: tuple
    per_feature: dict  # name -> {"e1": float, "e2": float, "e3": float, "n": int}
    aggregate: dict  # {"e1": float, "e2": float, "e3": float}
    total_pairs: int
    silent_failures: int = 0
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "levels": {"low": self.levels.low, "mid": self.levels.mid, "high": self.levels.high},
            "features": {name: dict(stats) for name, stats in self.per_feature.items()},
            "aggregate": dict(self.aggregate),
            "total_pairs": self.total_pairs,
            "silent_failures": self.silent_failures,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_table(self) -> str:
        width = max(len(n) for n in self.feature_names) + 2
        lines = [f"{'Feature':<{width}}{'E1':>8}{'E2':>8}{'E3':>8}"]
        for name in self.feature_names:
            s = self.per_feature[name]
            lines.append(
                f"{name:<{width}}{s['e1']:>8.3f}{s['e2']:>8.3f}{s['e3']:>8.3f}"
            )
        agg = self.aggregate
        lines.append(
            f"{'(all)':<{width}}{agg['e1']:>8.3f}{agg['e2']:>8.3f}{agg['e3']:>8.3f}"
        )
        return "\n".join(lines)


def evaluate(backend, records, normalizer: FeatureNormalizer,
             levels: SweepLevels = SweepLevels(),
             feature_names: tuple = FEATURE_NAMES,
             sample_rate: int = 16000) -> CoherenceReport:
    """Sweep-and-score every (record, feature) pair. Deterministic work order.

    `records` is a list of TrainingRecord or of (envelope, features) pairs.
    Silent backend outputs fail all three tests for that pair and are logged.
    """
    if len(records) == 0:
        raise ValueError("need at least one evaluation record")
    indices = [FEATURE_NAMES.index(name) for name in feature_names]
    passes = {name: np.zeros(3, dtype=int) for name in feature_names}
    counts = {name: 0 for name in feature_names}
    silent = 0

    for rec in records:
        if hasattr(rec, "e"):
            env, fs = rec.e.values, rec.fs.as_array()
        else:
            env, fs = rec
        for idx, name in zip(indices, feature_names):
            counts[name] += 1
            try:
                m_low, m_mid, m_high = sweep_one(backend, env, fs, idx, levels,
                                                 normalizer, sample_rate)
            except SilentOutputError as exc:
                silent += 1
                log.warning("silent output, pair fails: %s", exc)
                continue
            e1, e2, e3 = score(m_low, m_mid, m_high)
            assert not (e2 and e3 and not e1), "strict order transitivity violated"
            passes[name] += np.array([e1, e2, e3], dtype=int)

    per_feature = {
        name: {
            "e1": passes[name][0] / counts[name],
            "e2": passes[name][1] / counts[name],
            "e3": passes[name][2] / counts[name],
            "n": counts[name],
        }
        for name in feature_names
    }
    total = sum(counts.values())
    agg = np.sum([passes[name] for name in feature_names], axis=0) / total
    report = CoherenceReport(
        levels=levels,
        feature_names=tuple(feature_names),
        per_feature=per_feature,
        aggregate={"e1": float(agg[0]), "e2": float(agg[1]), "e3": float(agg[2])},
        total_pairs=total,
        silent_failures=silent,
    )
    return report


def fit_backend_normalizer(backend, records, levels: SweepLevels = SweepLevels(),
                           feature_names: tuple = FEATURE_NAMES,
                           sample_rate: int = 16000) -> FeatureNormalizer:
    """Fit a normalizer over the backend's own sweep outputs.

    Used for harness self-validation: measuring with ranges that cover the
    evaluated population keeps the [0, 1] clamp from flattening the sweep
    responses into ties.
    """
    raws = []
    indices = [FEATURE_NAMES.index(name) for name in feature_names]
    for rec in records:
        if hasattr(rec, "e"):
            env, fs = rec.e.values, rec.fs.as_array()
        else:
            env, fs = rec
        for idx in indices:
            for level in levels.as_tuple():
                swept = np.array(fs, dtype=np.float64)
                swept[idx] = level
                out = np.asarray(backend(env, swept), dtype=np.float64)
                if len(out) and np.max(np.abs(out)) >= _SILENCE_PEAK:
                    raws.append(extract_timbral(Waveform(out, sample_rate)).as_array())
    return fit_normalizer(raws)

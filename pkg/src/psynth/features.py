"""Conditioning signals: timbral descriptors, energy envelope, normalizer.

The seven descriptors (hardness, depth, brightness, roughness, boominess,
warmth, sharpness) are concrete DSP proxies chosen to be deterministic and
monotone in the acoustic quality they name:

* brightness  - mean spectral centroid c mapped through c / (c + 1500)
* depth       - fraction of spectral energy in 20-200 Hz
* boominess   - fraction of energy in 20-120 Hz, weighted by how many
                frames sustain low-band level above -30 dBFS
* warmth      - energy in 100-350 Hz relative to 50-2000 Hz
* sharpness   - weighted centroid over 24 Bark bands, with weights
                exp(0.17 * (z - 14)) above band 14
* roughness   - Vassilakis pairwise roughness over the top-20 peaks of a
                high-resolution mean spectrum
* hardness    - peak envelope slope in the first 20 ms times the centroid
                map of that early segment

Raw values carry arbitrary units; the min-max FeatureNormalizer maps each
one onto [0, 1] over a dataset.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .audio_io import Waveform
from .errors import InsufficientDataError, SilentInputError

FEATURE_NAMES = (
    "hardness",
    "depth",
    "brightness",
    "roughness",
    "boominess",
    "warmth",
    "sharpness",
)

NORMALIZER_VERSION = "normalizer-v1"

_SILENCE_PEAK = 1e-5
_FRAME = 1024
_HOP = 512
_ROUGHNESS_FRAME = 4096
_ROUGHNESS_HOP = 1024
_BRIGHTNESS_KNEE_HZ = 1500.0

# Zwicker critical-band edges (Hz), truncated to the 16 kHz Nyquist at use time.
_BARK_EDGES = np.array(
    [20, 100, 200, 300, 400, 510, 630, 770, 920, 1080, 1270, 1480, 1720,
     2000, 2320, 2700, 3150, 3700, 4400, 5300, 6400, 7700, 9500, 12000, 15500],
    dtype=np.float64,
)


@dataclass(frozen=True)
class TimbralVector:
    """The seven descriptor values in canonical order. `normalized` marks [0, 1] scale."""

    hardness: float
    depth: float
    brightness: float
    roughness: float
    boominess: float
    warmth: float
    sharpness: float
    normalized: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES], dtype=np.float64)

    def as_dict(self) -> dict[str, float]:
        return {name: float(getattr(self, name)) for name in FEATURE_NAMES}

    @classmethod
    def from_array(cls, values, normalized: bool = False) -> "TimbralVector":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (len(FEATURE_NAMES),):
            raise ValueError(f"expected {len(FEATURE_NAMES)} feature values, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("feature values must be finite")
        return cls(*[float(v) for v in values], normalized=normalized)

    @classmethod
    def from_dict(cls, mapping, normalized: bool = False) -> "TimbralVector":
        return cls(*[float(mapping[name]) for name in FEATURE_NAMES], normalized=normalized)


@dataclass(frozen=True)
class Envelope:
    """Per-sample energy curve in [0, 1], same length as the waveform it conditions."""

    values: np.ndarray
    sample_rate: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 1:
            raise ValueError("envelope must be one-dimensional")
        if len(values) and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("envelope values must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.values)


def envelope_follow(w: Waveform, attack_ms: float = 5.0, release_ms: float = 50.0) -> Envelope:
    """One-pole attack/release follower on |x|.

    e[n] = (1 - a) * |x[n]| + a * e[n-1], with the attack coefficient on
    rising input (|x[n]| >= e[n-1]) and the release coefficient otherwise;
    e[-1] = 0. Coefficients are exp(-1 / (tau_s * sr)).
    """
    if attack_ms <= 0 or release_ms <= 0:
        raise ValueError("attack and release times must be positive")
    sr = w.sample_rate
    alpha_a = math.exp(-1.0 / (attack_ms * 1e-3 * sr))
    alpha_r = math.exp(-1.0 / (release_ms * 1e-3 * sr))
    x = np.abs(w.samples)
    out = np.empty_like(x)
    prev = 0.0
    for n in range(len(x)):
        alpha = alpha_a if x[n] >= prev else alpha_r
        prev = (1.0 - alpha) * x[n] + alpha * prev
        out[n] = prev
    return Envelope(np.clip(out, 0.0, 1.0), sr)


def parametric_envelope(attack_ms: float, decay_ms: float, amplitude: float, n: int,
                        sample_rate: int = 16000) -> Envelope:
    """Attack/decay control curve: linear rise to `amplitude` over the attack,
    then exponential decay with time constant `decay_ms`, over n samples."""
    if attack_ms < 0:
        raise ValueError("attack_ms must be non-negative")
    if decay_ms <= 0:
        raise ValueError("decay_ms must be positive")
    if not 0.0 < amplitude <= 1.0:
        raise ValueError("amplitude must lie in (0, 1]")
    attack_n = int(round(attack_ms * 1e-3 * sample_rate))
    idx = np.arange(n, dtype=np.float64)
    if attack_n == 0:
        values = amplitude * np.exp(-idx / (decay_ms * 1e-3 * sample_rate))
    else:
        rise = amplitude * idx / attack_n
        fall = amplitude * np.exp(-(idx - attack_n) / (decay_ms * 1e-3 * sample_rate))
        values = np.where(idx <= attack_n, np.minimum(rise, amplitude), fall)
    return Envelope(np.clip(values, 0.0, 1.0), sample_rate)


def _frame_signal(x: np.ndarray, frame: int, hop: int) -> np.ndarray:
    """Hann-windowed frames, no centering. Short signals get one zero-padded frame."""
    if len(x) < frame:
        x = np.concatenate([x, np.zeros(frame - len(x))])
    n_frames = (len(x) - frame) // hop + 1
    idx = np.arange(frame)[None, :] + hop * np.arange(n_frames)[:, None]
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(frame) / frame)
    return x[idx] * window[None, :]


def _magnitudes(x: np.ndarray, frame: int = _FRAME, hop: int = _HOP) -> tuple[np.ndarray, np.ndarray]:
    """(per-frame magnitude spectra, bin frequencies)."""
    frames = _frame_signal(x, frame, hop)
    return np.abs(np.fft.rfft(frames, axis=1)), np.fft.rfftfreq(frame, 1.0)


def spectral_centroid(w: Waveform) -> float:
    """Magnitude-weighted mean frequency of the mean Hann spectrum; 0 for silence."""
    if len(w) == 0:
        raise ValueError("empty waveform")
    mags, freqs = _magnitudes(w.samples)
    freqs = freqs * w.sample_rate
    mean_mag = mags.mean(axis=0)
    total = mean_mag.sum()
    if total <= 0.0:
        return 0.0
    return float((freqs * mean_mag).sum() / total)


def _centroid_map(centroid_hz: float) -> float:
    return centroid_hz / (centroid_hz + _BRIGHTNESS_KNEE_HZ)


def _band_power(power: np.ndarray, freqs: np.ndarray, lo: float, hi: float) -> float:
    mask = (freqs >= lo) & (freqs <= hi)
    return float(power[mask].sum())


def _vassilakis_pair(f1: float, a1: float, f2: float, a2: float) -> float:
    if f2 < f1:
        f1, f2, a1, a2 = f2, f1, a2, a1
    x = (a1 * a2) ** 0.1
    y = (2.0 * min(a1, a2) / (a1 + a2)) ** 3.11
    s = 0.24 / (0.0207 * f1 + 18.96)
    df = f2 - f1
    z = math.exp(-3.5 * s * df) - math.exp(-5.75 * s * df)
    return x * y * z


def _roughness(x: np.ndarray, sr: int) -> float:
    """Summed Vassilakis roughness over the top-20 peaks of the mean spectrum.

    Uses a 4096-sample frame so that partials a few percent apart resolve
    as separate peaks. Peak amplitudes are scaled to a unit maximum to keep
    the measure level-invariant.
    """
    mags, freqs = _magnitudes(x, _ROUGHNESS_FRAME, _ROUGHNESS_HOP)
    spectrum = mags.mean(axis=0)
    freqs = freqs * sr
    peak = spectrum.max()
    if peak <= 0.0:
        return 0.0
    spectrum = spectrum / peak

    interior = spectrum[1:-1]
    is_peak = (interior > spectrum[:-2]) & (interior >= spectrum[2:]) & (interior > 1e-6)
    peak_idx = np.nonzero(is_peak)[0] + 1
    if len(peak_idx) < 2:
        return 0.0
    top = peak_idx[np.argsort(spectrum[peak_idx])[-20:]]
    fs, amps = freqs[top], spectrum[top]
    total = 0.0
    for i in range(len(top)):
        for j in range(i + 1, len(top)):
            total += _vassilakis_pair(fs[i], amps[i], fs[j], amps[j])
    return float(total)


def _sharpness(power: np.ndarray, freqs: np.ndarray) -> float:
    """Bark-weighted spectral balance: band index centroid with high-band emphasis."""
    edges = _BARK_EDGES[_BARK_EDGES <= freqs[-1] * 1.0001]
    if len(edges) < 2:
        return 0.0
    # half-open bands [edge_z, edge_z+1), plus everything above the last edge
    bands = [(freqs >= edges[z]) & (freqs < edges[z + 1]) for z in range(len(edges) - 1)]
    bands.append(freqs >= edges[-1])
    num = 0.0
    den = 0.0
    for z, mask in enumerate(bands):
        band = float(power[mask].sum())
        zc = z + 1  # 1-indexed band number
        weight = 1.0 if zc <= 14 else math.exp(0.17 * (zc - 14))
        num += zc * weight * band
        den += band
    return 0.0 if den <= 0.0 else float(num / den)


def _hardness(x: np.ndarray, sr: int) -> float:
    early_n = int(0.020 * sr)
    env = envelope_follow(Waveform(x[: max(early_n, 2)], sr))  # follower is causal
    slope = float(np.max(np.diff(env.values)))

    early = x[:early_n]
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(len(early)) / max(len(early), 1))
    spec = np.abs(np.fft.rfft(early * window, n=_FRAME))
    freqs = np.fft.rfftfreq(_FRAME, 1.0 / sr)
    total = spec.sum()
    centroid = 0.0 if total <= 0.0 else float((freqs * spec).sum() / total)
    return max(slope, 0.0) * _centroid_map(centroid)


def extract_timbral(w: Waveform) -> TimbralVector:
    """Compute the seven raw descriptors. Deterministic; raises SilentInputError."""
    x = w.samples
    if len(x) == 0 or np.max(np.abs(x)) < _SILENCE_PEAK:
        raise SilentInputError("cannot extract features from silence")
    sr = w.sample_rate

    mags, freqs = _magnitudes(x)
    freqs = freqs * sr
    mean_mag = mags.mean(axis=0)
    power = (mags**2).mean(axis=0)

    centroid = float((freqs * mean_mag).sum() / mean_mag.sum())
    brightness = _centroid_map(centroid)

    total_power = _band_power(power, freqs, 20.0, sr / 2)
    depth = _band_power(power, freqs, 20.0, 200.0) / total_power

    # sustain weighting: fraction of frames whose low band stays above -30 dBFS,
    # referenced to a full-scale in-band sine (mainlobe power 1.5 * (sum(w)/2)^2)
    window_sum = _FRAME / 2.0  # periodic Hann
    ref = 1.5 * (window_sum / 2.0) ** 2
    low_mask = (freqs >= 20.0) & (freqs <= 120.0)
    frame_low = (mags[:, low_mask] ** 2).sum(axis=1)
    sustain = float(np.mean(10.0 * np.log10(frame_low / ref + 1e-30) > -30.0))
    boominess = (_band_power(power, freqs, 20.0, 120.0) / total_power) * sustain

    warmth = _band_power(power, freqs, 100.0, 350.0) / max(
        _band_power(power, freqs, 50.0, 2000.0), 1e-30
    )

    return TimbralVector(
        hardness=_hardness(x, sr),
        depth=float(depth),
        brightness=float(brightness),
        roughness=_roughness(x, sr),
        boominess=float(boominess),
        warmth=float(warmth),
        sharpness=_sharpness(power, freqs),
        normalized=False,
    )


@dataclass(frozen=True)
class FeatureNormalizer:
    """Per-feature min/max over a dataset; degenerate features have min == max."""

    mins: np.ndarray
    maxs: np.ndarray
    degenerate: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        mins = np.asarray(self.mins, dtype=np.float64)
        maxs = np.asarray(self.maxs, dtype=np.float64)
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)
        if mins.shape != (len(FEATURE_NAMES),) or maxs.shape != mins.shape:
            raise ValueError("normalizer needs one (min, max) pair per feature")
        if np.any(maxs < mins):
            raise ValueError("feature max below min")
        degenerate = self.degenerate
        if degenerate is None:
            degenerate = maxs == mins
        object.__setattr__(self, "degenerate", np.asarray(degenerate, dtype=bool))

    def to_dict(self) -> dict:
        return {
            "version": NORMALIZER_VERSION,
            "features": {
                name: {
                    "min": float(self.mins[i]),
                    "max": float(self.maxs[i]),
                    "degenerate": bool(self.degenerate[i]),
                }
                for i, name in enumerate(FEATURE_NAMES)
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureNormalizer":
        if doc.get("version") != NORMALIZER_VERSION:
            raise ValueError(f"unknown normalizer version {doc.get('version')!r}")
        feats = doc["features"]
        mins = [feats[name]["min"] for name in FEATURE_NAMES]
        maxs = [feats[name]["max"] for name in FEATURE_NAMES]
        degen = [feats[name]["degenerate"] for name in FEATURE_NAMES]
        return cls(np.array(mins), np.array(maxs), np.array(degen))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "FeatureNormalizer":
        return cls.from_dict(json.loads(text))


def fit_normalizer(vectors) -> FeatureNormalizer:
    """Per-feature min/max over raw vectors. Needs at least two of them."""
    arrays = [v.as_array() if isinstance(v, TimbralVector) else np.asarray(v, dtype=np.float64)
              for v in vectors]
    if len(arrays) < 2:
        raise InsufficientDataError("normalizer needs at least 2 vectors")
    stacked = np.stack(arrays)
    return FeatureNormalizer(stacked.min(axis=0), stacked.max(axis=0))


def normalize(n: FeatureNormalizer, v: TimbralVector) -> TimbralVector:
    """(v - min) / (max - min) per feature, clamped to [0, 1]; degenerate -> 0.5."""
    raw = v.as_array()
    span = n.maxs - n.mins
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = (raw - n.mins) / span
    scaled = np.where(n.degenerate, 0.5, np.clip(scaled, 0.0, 1.0))
    return TimbralVector.from_array(scaled, normalized=True)


def denormalize(n: FeatureNormalizer, v: TimbralVector) -> TimbralVector:
    """Inverse of normalize on non-degenerate features; degenerate -> stored min."""
    scaled = v.as_array()
    raw = n.mins + scaled * (n.maxs - n.mins)
    raw = np.where(n.degenerate, n.mins, raw)
    return TimbralVector.from_array(raw, normalized=False)


def normalize_array(n: FeatureNormalizer, raw: np.ndarray) -> np.ndarray:
    """Array form of normalize for harness code paths."""
    return normalize(n, TimbralVector.from_array(raw)).as_array()


def set_feature(v: TimbralVector, index: int, value: float) -> TimbralVector:
    """Copy of v with one component replaced (canonical feature order)."""
    return replace(v, **{FEATURE_NAMES[index]: float(value)})

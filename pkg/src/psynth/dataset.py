"""Dataset construction: folder ingestion and the synthetic oracle generator.

A dataset directory holds one preprocessed WAV plus one JSON feature
sidecar per record and a `manifest.json` (version "dataset-v1") recording
preprocessing parameters, the fitted min-max normalizer and the record
list. Envelopes are not persisted; they are recomputed deterministically
from the stored waveforms on load.

The oracle generator synthesizes swept-sine drum hits (low sinusoid with
pitch sweep, decaying noise layer, onset click) whose descriptor values
move monotonically with known parameters; it provides desk-scale ground
truth for the extractors, the training loop and the coherence harness.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import audio_io
from .audio_io import Waveform
from .errors import InsufficientDataError, PsynthError
from .features import (
    Envelope,
    FeatureNormalizer,
    TimbralVector,
    envelope_follow,
    extract_timbral,
    fit_normalizer,
    normalize,
)

MANIFEST_VERSION = "dataset-v1"

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PreprocessParams:
    sample_rate: int = audio_io.TARGET_RATE
    length: int = audio_io.TARGET_LENGTH
    trim_db: float = audio_io.DEFAULT_TRIM_DB

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "PreprocessParams":
        return cls(**doc)


@dataclass(frozen=True)
class TrainingRecord:
    id: str
    x: Waveform
    e: Envelope
    fs_raw: TimbralVector
    fs: TimbralVector

    def validate(self, pp: PreprocessParams) -> None:
        if len(self.x) != pp.length or len(self.e) != pp.length:
            raise PsynthError(f"record {self.id}: waveform/envelope length != {pp.length}")
        if self.x.sample_rate != pp.sample_rate:
            raise PsynthError(f"record {self.id}: sample rate != {pp.sample_rate}")
        if not self.fs.normalized:
            raise PsynthError(f"record {self.id}: features not normalized")
        values = self.fs.as_array()
        if values.min() < 0.0 or values.max() > 1.0:
            raise PsynthError(f"record {self.id}: normalized features outside [0, 1]")


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    source: str
    features_raw: dict
    features: dict


@dataclass
class DatasetManifest:
    name: str
    preprocessing: PreprocessParams
    normalizer: FeatureNormalizer
    records: list

    def to_dict(self) -> dict:
        return {
            "version": MANIFEST_VERSION,
            "name": self.name,
            "preprocessing": self.preprocessing.to_dict(),
            "normalizer": self.normalizer.to_dict(),
            "records": [asdict(r) for r in self.records],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DatasetManifest":
        if doc.get("version") != MANIFEST_VERSION:
            raise PsynthError(f"unknown manifest version {doc.get('version')!r}")
        return cls(
            name=doc["name"],
            preprocessing=PreprocessParams.from_dict(doc["preprocessing"]),
            normalizer=FeatureNormalizer.from_dict(doc["normalizer"]),
            records=[ManifestRecord(**r) for r in doc["records"]],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class OracleParams:
    """Knobs of the synthetic drum model."""

    f0: float
    pitch_sweep_depth: float = 0.0
    amp_decay_ms: float = 150.0
    noise_mix: float = 0.0
    noise_decay_ms: float = 80.0
    click_level: float = 0.0

    def __post_init__(self):
        if not 30.0 <= self.f0 <= 4000.0:
            raise ValueError("f0 must lie in [30, 4000] Hz")
        if self.amp_decay_ms <= 0 or self.noise_decay_ms <= 0:
            raise ValueError("decay times must be positive")
        if not 0.0 <= self.noise_mix <= 1.0:
            raise ValueError("noise_mix must lie in [0, 1]")
        if not 0.0 <= self.click_level <= 1.0:
            raise ValueError("click_level must lie in [0, 1]")
        if self.pitch_sweep_depth < 0:
            raise ValueError("pitch_sweep_depth must be non-negative")


def synth_oracle(p: OracleParams, n: int = 16000, sr: int = 16000, seed: int = 0) -> Waveform:
    """Swept-sine drum hit, peak-normalized to 0.9.

    body:  exp(-t / amp_decay) * sin(2*pi*phi),
           instantaneous frequency f0 * (1 + sweep * exp(-t / 10ms))
    noise: noise_mix * exp(-t / noise_decay) * white noise
    click: click_level * noise burst over the first 32 samples
    """
    rng = np.random.default_rng(seed)
    t = np.arange(n, dtype=np.float64)
    amp = np.exp(-t / (sr * p.amp_decay_ms * 1e-3))
    freq = p.f0 * (1.0 + p.pitch_sweep_depth * np.exp(-t / (0.01 * sr)))
    phase = np.cumsum(freq) / sr
    body = amp * np.sin(2.0 * np.pi * phase)

    noise_env = np.exp(-t / (sr * p.noise_decay_ms * 1e-3))
    noise = p.noise_mix * noise_env * rng.standard_normal(n)

    click = np.zeros(n)
    burst = min(32, n)
    click[:burst] = p.click_level * rng.uniform(-1.0, 1.0, burst)

    x = body + noise + click
    peak = np.max(np.abs(x))
    if peak > 0:
        x = 0.9 * x / peak
    return Waveform(x, sr)


def _preprocess(w: Waveform, pp: PreprocessParams) -> Waveform:
    w = audio_io.resample(w, pp.sample_rate)
    w = audio_io.trim_silence(w, pp.trim_db)
    return audio_io.pad_to_length(w, pp.length)


def _unique_id(stem: str, used: set) -> str:
    base = "".join(c if c.isalnum() or c in "-_" else "_" for c in stem) or "record"
    rid = base
    k = 2
    while rid in used:
        rid = f"{base}-{k}"
        k += 1
    used.add(rid)
    return rid


def _assemble(raw_items: list, name: str, pp: PreprocessParams, out: Path) -> DatasetManifest:
    """Fit the normalizer, persist records and manifest. raw_items: (id, source, Waveform, raw)."""
    if len(raw_items) < 2:
        raise InsufficientDataError(f"only {len(raw_items)} usable records")
    normalizer = fit_normalizer([raw for _, _, _, raw in raw_items])

    out.mkdir(parents=True, exist_ok=True)
    records = []
    for rid, source, wave, raw in raw_items:
        fs = normalize(normalizer, raw)
        audio_io.write_wav(wave, str(out / f"{rid}.wav"))
        sidecar = {
            "id": rid,
            "source": source,
            "features_raw": raw.as_dict(),
            "features": fs.as_dict(),
        }
        (out / f"{rid}.features.json").write_text(json.dumps(sidecar, indent=2) + "\n")
        records.append(ManifestRecord(rid, source, raw.as_dict(), fs.as_dict()))

    manifest = DatasetManifest(name, pp, normalizer, records)
    manifest.save(out / "manifest.json")
    return manifest


def ingest(src_dir: str | Path, out_dir: str | Path,
           pp: PreprocessParams = PreprocessParams(), name: str = "INGEST") -> DatasetManifest:
    """Turn a folder of one-shot WAVs into a dataset directory.

    Per file: load, mix to mono, resample, trim edge silence, pad/truncate,
    extract envelope and descriptors. Unreadable or silent files are logged
    and skipped; fewer than two survivors raises InsufficientDataError.
    """
    src = Path(src_dir)
    paths = sorted(p for p in src.iterdir() if p.suffix.lower() == ".wav")
    used: set = set()
    items = []
    for path in paths:
        try:
            wave, _ = audio_io.load_wav(str(path))
            wave = _preprocess(wave, pp)
            raw = extract_timbral(wave)
        except PsynthError as exc:
            log.warning("skipping %s: %s", path.name, exc)
            continue
        items.append((_unique_id(path.stem, used), str(path), wave, raw))
    return _assemble(items, name, pp, Path(out_dir))


ORACLE_F0_RANGE = (40.0, 2000.0)
ORACLE_DECAY_RANGE_MS = (30.0, 500.0)
ORACLE_SWEEP_RANGE = (0.0, 2.0)
ORACLE_CLICK_RANGE = (0.0, 0.5)


def sample_oracle_params(rng: np.random.Generator) -> OracleParams:
    """Documented sampling ranges: f0 log-uniform, the rest uniform."""
    lo, hi = ORACLE_F0_RANGE
    return OracleParams(
        f0=float(np.exp(rng.uniform(math.log(lo), math.log(hi)))),
        pitch_sweep_depth=float(rng.uniform(*ORACLE_SWEEP_RANGE)),
        amp_decay_ms=float(rng.uniform(*ORACLE_DECAY_RANGE_MS)),
        noise_mix=float(rng.uniform(0.0, 1.0)),
        noise_decay_ms=float(rng.uniform(*ORACLE_DECAY_RANGE_MS)),
        click_level=float(rng.uniform(*ORACLE_CLICK_RANGE)),
    )


def build_oracle_dataset(count: int, seed: int, out_dir: str | Path,
                         pp: PreprocessParams = PreprocessParams()) -> DatasetManifest:
    """Generate `count` oracle drums through the full ingest transform."""
    if count < 8:
        raise InsufficientDataError("oracle dataset needs at least 8 records")
    rng = np.random.default_rng(seed)
    items = []
    used: set = set()
    for i in range(count):
        params = sample_oracle_params(rng)
        wave = synth_oracle(params, n=pp.length, sr=pp.sample_rate, seed=seed * 1_000_003 + i)
        wave = _preprocess(wave, pp)
        raw = extract_timbral(wave)
        rid = _unique_id(f"oracle-{i:04d}", used)
        items.append((rid, json.dumps(asdict(params), sort_keys=True), wave, raw))
    return _assemble(items, "ORACLE", pp, Path(out_dir))


def load_record(dataset_dir: str | Path, entry: ManifestRecord,
                pp: PreprocessParams) -> TrainingRecord:
    wave, _ = audio_io.load_wav(str(Path(dataset_dir) / f"{entry.id}.wav"))
    env = envelope_follow(wave)
    record = TrainingRecord(
        id=entry.id,
        x=wave,
        e=env,
        fs_raw=TimbralVector.from_dict(entry.features_raw),
        fs=TimbralVector.from_dict(entry.features, normalized=True),
    )
    record.validate(pp)
    return record


def load_dataset(dataset_dir: str | Path) -> tuple[DatasetManifest, list]:
    """Read a dataset directory back; every record is validated on load."""
    root = Path(dataset_dir)
    manifest = DatasetManifest.load(root / "manifest.json")
    records = [load_record(root, entry, manifest.preprocessing) for entry in manifest.records]
    return manifest, records


def split(manifest: DatasetManifest, train_fraction: float = 0.9,
          seed: int = 0) -> tuple[list, list]:
    """Deterministic shuffled partition into ceil(fraction * N) train ids and the rest."""
    ids = [r.id for r in manifest.records]
    if len(ids) < 2:
        raise InsufficientDataError("need at least 2 records to split")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ids))
    n_train = math.ceil(train_fraction * len(ids))
    train = [ids[i] for i in perm[:n_train]]
    evald = [ids[i] for i in perm[n_train:]]
    return train, evald

"""Deterministic audio I/O and preprocessing.

Reads and writes RIFF/WAVE files (16-bit PCM and 32-bit IEEE float input,
16-bit PCM mono output) and provides the canonical preprocessing steps:
mono mixdown, band-limited resampling, silence trimming and length
normalization. Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    ClippingWarning,
    CorruptFileError,
    NoSignalError,
    TruncationWarning,
    UnsupportedFormatError,
)

TARGET_RATE = 16000
TARGET_LENGTH = 16000
DEFAULT_TRIM_DB = -60.0

_TRIM_WINDOW = 64
_RESAMPLE_TAPS = 64
_KAISER_BETA = 8.0


@dataclass(frozen=True)
class Waveform:
    """Mono audio buffer. Canonical training form: 16000 samples at 16 kHz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1:
            raise ValueError("Waveform samples must be one-dimensional")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class AudioFileMeta:
    path: str
    original_rate: int
    original_length: int
    channels: int


def _read_chunks(raw: bytes):
    """Yield (chunk id, payload) while validating RIFF structure."""
    if len(raw) < 12:
        raise CorruptFileError("file shorter than a RIFF header")
    if raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise UnsupportedFormatError("not a RIFF/WAVE file")
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos : pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise CorruptFileError(f"chunk {cid!r} truncated ({len(body)} of {size} bytes)")
        yield cid, body
        pos += 8 + size + (size & 1)  # chunks are word-aligned


def load_wav(path: str) -> tuple[Waveform, AudioFileMeta]:
    """Load a WAV file as a mono float waveform in [-1, 1].

    Multichannel audio is mixed down by the arithmetic channel mean.
    16-bit integers are scaled by 1/32768; float data with peak above 1
    is scaled down to peak 1.

    Raises UnsupportedFormatError for non-PCM/float codecs and
    CorruptFileError for structurally damaged files.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    return decode_wav(raw, path=str(path))


def decode_wav(raw: bytes, path: str = "<memory>") -> tuple[Waveform, AudioFileMeta]:
    """In-memory variant of load_wav over raw RIFF/WAVE bytes."""
    fmt = None
    data = None
    for cid, body in _read_chunks(raw):
        if cid == b"fmt ":
            if len(body) < 16:
                raise CorruptFileError("fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            data = body
    if fmt is None or data is None:
        raise CorruptFileError("missing fmt or data chunk")

    audio_format, channels, rate, _, block_align, bits = fmt
    if channels < 1:
        raise CorruptFileError("fmt chunk declares zero channels")
    if audio_format == 1 and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif audio_format == 3 and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise UnsupportedFormatError(
            f"unsupported codec (format tag {audio_format}, {bits}-bit); "
            "expected 16-bit PCM or 32-bit IEEE float"
        )

    frame_bytes = channels * dtype.itemsize
    if block_align and block_align != frame_bytes:
        raise CorruptFileError("block alignment inconsistent with format")
    if len(data) % frame_bytes:
        data = data[: len(data) - len(data) % frame_bytes]
    flat = np.frombuffer(data, dtype=dtype).astype(np.float64) * scale
    frames = flat.reshape(-1, channels)
    mono = frames.mean(axis=1)

    if not np.all(np.isfinite(mono)):
        raise CorruptFileError("file contains non-finite samples")
    peak = np.max(np.abs(mono)) if len(mono) else 0.0
    if peak > 1.0:
        mono = mono / peak

    meta = AudioFileMeta(
        path=str(path),
        original_rate=int(rate),
        original_length=frames.shape[0],
        channels=int(channels),
    )
    return Waveform(mono, int(rate)), meta


def encode_wav(w: Waveform) -> bytes:
    """Encode as 16-bit PCM mono RIFF/WAVE bytes. Out-of-range samples are clipped."""
    samples = np.asarray(w.samples, dtype=np.float64)
    if len(samples) and np.max(np.abs(samples)) > 1.0:
        warnings.warn("samples outside [-1, 1] clipped on write", ClippingWarning)
        samples = np.clip(samples, -1.0, 1.0)
    ints = np.clip(np.round(samples * 32768.0), -32768, 32767).astype("<i2")
    data = ints.tobytes()

    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(data),
        b"WAVE",
        b"fmt ",
        16,
        1,  # PCM
        1,  # mono
        w.sample_rate,
        w.sample_rate * 2,
        2,
        16,
        b"data",
        len(data),
    )
    return header + data


def write_wav(w: Waveform, path: str) -> None:
    """Write 16-bit PCM mono RIFF/WAVE to disk."""
    data = encode_wav(w)
    with open(path, "wb") as fh:
        fh.write(data)


def resample(w: Waveform, target_rate: int) -> Waveform:
    """Band-limited resampling with a 64-tap Kaiser-windowed sinc kernel.

    Output length is round(len * target / original). Identity when the
    rates already match.
    """
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == w.sample_rate or len(w) == 0:
        return Waveform(w.samples.copy(), target_rate if len(w) == 0 else w.sample_rate)

    ratio = target_rate / w.sample_rate
    out_len = int(round(len(w) * ratio))
    if out_len == 0:
        return Waveform(np.zeros(0), target_rate)

    half = _RESAMPLE_TAPS // 2
    cutoff = min(1.0, ratio)  # relative to the input Nyquist
    centers = np.arange(out_len) / ratio
    base = np.floor(centers).astype(int)
    offsets = np.arange(-half + 1, half + 1)
    idx = base[:, None] + offsets[None, :]
    frac = centers[:, None] - idx

    taps = cutoff * np.sinc(cutoff * frac)
    window_arg = frac / half
    window = np.where(
        np.abs(window_arg) <= 1.0,
        np.i0(_KAISER_BETA * np.sqrt(np.clip(1.0 - window_arg**2, 0.0, 1.0))) / np.i0(_KAISER_BETA),
        0.0,
    )
    taps = taps * window
    taps /= taps.sum(axis=1, keepdims=True)  # exact DC gain

    padded = np.concatenate([np.zeros(half), w.samples, np.zeros(half + 1)])
    gathered = padded[idx + half]
    out = np.einsum("ij,ij->i", gathered, taps)
    return Waveform(out, target_rate)


def _moving_rms(x: np.ndarray, window: int) -> np.ndarray:
    """RMS over trailing windows of at most `window` samples, one per sample."""
    sq = np.concatenate([[0.0], np.cumsum(x**2)])
    n = len(x)
    starts = np.maximum(np.arange(n) - window + 1, 0)
    ends = np.arange(n) + 1
    return np.sqrt((sq[ends] - sq[starts]) / (ends - starts))


def trim_silence(w: Waveform, threshold_db: float = DEFAULT_TRIM_DB) -> Waveform:
    """Remove leading/trailing stretches whose windowed RMS stays under threshold.

    A sample opens the signal once the 64-sample RMS window ending at it
    crosses the threshold, and closes it symmetrically from the other end.
    Interior silence is preserved. Raises NoSignalError when nothing crosses.
    """
    if threshold_db >= 0:
        raise ValueError("threshold_db must be negative (dB relative to full scale)")
    if len(w) == 0:
        raise NoSignalError("empty waveform")

    window = min(_TRIM_WINDOW, len(w))
    thr = 10.0 ** (threshold_db / 20.0)
    lead = _moving_rms(w.samples, window)
    trail = _moving_rms(w.samples[::-1], window)[::-1]

    above_lead = np.nonzero(lead >= thr)[0]
    above_trail = np.nonzero(trail >= thr)[0]
    if len(above_lead) == 0 or len(above_trail) == 0:
        raise NoSignalError(f"no window reaches {threshold_db:.1f} dBFS")
    start = int(above_lead[0])
    end = int(above_trail[-1])
    return Waveform(w.samples[start : end + 1].copy(), w.sample_rate)


def pad_to_length(w: Waveform, n: int) -> Waveform:
    """Zero-pad at the end to exactly n samples; longer input is tail-truncated."""
    if n <= 0:
        raise ValueError("target length must be positive")
    if len(w) == n:
        return w
    if len(w) > n:
        warnings.warn(f"waveform of {len(w)} samples truncated to {n}", TruncationWarning)
        return Waveform(w.samples[:n].copy(), w.sample_rate)
    out = np.zeros(n)
    out[: len(w)] = w.samples
    return Waveform(out, w.sample_rate)

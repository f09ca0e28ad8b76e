"""Training objectives: L1 waveform loss plus STFT magnitude losses.

Three modes:

* WAVE - mean absolute waveform error alone
* FULL - WAVE plus lambda times the full-band STFT magnitude L1
* HIGH - WAVE plus lambda times the STFT magnitude L1 restricted to bins
  at or above `high_cut_bin` (default 40, i.e. 625 Hz at 16 kHz / 1024)

The STFT uses Hann-windowed 1024-sample frames hopped by 512 with no
centering, so a 16000-sample input yields exactly 30 frames of 513 bins.
All functions accept torch tensors shaped (time,) or (batch, time) and stay
differentiable; numpy arrays are converted on the way in.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
import torch

from .errors import ShapeMismatchError

MODES = ("wave", "high", "full")


@dataclass(frozen=True)
class LossConfig:
    mode: str = "full"
    lambda_weight: float = 0.5
    stft_frame: int = 1024
    stft_hop: int = 512
    high_cut_bin: int = 40

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.lambda_weight < 0:
            raise ValueError("lambda_weight must be non-negative")
        if not 0 <= self.high_cut_bin <= self.stft_frame // 2:
            raise ValueError("high_cut_bin must lie within the one-sided spectrum")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "LossConfig":
        return cls(**doc)


@dataclass(frozen=True)
class Spectrogram:
    """Magnitude spectrogram, (frames, bins) or (batch, frames, bins)."""

    magnitudes: torch.Tensor
    frame: int
    hop: int

    def numpy(self) -> np.ndarray:
        return self.magnitudes.detach().cpu().numpy()


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    if hasattr(x, "samples"):  # Waveform
        x = x.samples
    return torch.as_tensor(np.asarray(x), dtype=torch.float32)


def stft_mag(x, frame: int = 1024, hop: int = 512) -> Spectrogram:
    """Magnitude STFT: Hann window, no centering, floor((len - frame) / hop) + 1 frames."""
    t = _as_tensor(x)
    squeeze = t.dim() == 1
    if squeeze:
        t = t.unsqueeze(0)
    if t.shape[-1] < frame:
        raise ShapeMismatchError(f"signal of {t.shape[-1]} samples shorter than frame {frame}")
    window = torch.hann_window(frame, periodic=True, dtype=t.dtype)
    frames = t.unfold(-1, frame, hop) * window
    mags = torch.fft.rfft(frames, dim=-1).abs()
    if squeeze:
        mags = mags.squeeze(0)
    return Spectrogram(mags, frame, hop)


def l1_recon(x_hat, x) -> torch.Tensor:
    """Mean absolute sample error over all elements (Eq. of the plain waveform loss)."""
    a, b = _as_tensor(x_hat), _as_tensor(x)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"waveform shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    return (a - b).abs().mean()


def stft_loss(x_hat, x, cfg: LossConfig = LossConfig()) -> torch.Tensor:
    """Mean absolute magnitude-spectrogram error; HIGH mode keeps bins >= high_cut_bin."""
    a, b = _as_tensor(x_hat), _as_tensor(x)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"waveform shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    mag_a = stft_mag(a, cfg.stft_frame, cfg.stft_hop).magnitudes
    mag_b = stft_mag(b, cfg.stft_frame, cfg.stft_hop).magnitudes
    if cfg.mode == "high":
        mag_a = mag_a[..., cfg.high_cut_bin :]
        mag_b = mag_b[..., cfg.high_cut_bin :]
    return (mag_a - mag_b).abs().mean()


def total_loss(x_hat, x, cfg: LossConfig = LossConfig()) -> torch.Tensor:
    """WAVE: L1 alone. FULL/HIGH: L1 plus lambda times the (band-limited) STFT loss."""
    recon = l1_recon(x_hat, x)
    if cfg.mode == "wave":
        return recon
    return recon + cfg.lambda_weight * stft_loss(x_hat, x, cfg)


def loss_parts(x_hat, x, cfg: LossConfig) -> dict[str, float]:
    """Diagnostic breakdown used in failure reports."""
    parts = {"l1": float(l1_recon(x_hat, x))}
    if cfg.mode != "wave":
        parts["stft"] = float(stft_loss(x_hat, x, cfg))
    parts["total"] = parts["l1"] + cfg.lambda_weight * parts.get("stft", 0.0)
    return parts

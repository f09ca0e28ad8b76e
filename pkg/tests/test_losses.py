import numpy as np
import pytest
import torch

from psynth.errors import ShapeMismatchError
from psynth.losses import LossConfig, l1_recon, stft_loss, stft_mag, total_loss

SR = 16000


def naive_stft_mag(x: np.ndarray, frame: int = 1024, hop: int = 512) -> np.ndarray:
    """Direct per-frame DFT: the independent oracle."""
    window = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(frame) / frame)
    n_frames = (len(x) - frame) // hop + 1
    bins = frame // 2 + 1
    out = np.zeros((n_frames, bins))
    k = np.arange(frame)
    for f in range(n_frames):
        seg = x[f * hop : f * hop + frame] * window
        for b in range(bins):
            re = np.sum(seg * np.cos(-2 * np.pi * b * k / frame))
            im = np.sum(seg * np.sin(-2 * np.pi * b * k / frame))
            out[f, b] = np.hypot(re, im)
    return out


class TestStftMag:
    def test_zero_signal_shape(self):
        m = stft_mag(torch.zeros(16000))
        assert tuple(m.magnitudes.shape) == (30, 513)
        assert torch.all(m.magnitudes == 0)

    def test_sine_at_bin_64(self):
        t = np.arange(16000) / SR
        x = 0.8 * np.sin(2 * np.pi * 1000 * t)  # 1000 Hz = bin 64 exactly
        m = stft_mag(torch.tensor(x)).numpy()
        assert np.all(np.argmax(m, axis=1) == 64)

    def test_matches_naive_dft(self, rng):
        x = rng.uniform(-1, 1, 2048)
        ours = stft_mag(torch.tensor(x, dtype=torch.float64)).numpy()
        ref = naive_stft_mag(x)
        assert ours.shape == ref.shape == (3, 513)
        assert np.max(np.abs(ours - ref)) / np.max(ref) < 1e-5

    def test_too_short(self):
        with pytest.raises(ShapeMismatchError):
            stft_mag(torch.zeros(512))

    def test_differentiable(self):
        x = torch.randn(2048, requires_grad=True)
        m = stft_mag(x)
        m.magnitudes.sum().backward()
        assert x.grad is not None and torch.isfinite(x.grad).all()


class TestL1Recon:
    def test_identity(self, rng):
        x = torch.tensor(rng.uniform(-1, 1, 1000))
        assert float(l1_recon(x, x)) == 0.0

    def test_constant_offset(self):
        x = torch.zeros(500)
        assert float(l1_recon(x + 0.1, x)) == pytest.approx(0.1, abs=1e-7)

    def test_matches_scalar_loop(self, rng):
        a = rng.uniform(-1, 1, 257)
        b = rng.uniform(-1, 1, 257)
        expected = sum(abs(float(u) - float(v)) for u, v in zip(a, b)) / 257
        got = float(l1_recon(torch.tensor(a), torch.tensor(b)))
        assert got == pytest.approx(expected, abs=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            l1_recon(torch.zeros(10), torch.zeros(11))


class TestStftLoss:
    def test_identity_zero(self, rng):
        x = torch.tensor(rng.uniform(-1, 1, 4096))
        assert float(stft_loss(x, x)) == 0.0

    def test_high_band_ignores_low_sine(self):
        t = np.arange(16000) / SR
        low = torch.tensor(0.8 * np.sin(2 * np.pi * 100 * t), dtype=torch.float32)
        silence = torch.zeros(16000)
        full = float(stft_loss(low, silence, LossConfig(mode="full")))
        high = float(stft_loss(low, silence, LossConfig(mode="high")))
        assert high < 0.05 * full

    def test_high_band_sees_high_sine(self):
        t = np.arange(16000) / SR
        x = torch.tensor(0.8 * np.sin(2 * np.pi * 2000 * t), dtype=torch.float32)
        assert float(stft_loss(x, torch.zeros(16000), LossConfig(mode="high"))) > 0.01


class TestTotalLoss:
    def test_wave_mode_is_l1(self, rng):
        a = torch.tensor(rng.uniform(-1, 1, 2048))
        b = torch.tensor(rng.uniform(-1, 1, 2048))
        assert float(total_loss(a, b, LossConfig(mode="wave"))) == float(l1_recon(a, b))

    def test_full_combines_parts(self, rng):
        a = torch.tensor(rng.uniform(-1, 1, 2048))
        b = torch.tensor(rng.uniform(-1, 1, 2048))
        cfg = LossConfig(mode="full", lambda_weight=0.5)
        expected = float(l1_recon(a, b)) + 0.5 * float(stft_loss(a, b, cfg))
        assert float(total_loss(a, b, cfg)) == pytest.approx(expected, rel=1e-6)

    def test_lambda_zero_reduces_to_wave(self, rng):
        a = torch.tensor(rng.uniform(-1, 1, 2048))
        b = torch.tensor(rng.uniform(-1, 1, 2048))
        full0 = float(total_loss(a, b, LossConfig(mode="full", lambda_weight=0.0)))
        assert full0 == float(total_loss(a, b, LossConfig(mode="wave")))

    def test_self_loss_zero_all_modes(self, rng):
        x = torch.tensor(rng.uniform(-1, 1, 4096))
        for mode in ("wave", "high", "full"):
            assert float(total_loss(x, x, LossConfig(mode=mode))) <= 1e-6

    def test_nonnegative(self, rng):
        for _ in range(5):
            a = torch.tensor(rng.uniform(-1, 1, 2048))
            b = torch.tensor(rng.uniform(-1, 1, 2048))
            for mode in ("wave", "high", "full"):
                assert float(total_loss(a, b, LossConfig(mode=mode))) >= 0.0

    def test_batched_matches_mean_semantics(self, rng):
        a = torch.tensor(rng.uniform(-1, 1, (4, 2048)))
        b = torch.tensor(rng.uniform(-1, 1, (4, 2048)))
        batched = float(l1_recon(a, b))
        manual = np.mean([float(l1_recon(a[i], b[i])) for i in range(4)])
        assert batched == pytest.approx(manual, rel=1e-9)


class TestLossConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            LossConfig(mode="mel")
        with pytest.raises(ValueError):
            LossConfig(lambda_weight=-1)
        with pytest.raises(ValueError):
            LossConfig(high_cut_bin=1000)

    def test_round_trip(self):
        cfg = LossConfig(mode="high", lambda_weight=0.25)
        assert LossConfig.from_dict(cfg.to_dict()) == cfg

import numpy as np
import pytest
import torch

from psynth import net
from psynth.errors import (
    HashMismatchError,
    InvalidConfigError,
    NonFiniteError,
    ShapeMismatchError,
    VersionMismatchError,
)
from psynth.features import FeatureNormalizer
from psynth.net import (
    ModelConfig,
    build,
    conv1d,
    forward,
    forward_batch,
    gradient_check,
    layer_shapes,
    linear_upsample_x2,
    load_checkpoint,
    make_conditioning,
    paper_config,
    save_checkpoint,
    tiny_config,
)


def naive_conv1d(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int) -> np.ndarray:
    """Nested-loop convolution with the same same-ceil padding rule."""
    cin, t = x.shape
    cout, _, k = w.shape
    out_t = -(-t // stride)
    pad_total = max(0, (out_t - 1) * stride + k - t)
    left = pad_total // 2
    padded = np.zeros((cin, t + pad_total))
    padded[:, left : left + t] = x
    out = np.zeros((cout, out_t))
    for oc in range(cout):
        for ot in range(out_t):
            acc = b[oc]
            for ic in range(cin):
                for kk in range(k):
                    acc += padded[ic, ot * stride + kk] * w[oc, ic, kk]
            out[oc, ot] = acc
    return out


class TestConv1d:
    def test_identity_kernel(self, rng):
        x = torch.tensor(rng.uniform(-1, 1, (1, 16)), dtype=torch.float64)
        w = torch.ones(1, 1, 1, dtype=torch.float64)
        out = conv1d(x, w, torch.zeros(1, dtype=torch.float64), stride=1)
        assert torch.allclose(out, x)

    def test_stride_two_halves_time(self):
        x = torch.zeros(3, 8)
        w = torch.zeros(5, 3, 5)
        out = conv1d(x, w, torch.zeros(5), stride=2)
        assert tuple(out.shape) == (5, 4)

    def test_matches_nested_loop_oracle(self, rng):
        for stride in (1, 2):
            x = rng.uniform(-1, 1, (2, 16))
            w = rng.uniform(-1, 1, (3, 2, 5))
            b = rng.uniform(-1, 1, 3)
            ours = conv1d(
                torch.tensor(x, dtype=torch.float64),
                torch.tensor(w, dtype=torch.float64),
                torch.tensor(b, dtype=torch.float64),
                stride=stride,
            ).numpy()
            ref = naive_conv1d(x, w, b, stride)
            assert np.max(np.abs(ours - ref)) < 1e-6

    def test_channel_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            conv1d(torch.zeros(2, 8), torch.zeros(4, 3, 5), None)


class TestLinearUpsample:
    def test_interpolation_definition(self):
        out = linear_upsample_x2(torch.tensor([[1.0, 3.0]]))
        assert torch.equal(out, torch.tensor([[1.0, 2.0, 3.0, 3.0]]))

    def test_constant_invariance(self):
        x = torch.full((2, 7), 0.42)
        out = linear_upsample_x2(x)
        assert torch.all(out == 0.42)
        assert tuple(out.shape) == (2, 14)

    def test_gradient_matches_finite_differences(self, rng):
        x = torch.tensor(rng.uniform(-1, 1, (1, 4)), dtype=torch.float64, requires_grad=True)
        weights = torch.tensor(rng.uniform(-1, 1, (1, 8)), dtype=torch.float64)
        (linear_upsample_x2(x) * weights).sum().backward()
        eps = 1e-6
        for i in range(4):
            with torch.no_grad():
                xp = x.detach().clone()
                xp[0, i] += eps
                hi = float((linear_upsample_x2(xp) * weights).sum())
                xp[0, i] -= 2 * eps
                lo = float((linear_upsample_x2(xp) * weights).sum())
            numeric = (hi - lo) / (2 * eps)
            analytic = float(x.grad[0, i])
            assert abs(analytic - numeric) / max(abs(analytic), 1e-8) < 1e-4


class TestModelConfig:
    def test_paper_channel_progression(self):
        cfg = paper_config()
        assert [cfg.channels(layer) for layer in range(0, 4)] == [8, 32, 32, 32]
        assert cfg.channels(15) == 512
        assert cfg.bottleneck_channels == 512
        assert cfg.bottleneck_length == 1

    def test_invalid_configs(self):
        with pytest.raises(InvalidConfigError):
            ModelConfig(internal_length=1000)  # not a power of two
        with pytest.raises(InvalidConfigError):
            ModelConfig(encoder_layers=16, internal_length=32768)
        with pytest.raises(InvalidConfigError):
            ModelConfig(output_length=40000)
        with pytest.raises(InvalidConfigError):
            ModelConfig(encoder_layers=0)


class TestBuild:
    def test_small_param_count_closed_form(self):
        cfg = ModelConfig(encoder_layers=3, base_filters=4, internal_length=64,
                          output_length=60)
        params = build(cfg)
        assert [cfg.channels(layer) for layer in (1, 2, 3)] == [4, 4, 4]
        # hand count: encoder 4*8*5+4, 4*4*5+4, 4*4*5+4; decoder (4+4)->4 twice,
        # (4+8)->8 once; final 8->1
        expected = (164 + 84 + 84) + (164 + 164 + 488) + 41
        assert params.num_params() == expected

    def test_deterministic(self):
        a, b = build(tiny_config(seed=9)), build(tiny_config(seed=9))
        for ta, tb in zip(a.tensors(), b.tensors()):
            assert torch.equal(ta, tb)
        c = build(tiny_config(seed=10))
        assert not torch.equal(next(a.tensors()), next(c.tensors()))

    def test_layer_shapes_consistent(self):
        cfg = tiny_config()
        params = build(cfg)
        shapes = dict(layer_shapes(cfg))
        for name, tensor in params.named_tensors():
            assert tuple(tensor.shape) == shapes[name]


class TestForward:
    def test_tiny_activation_lengths(self):
        cfg = ModelConfig(encoder_layers=3, base_filters=4, internal_length=64,
                          output_length=60)
        params = build(cfg)
        out, hidden = forward_batch(params, cfg, torch.rand(1, 64), torch.rand(1, 7),
                                    return_hidden=True)
        assert [h.shape[-1] for h in hidden[1:]] == [32, 16, 8]
        assert out.shape == (1, 60)

    def test_zero_params_zero_output(self):
        cfg = tiny_config()
        params = build(cfg)
        for t in params.tensors():
            t.zero_()
        out = forward_batch(params, cfg, torch.rand(1, cfg.internal_length),
                            torch.rand(1, 7))
        assert torch.all(out == 0.0)

    def test_paper_shape_and_bounds(self):
        cfg = paper_config()
        params = build(cfg)
        out, hidden = forward_batch(params, cfg, torch.rand(1, cfg.internal_length),
                                    torch.rand(1, 7), return_hidden=True)
        assert out.shape == (1, 16000)
        assert tuple(hidden[-1].shape[1:]) == (512, 1)
        assert torch.all(out.abs() < 1.0)

    def test_deterministic(self):
        cfg = tiny_config()
        params = build(cfg)
        env, feats = torch.rand(2, cfg.internal_length), torch.rand(2, 7)
        assert torch.equal(forward_batch(params, cfg, env, feats),
                           forward_batch(params, cfg, env, feats))

    def test_feature_wiring_sensitivity(self):
        cfg = tiny_config()
        params = build(cfg)
        env = torch.rand(1, cfg.internal_length)
        base_feats = torch.full((1, 7), 0.5)
        base = forward_batch(params, cfg, env, base_feats)
        for i in range(7):
            bumped = base_feats.clone()
            bumped[0, i] = 0.9
            out = forward_batch(params, cfg, env, bumped)
            assert float((out - base).abs().sum()) > 0.0

    def test_shape_guards(self):
        cfg = tiny_config()
        params = build(cfg)
        with pytest.raises(ShapeMismatchError):
            forward_batch(params, cfg, torch.rand(1, 999), torch.rand(1, 7))
        with pytest.raises(ShapeMismatchError):
            forward_batch(params, cfg, torch.rand(1, cfg.internal_length), torch.rand(1, 6))

    def test_nonfinite_params_rejected(self):
        cfg = tiny_config()
        params = build(cfg)
        params.final[0][0, 0, 0] = float("nan")
        with pytest.raises(NonFiniteError):
            forward_batch(params, cfg, torch.rand(1, cfg.internal_length), torch.rand(1, 7))


class TestConditioning:
    def test_pads_envelope(self):
        cfg = tiny_config()
        cond = make_conditioning(np.ones(1000), np.full(7, 0.5), cfg)
        assert len(cond.envelope) == cfg.internal_length
        assert np.all(cond.envelope[1000:] == 0)

    def test_validates_ranges(self):
        cfg = tiny_config()
        with pytest.raises(ValueError):
            make_conditioning(np.full(100, 2.0), np.full(7, 0.5), cfg)
        with pytest.raises(ShapeMismatchError):
            make_conditioning(np.ones(100), np.full(6, 0.5), cfg)

    def test_forward_single(self):
        cfg = tiny_config()
        params = build(cfg)
        cond = make_conditioning(np.ones(2048), np.full(7, 0.5), cfg)
        wave = forward(params, cfg, cond)
        assert len(wave) == cfg.output_length
        assert np.max(np.abs(wave.samples)) < 1.0


class TestCheckpoint:
    def _normalizer(self):
        return FeatureNormalizer(np.zeros(7), np.arange(1.0, 8.0))

    def test_round_trip_bit_identical_forward(self, tmp_path):
        cfg = tiny_config(seed=4)
        params = build(cfg)
        path = str(tmp_path / "m.ckpt")
        digest = save_checkpoint(params, cfg, self._normalizer(), path,
                                 loss={"mode": "full"})
        ckpt = load_checkpoint(path)
        assert ckpt.content_hash == digest
        assert ckpt.config == cfg
        assert ckpt.loss == {"mode": "full"}
        assert np.array_equal(ckpt.normalizer.maxs, np.arange(1.0, 8.0))
        env, feats = torch.rand(1, cfg.internal_length), torch.rand(1, 7)
        assert torch.equal(forward_batch(params, cfg, env, feats),
                           forward_batch(ckpt.params, cfg, env, feats))

    def test_resave_identical_bytes(self, tmp_path):
        cfg = tiny_config()
        params = build(cfg)
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(params, cfg, None, str(p1))
        ckpt = load_checkpoint(str(p1))
        save_checkpoint(ckpt.params, ckpt.config, ckpt.normalizer, str(p2))
        assert p1.read_bytes() == p2.read_bytes()

    def test_truncated_payload(self, tmp_path):
        cfg = tiny_config()
        path = tmp_path / "t.ckpt"
        save_checkpoint(build(cfg), cfg, None, str(path))
        raw = path.read_bytes()
        path.write_bytes(raw[:-40])
        with pytest.raises(HashMismatchError):
            load_checkpoint(str(path))

    def test_config_mismatch(self, tmp_path):
        cfg = tiny_config()
        path = str(tmp_path / "k.ckpt")
        save_checkpoint(build(cfg), cfg, None, path)
        other = ModelConfig(encoder_layers=4, base_filters=4, internal_length=2048,
                            output_length=2048)
        with pytest.raises(ShapeMismatchError):
            load_checkpoint(path, expected_config=other)

    def test_version_guard(self, tmp_path):
        import json
        import struct

        cfg = tiny_config()
        path = tmp_path / "v.ckpt"
        save_checkpoint(build(cfg), cfg, None, str(path))
        raw = path.read_bytes()
        (hlen,) = struct.unpack_from("<I", raw, 4)
        header = json.loads(raw[8 : 8 + hlen])
        header["version"] = "ckpt-v9"
        hb = json.dumps(header, sort_keys=True).encode()
        path.write_bytes(raw[:4] + struct.pack("<I", len(hb)) + hb + raw[8 + hlen :])
        with pytest.raises(VersionMismatchError):
            load_checkpoint(str(path))


class TestGradientCheck:
    @pytest.mark.parametrize("mode", ["wave", "high", "full"])
    def test_all_modes_pass(self, mode):
        report = gradient_check(tiny_config(), mode, eps=1e-4, n_params=50, seed=0)
        assert report.max_rel_err < 1e-3

    def test_zero_inputs_zero_gradients(self):
        cfg = tiny_config()
        report = gradient_check(
            cfg, "full", eps=1e-4, n_params=20, seed=0,
            env=torch.zeros(1, cfg.internal_length, dtype=torch.float64),
            feats=torch.zeros(1, 7, dtype=torch.float64),
            target=torch.zeros(1, cfg.output_length, dtype=torch.float64),
        )
        assert report.max_abs_analytic == pytest.approx(0.0, abs=1e-12)
        assert report.max_rel_err < 1e-3

    def test_rejects_large_configs(self):
        with pytest.raises(InvalidConfigError):
            gradient_check(paper_config(), "wave")

    def test_rejects_bad_eps(self):
        with pytest.raises(ValueError):
            gradient_check(tiny_config(), "wave", eps=0.0)

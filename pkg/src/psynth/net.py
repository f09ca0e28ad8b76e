"""The conditioned encoder-decoder waveform network.

The generator takes a per-sample energy envelope plus seven timbral
features (broadcast across time as constant channels), downsamples through
K stride-2 convolutions to a low-dimensional embedding, then upsamples
back with linear interpolation followed by stride-1 convolutions, with
skip concatenation between matching encoder/decoder levels. A final
length-5 convolution and tanh produce the bounded output waveform.

Channel widths start at `base_filters` and double every
`filters_double_every` encoder layers; with the reference configuration
(K=15, base 32) the bottleneck is 512 channels by 1 time step. The 16000
sample canonical length does not halve 15 times exactly, so conditioning
is zero-padded to `internal_length` (a power of two) and the output is
cropped back to `output_length`.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, asdict, field

import numpy as np
import torch
import torch.nn.functional as F

from .audio_io import Waveform
from .errors import (
    CorruptFileError,
    HashMismatchError,
    InvalidConfigError,
    NonFiniteError,
    ShapeMismatchError,
    VersionMismatchError,
)
from .features import Envelope, FeatureNormalizer, TimbralVector

CHECKPOINT_VERSION = "ckpt-v1"
_MAGIC = b"PSYN"


@dataclass(frozen=True)
class ModelConfig:
    encoder_layers: int = 15
    base_filters: int = 32
    filter_length: int = 5
    filters_double_every: int = 3
    feature_count: int = 7
    internal_length: int = 32768
    output_length: int = 16000
    leaky_slope: float = 0.2
    seed: int = 0

    def __post_init__(self):
        k = self.encoder_layers
        if k < 1 or self.base_filters < 1 or self.filter_length < 1:
            raise InvalidConfigError("layer count, filters and filter length must be >= 1")
        if self.filters_double_every < 1 or self.feature_count < 0:
            raise InvalidConfigError("invalid doubling cadence or feature count")
        n = self.internal_length
        if n < 1 or (n & (n - 1)) != 0:
            raise InvalidConfigError("internal_length must be a power of two")
        if n % (1 << k) != 0:
            raise InvalidConfigError(
                f"internal_length {n} not divisible by 2^{k}; encoder cannot halve exactly"
            )
        if not 1 <= self.output_length <= n:
            raise InvalidConfigError("output_length must lie in [1, internal_length]")

    def channels(self, layer: int) -> int:
        """Channel count entering layer `layer+1`; layer 0 is the conditioning input."""
        if layer == 0:
            return 1 + self.feature_count
        return self.base_filters * (1 << ((layer - 1) // self.filters_double_every))

    @property
    def bottleneck_channels(self) -> int:
        return self.channels(self.encoder_layers)

    @property
    def bottleneck_length(self) -> int:
        return self.internal_length >> self.encoder_layers

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        return cls(**doc)


def paper_config(seed: int = 0) -> ModelConfig:
    """The reference architecture: 15 layers, base 32, 512x1 bottleneck."""
    return ModelConfig(seed=seed)


def desk_config(seed: int = 0) -> ModelConfig:
    """Reduced model for CPU-scale experiments."""
    return ModelConfig(encoder_layers=9, base_filters=16, internal_length=16384, seed=seed)


def tiny_config(seed: int = 0) -> ModelConfig:
    """Smallest config that still supports the 1024-sample STFT losses."""
    return ModelConfig(
        encoder_layers=3,
        base_filters=4,
        internal_length=2048,
        output_length=2048,
        seed=seed,
    )


def small_config(seed: int = 0) -> ModelConfig:
    return ModelConfig(
        encoder_layers=5,
        base_filters=8,
        internal_length=4096,
        output_length=4096,
        seed=seed,
    )


def smoke_config(seed: int = 0) -> ModelConfig:
    """Shallow full-length model used by the overfit smoke test."""
    return ModelConfig(encoder_layers=5, base_filters=16, internal_length=16384, seed=seed)


@dataclass
class Parameters:
    """Convolution kernels and biases. Weights use (out_ch, in_ch, k) layout.

    `decoder[0]` is the deepest stage (applied first, at the bottleneck);
    `decoder[-1]` produces the full-resolution pre-projection activation.
    """

    encoder: list = field(default_factory=list)
    decoder: list = field(default_factory=list)
    final: tuple = ()

    def named_tensors(self):
        for i, (w, b) in enumerate(self.encoder):
            yield f"enc.{i}.weight", w
            yield f"enc.{i}.bias", b
        for i, (w, b) in enumerate(self.decoder):
            yield f"dec.{i}.weight", w
            yield f"dec.{i}.bias", b
        yield "final.weight", self.final[0]
        yield "final.bias", self.final[1]

    def tensors(self):
        for _, t in self.named_tensors():
            yield t

    def num_params(self) -> int:
        return sum(t.numel() for t in self.tensors())

    def all_finite(self) -> bool:
        return all(bool(torch.isfinite(t).all()) for t in self.tensors())

    def clone(self, dtype: torch.dtype | None = None) -> "Parameters":
        def c(t):
            t = t.detach().clone()
            return t.to(dtype) if dtype is not None else t

        return Parameters(
            encoder=[(c(w), c(b)) for w, b in self.encoder],
            decoder=[(c(w), c(b)) for w, b in self.decoder],
            final=(c(self.final[0]), c(self.final[1])),
        )

    def requires_grad_(self, flag: bool = True) -> "Parameters":
        for t in self.tensors():
            t.requires_grad_(flag)
        return self


def layer_shapes(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Canonical (name, shape) list; the checkpoint blob follows this order."""
    k = config.filter_length
    shapes: list[tuple[str, tuple[int, ...]]] = []
    for layer in range(1, config.encoder_layers + 1):
        out_ch, in_ch = config.channels(layer), config.channels(layer - 1)
        shapes.append((f"enc.{layer - 1}.weight", (out_ch, in_ch, k)))
        shapes.append((f"enc.{layer - 1}.bias", (out_ch,)))
    for i, level in enumerate(range(config.encoder_layers, 0, -1)):
        in_ch = config.channels(level) + config.channels(level - 1)
        out_ch = config.channels(level - 1)
        shapes.append((f"dec.{i}.weight", (out_ch, in_ch, k)))
        shapes.append((f"dec.{i}.bias", (out_ch,)))
    shapes.append(("final.weight", (1, config.channels(0), k)))
    shapes.append(("final.bias", (1,)))
    return shapes


def build(config: ModelConfig) -> Parameters:
    """Allocate parameters, Glorot-uniform kernels and zero biases, seeded."""
    gen = torch.Generator().manual_seed(config.seed)
    tensors: dict[str, torch.Tensor] = {}
    for name, shape in layer_shapes(config):
        if name.endswith("bias"):
            tensors[name] = torch.zeros(shape)
        else:
            out_ch, in_ch, k = shape
            bound = math.sqrt(6.0 / (in_ch * k + out_ch * k))
            tensors[name] = torch.empty(shape).uniform_(-bound, bound, generator=gen)

    params = Parameters()
    for layer in range(config.encoder_layers):
        params.encoder.append((tensors[f"enc.{layer}.weight"], tensors[f"enc.{layer}.bias"]))
    for i in range(config.encoder_layers):
        params.decoder.append((tensors[f"dec.{i}.weight"], tensors[f"dec.{i}.bias"]))
    params.final = (tensors["final.weight"], tensors["final.bias"])
    return params


def conv1d(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor | None = None,
           stride: int = 1) -> torch.Tensor:
    """1-D convolution with "same-ceil" zero padding: out time = ceil(time / stride).

    Total padding (out-1)*stride + k - time is split evenly, the odd sample
    going to the right. Accepts (channels, time) or (batch, channels, time).
    """
    squeeze = x.dim() == 2
    if squeeze:
        x = x.unsqueeze(0)
    if x.dim() != 3 or weight.dim() != 3:
        raise ShapeMismatchError("conv1d expects (batch, channels, time) input and 3-d kernels")
    if x.shape[1] != weight.shape[1]:
        raise ShapeMismatchError(
            f"input has {x.shape[1]} channels but kernel expects {weight.shape[1]}"
        )
    t = x.shape[-1]
    k = weight.shape[-1]
    out_t = -(-t // stride)
    pad_total = max(0, (out_t - 1) * stride + k - t)
    left = pad_total // 2
    x = F.pad(x, (left, pad_total - left))
    y = F.conv1d(x, weight, bias, stride=stride)
    return y.squeeze(0) if squeeze else y


def linear_upsample_x2(x: torch.Tensor) -> torch.Tensor:
    """Double the time axis: even slots copy, odd slots average neighbours
    (the last one repeats the end). Differentiable."""
    if x.shape[-1] < 1:
        raise ShapeMismatchError("cannot upsample an empty signal")
    nxt = torch.cat([x[..., 1:], x[..., -1:]], dim=-1)
    mid = (x + nxt) / 2.0
    stacked = torch.stack([x, mid], dim=-1)
    return stacked.reshape(*x.shape[:-1], x.shape[-1] * 2)


@dataclass(frozen=True)
class ConditioningInput:
    """Envelope padded to the network's internal length plus normalized features."""

    envelope: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        env = np.asarray(self.envelope, dtype=np.float32)
        feats = np.asarray(self.features, dtype=np.float32)
        object.__setattr__(self, "envelope", env)
        object.__setattr__(self, "features", feats)
        if env.min(initial=0.0) < 0.0 or env.max(initial=0.0) > 1.0:
            raise ValueError("envelope values must lie in [0, 1]")
        if feats.min(initial=0.0) < 0.0 or feats.max(initial=0.0) > 1.0:
            raise ValueError("features must be normalized to [0, 1]")


def make_conditioning(envelope, features, config: ModelConfig) -> ConditioningInput:
    """Pad an envelope to internal_length and pair it with a normalized feature vector."""
    if isinstance(envelope, Envelope):
        env = envelope.values
    else:
        env = np.asarray(envelope, dtype=np.float64)
    if len(env) > config.internal_length:
        raise ShapeMismatchError(
            f"envelope of {len(env)} samples exceeds internal length {config.internal_length}"
        )
    padded = np.zeros(config.internal_length, dtype=np.float32)
    padded[: len(env)] = env
    if isinstance(features, TimbralVector):
        if not features.normalized:
            raise ValueError("conditioning features must be normalized")
        feats = features.as_array()
    else:
        feats = np.asarray(features, dtype=np.float64)
    if feats.shape != (config.feature_count,):
        raise ShapeMismatchError(f"expected {config.feature_count} features, got {feats.shape}")
    return ConditioningInput(padded, feats.astype(np.float32))


def forward_batch(params: Parameters, config: ModelConfig, env: torch.Tensor,
                  feats: torch.Tensor, return_hidden: bool = False):
    """Batched forward pass. env: (B, internal_length), feats: (B, feature_count).

    Returns (B, output_length); with return_hidden also the list of encoder
    activations (index 0 is the conditioning tensor, last is the bottleneck).
    """
    if env.dim() != 2 or env.shape[-1] != config.internal_length:
        raise ShapeMismatchError(
            f"envelope batch must be (B, {config.internal_length}), got {tuple(env.shape)}"
        )
    if feats.shape != (env.shape[0], config.feature_count):
        raise ShapeMismatchError(f"feature batch shape {tuple(feats.shape)} inconsistent")
    if len(params.encoder) != config.encoder_layers or len(params.decoder) != config.encoder_layers:
        raise ShapeMismatchError("parameter stack depth does not match config")
    if not params.all_finite():
        raise NonFiniteError("parameters contain NaN or Inf")

    broadcast = feats.unsqueeze(-1).expand(-1, -1, config.internal_length)
    h = torch.cat([env.unsqueeze(1), broadcast], dim=1)
    hidden = [h]
    for w, b in params.encoder:
        h = F.leaky_relu(conv1d(h, w, b, stride=2), config.leaky_slope)
        hidden.append(h)
    for i, (w, b) in enumerate(params.decoder):
        h = linear_upsample_x2(h)
        skip = hidden[config.encoder_layers - i - 1]
        h = torch.cat([h, skip], dim=1)
        h = F.leaky_relu(conv1d(h, w, b, stride=1), config.leaky_slope)
    out = torch.tanh(conv1d(h, params.final[0], params.final[1], stride=1))
    out = out[:, 0, : config.output_length]
    if return_hidden:
        return out, hidden
    return out


def forward(params: Parameters, config: ModelConfig, cond: ConditioningInput,
            sample_rate: int = 16000) -> Waveform:
    """Single-shot synthesis from one conditioning input."""
    env = torch.as_tensor(cond.envelope, dtype=torch.float32).unsqueeze(0)
    feats = torch.as_tensor(cond.features, dtype=torch.float32).unsqueeze(0)
    with torch.no_grad():
        out = forward_batch(params, config, env, feats)
    return Waveform(out[0].numpy().astype(np.float64), sample_rate)


@dataclass
class Checkpoint:
    params: Parameters
    config: ModelConfig
    normalizer: FeatureNormalizer | None
    loss: dict | None
    meta: dict
    content_hash: str


def save_checkpoint(params: Parameters, config: ModelConfig,
                    normalizer: FeatureNormalizer | None, path: str,
                    loss: dict | None = None, meta: dict | None = None) -> str:
    """Write the self-describing container; returns the blob's SHA-256 hex digest.

    Layout: b"PSYN" | uint32 LE header length | JSON header | float32 LE blob.
    The header records config, normalizer, loss settings, tensor offsets and
    the blob hash. No timestamps: identical state gives identical bytes.
    """
    if not params.all_finite():
        raise NonFiniteError("refusing to checkpoint non-finite parameters")
    expected = dict(layer_shapes(config))
    chunks = []
    manifest = []
    offset = 0
    for name, tensor in params.named_tensors():
        if tuple(tensor.shape) != expected[name]:
            raise ShapeMismatchError(f"{name} has shape {tuple(tensor.shape)}, "
                                     f"config implies {expected[name]}")
        blob = tensor.detach().to(torch.float32).numpy().astype("<f4").tobytes()
        manifest.append({"name": name, "shape": list(tensor.shape),
                         "offset": offset, "nbytes": len(blob)})
        chunks.append(blob)
        offset += len(blob)
    blob = b"".join(chunks)
    digest = hashlib.sha256(blob).hexdigest()

    header = {
        "version": CHECKPOINT_VERSION,
        "config": config.to_dict(),
        "normalizer": normalizer.to_dict() if normalizer is not None else None,
        "loss": loss,
        "meta": meta or {},
        "tensors": manifest,
        "blob_sha256": digest,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(blob)
    return digest


def load_checkpoint(path: str, expected_config: ModelConfig | None = None) -> Checkpoint:
    """Read and validate a checkpoint container.

    Raises VersionMismatchError, HashMismatchError or ShapeMismatchError when
    the file disagrees with its own header or with `expected_config`.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8 or raw[:4] != _MAGIC:
        raise CorruptFileError("not a checkpoint container")
    (hlen,) = struct.unpack_from("<I", raw, 4)
    if len(raw) < 8 + hlen:
        raise CorruptFileError("checkpoint header truncated")
    try:
        header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFileError(f"unreadable checkpoint header: {exc}") from exc
    if header.get("version") != CHECKPOINT_VERSION:
        raise VersionMismatchError(f"unknown checkpoint version {header.get('version')!r}")

    blob = raw[8 + hlen :]
    digest = hashlib.sha256(blob).hexdigest()
    if digest != header["blob_sha256"]:
        raise HashMismatchError("checkpoint payload does not match its stored hash")

    config = ModelConfig.from_dict(header["config"])
    if expected_config is not None and config != expected_config:
        raise ShapeMismatchError("checkpoint config differs from the requested config")

    expected = dict(layer_shapes(config))
    tensors: dict[str, torch.Tensor] = {}
    for entry in header["tensors"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in expected or expected[name] != shape:
            raise ShapeMismatchError(f"tensor {name} with shape {shape} not implied by config")
        data = blob[entry["offset"] : entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(data, dtype="<f4").reshape(shape).copy()
        tensors[name] = torch.from_numpy(arr)
    missing = set(expected) - set(tensors)
    if missing:
        raise ShapeMismatchError(f"checkpoint missing tensors: {sorted(missing)}")

    params = Parameters()
    for layer in range(config.encoder_layers):
        params.encoder.append((tensors[f"enc.{layer}.weight"], tensors[f"enc.{layer}.bias"]))
    for i in range(config.encoder_layers):
        params.decoder.append((tensors[f"dec.{i}.weight"], tensors[f"dec.{i}.bias"]))
    params.final = (tensors["final.weight"], tensors["final.bias"])

    normalizer = None
    if header.get("normalizer"):
        normalizer = FeatureNormalizer.from_dict(header["normalizer"])
    return Checkpoint(params, config, normalizer, header.get("loss"),
                      header.get("meta", {}), digest)


@dataclass(frozen=True)
class GradCheckReport:
    mode: str
    n_checked: int
    max_rel_err: float
    max_abs_analytic: float


def gradient_check(config: ModelConfig, loss_mode: str = "full", eps: float = 1e-4,
                   n_params: int = 50, seed: int = 0,
                   env: torch.Tensor | None = None, feats: torch.Tensor | None = None,
                   target: torch.Tensor | None = None) -> GradCheckReport:
    """Compare autograd gradients against central finite differences.

    Runs in float64. Perturbs `n_params` randomly chosen scalar parameters by
    +-eps; relative error uses denominator max(|analytic|, 1e-8).
    """
    from .losses import LossConfig, total_loss

    if eps <= 0:
        raise ValueError("eps must be positive")
    params = build(config).clone(dtype=torch.float64)
    total = params.num_params()
    if total > 100_000:
        raise InvalidConfigError(f"{total} parameters; finite differences capped at 1e5")

    gen = torch.Generator().manual_seed(seed)
    if env is None:
        env = torch.rand(1, config.internal_length, generator=gen, dtype=torch.float64)
    if feats is None:
        feats = torch.rand(1, config.feature_count, generator=gen, dtype=torch.float64)
    if target is None:
        target = (torch.rand(1, config.output_length, generator=gen, dtype=torch.float64)
                  - 0.5) * 1.2
    cfg = LossConfig(mode=loss_mode)

    def objective() -> torch.Tensor:
        return total_loss(forward_batch(params, config, env, feats), target, cfg)

    params.requires_grad_(True)
    loss = objective()
    loss.backward()
    grads = [t.grad.detach().clone() for t in params.tensors()]
    params.requires_grad_(False)

    tensor_list = list(params.tensors())
    sizes = [t.numel() for t in tensor_list]
    bounds = np.cumsum([0] + sizes)
    picks = torch.randperm(total, generator=gen)[: min(n_params, total)].tolist()

    max_rel = 0.0
    max_abs = 0.0
    with torch.no_grad():
        for flat_idx in picks:
            ti = int(np.searchsorted(bounds, flat_idx, side="right") - 1)
            local = flat_idx - int(bounds[ti])
            view = tensor_list[ti].reshape(-1)
            original = float(view[local])

            view[local] = original + eps
            hi = float(objective())
            view[local] = original - eps
            lo = float(objective())
            view[local] = original

            numeric = (hi - lo) / (2.0 * eps)
            analytic = float(grads[ti].reshape(-1)[local])
            rel = abs(analytic - numeric) / max(abs(analytic), 1e-8)
            max_rel = max(max_rel, rel)
            max_abs = max(max_abs, abs(analytic))

    return GradCheckReport(loss_mode, len(picks), max_rel, max_abs)

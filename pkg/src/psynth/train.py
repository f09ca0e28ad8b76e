"""Optimization loop: seeded mini-batch Adam over a dataset directory.

Training is deterministic end to end: parameter init comes from the model
config seed, batch order is a pure function of (seed, epoch), and Adam
state is stored in float32 next to each checkpoint (`<ckpt>.opt`) so that
a resumed run reproduces the uninterrupted one bit for bit.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch

from . import dataset as ds
from .errors import InvalidConfigError, NonFiniteError, ShapeMismatchError
from .losses import LossConfig, loss_parts, total_loss
from .net import (
    Checkpoint,
    ModelConfig,
    Parameters,
    build,
    forward_batch,
    load_checkpoint,
    save_checkpoint,
)

OPTIMIZER_SUFFIX = ".opt"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2500
    batch_size: int = 16
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0
    split_seed: int = 0
    train_fraction: float = 0.9
    checkpoint_every: int = 0  # epochs between snapshots; 0 = final only
    clip_norm: float = 10.0  # global gradient-norm ceiling; 0 disables

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvalidConfigError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise InvalidConfigError("learning_rate must be positive")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["loss"] = self.loss.to_dict()
        return doc


@dataclass
class TrainReport:
    train_losses: list
    eval_losses: list
    wall_time_s: float
    final_checkpoint: str
    start_epoch: int
    epochs_run: int


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0


def init_adam(params: Parameters) -> AdamState:
    tensors = list(params.tensors())
    return AdamState(
        m=[torch.zeros_like(p) for p in tensors],
        v=[torch.zeros_like(p) for p in tensors],
        t=0,
    )


def adam_step(params: list, grads: list, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8
              ) -> tuple[list, AdamState]:
    """One bias-corrected Adam update. Inputs are parallel tensor lists."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatchError("params, grads and state must be parallel lists")
    for g in grads:
        if not bool(torch.isfinite(g).all()):
            raise NonFiniteError("gradient contains NaN or Inf")
    t = state.t + 1
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    new_params, new_m, new_v = [], [], []
    with torch.no_grad():
        for p, g, m, v in zip(params, grads, state.m, state.v):
            m = beta1 * m + (1.0 - beta1) * g
            v = beta2 * v + (1.0 - beta2) * g * g
            update = (m / bc1) / (torch.sqrt(v / bc2) + eps)
            new_params.append(p.detach() - lr * update)
            new_m.append(m)
            new_v.append(v)
    return new_params, AdamState(new_m, new_v, t)


def _clip_by_global_norm(grads: list, max_norm: float) -> list:
    total = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        return [g * scale for g in grads]
    return grads


def _rebuild_params(template: Parameters, tensors: list) -> Parameters:
    k = len(template.encoder)
    out = Parameters()
    it = iter(tensors)
    for _ in range(k):
        out.encoder.append((next(it), next(it)))
    for _ in range(k):
        out.decoder.append((next(it), next(it)))
    out.final = (next(it), next(it))
    return out


@dataclass
class _Tensors:
    env: torch.Tensor
    feats: torch.Tensor
    x: torch.Tensor
    ids: list


def _load_tensors(dataset, config: ModelConfig) -> tuple[ds.DatasetManifest, _Tensors]:
    if isinstance(dataset, (str, Path)):
        manifest, records = ds.load_dataset(dataset)
    else:
        manifest, records = dataset
    length = manifest.preprocessing.length
    if length != config.output_length:
        raise ShapeMismatchError(
            f"dataset length {length} != model output length {config.output_length}"
        )
    env = torch.zeros(len(records), config.internal_length)
    feats = torch.zeros(len(records), config.feature_count)
    x = torch.zeros(len(records), config.output_length)
    for i, rec in enumerate(records):
        env[i, :length] = torch.as_tensor(rec.e.values, dtype=torch.float32)
        feats[i] = torch.as_tensor(rec.fs.as_array(), dtype=torch.float32)
        x[i] = torch.as_tensor(rec.x.samples, dtype=torch.float32)
    return manifest, _Tensors(env, feats, x, [r.id for r in records])


def _epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng((seed, epoch)).permutation(n)


def _save_optimizer(path: str, state: AdamState, epoch: int) -> None:
    from .net import _MAGIC  # same container framing as checkpoints
    import hashlib
    import json
    import struct

    chunks, manifest, offset = [], [], 0
    for kind, tensors in (("m", state.m), ("v", state.v)):
        for i, tensor in enumerate(tensors):
            blob = tensor.detach().to(torch.float32).numpy().astype("<f4").tobytes()
            manifest.append({"name": f"{kind}.{i}", "shape": list(tensor.shape),
                             "offset": offset, "nbytes": len(blob)})
            chunks.append(blob)
            offset += len(blob)
    blob = b"".join(chunks)
    header = {
        "version": "opt-v1",
        "step": state.t,
        "epoch": epoch,
        "tensors": manifest,
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(blob)


def _load_optimizer(path: str, params: Parameters) -> tuple[AdamState, int]:
    import hashlib
    import json
    import struct

    from .errors import CorruptFileError, HashMismatchError, VersionMismatchError
    from .net import _MAGIC

    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise CorruptFileError("not an optimizer-state container")
    (hlen,) = struct.unpack_from("<I", raw, 4)
    header = json.loads(raw[8 : 8 + hlen].decode())
    if header.get("version") != "opt-v1":
        raise VersionMismatchError(f"unknown optimizer state version {header.get('version')!r}")
    blob = raw[8 + hlen :]
    if hashlib.sha256(blob).hexdigest() != header["blob_sha256"]:
        raise HashMismatchError("optimizer state does not match its stored hash")

    tensors = {}
    for entry in header["tensors"]:
        data = blob[entry["offset"] : entry["offset"] + entry["nbytes"]]
        tensors[entry["name"]] = torch.from_numpy(
            np.frombuffer(data, dtype="<f4").reshape(entry["shape"]).copy()
        )
    n = len(list(params.tensors()))
    state = AdamState(
        m=[tensors[f"m.{i}"] for i in range(n)],
        v=[tensors[f"v.{i}"] for i in range(n)],
        t=int(header["step"]),
    )
    for ours, theirs in zip(params.tensors(), state.m):
        if ours.shape != theirs.shape:
            raise ShapeMismatchError("optimizer state shape mismatch")
    return state, int(header["epoch"])


def _eval_loss(params, config, tensors: _Tensors, idx: np.ndarray,
               loss_cfg: LossConfig, batch_size: int) -> float:
    if len(idx) == 0:
        return float("nan")
    losses = []
    with torch.no_grad():
        for s in range(0, len(idx), batch_size):
            chunk = idx[s : s + batch_size]
            out = forward_batch(params, config, tensors.env[chunk], tensors.feats[chunk])
            losses.append(float(total_loss(out, tensors.x[chunk], loss_cfg)) * len(chunk))
    return sum(losses) / len(idx)


def _run_epochs(params: Parameters, state: AdamState, config: ModelConfig,
                cfg: TrainConfig, tensors: _Tensors, train_idx: np.ndarray,
                eval_idx: np.ndarray, out_dir: Path, start_epoch: int,
                n_epochs: int, normalizer,
                ckpt_name: str = "model.ckpt") -> tuple[Parameters, AdamState, TrainReport]:
    t0 = time.perf_counter()
    curve_path = out_dir / "loss_curve.csv"
    new_file = start_epoch == 0 or not curve_path.exists()
    curve = open(curve_path, "w" if new_file else "a", newline="")
    writer = csv.writer(curve)
    if new_file:
        writer.writerow(["epoch", "train_loss", "eval_loss"])

    train_losses, eval_losses = [], []
    final_path = str(out_dir / ckpt_name)
    try:
        for epoch in range(start_epoch, start_epoch + n_epochs):
            order = _epoch_order(cfg.seed, epoch, len(train_idx))
            epoch_loss = 0.0
            for bi, s in enumerate(range(0, len(order), cfg.batch_size)):
                batch = train_idx[order[s : s + cfg.batch_size]]
                tensor_list = list(params.tensors())
                for p in tensor_list:
                    p.requires_grad_(True)
                out = forward_batch(params, config, tensors.env[batch], tensors.feats[batch])
                loss = total_loss(out, tensors.x[batch], cfg.loss)
                value = float(loss.detach())
                if not math.isfinite(value):
                    parts = loss_parts(out.detach(), tensors.x[batch], cfg.loss)
                    raise NonFiniteError(
                        f"non-finite loss at epoch {epoch} batch {bi}: {parts}"
                    )
                grads = torch.autograd.grad(loss, tensor_list)
                for p in tensor_list:
                    p.requires_grad_(False)
                grads = _clip_by_global_norm(list(grads), cfg.clip_norm)
                new_tensors, state = adam_step(tensor_list, grads, state, cfg.learning_rate,
                                               cfg.beta1, cfg.beta2, cfg.eps)
                params = _rebuild_params(params, new_tensors)
                epoch_loss += value * len(batch)

            train_loss = epoch_loss / len(train_idx)
            eval_loss = _eval_loss(params, config, tensors, eval_idx, cfg.loss, cfg.batch_size)
            train_losses.append(train_loss)
            eval_losses.append(eval_loss)
            writer.writerow([epoch, f"{train_loss:.8f}",
                             "" if math.isnan(eval_loss) else f"{eval_loss:.8f}"])
            curve.flush()

            if cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
                snap = str(out_dir / f"model-epoch{epoch + 1:05d}.ckpt")
                _write_bundle(snap, params, config, normalizer, cfg, state, epoch + 1)
    finally:
        curve.close()

    _write_bundle(final_path, params, config, normalizer, cfg, state,
                  start_epoch + n_epochs)
    report = TrainReport(train_losses, eval_losses, time.perf_counter() - t0,
                         final_path, start_epoch, n_epochs)
    return params, state, report


def _write_bundle(path: str, params, config, normalizer, cfg: TrainConfig,
                  state: AdamState, epoch: int) -> None:
    save_checkpoint(params, config, normalizer, path, loss=cfg.loss.to_dict(),
                    meta={"epoch": epoch, "train_config": cfg.to_dict()})
    _save_optimizer(path + OPTIMIZER_SUFFIX, state, epoch)


def train(config: ModelConfig, dataset, cfg: TrainConfig, out_dir: str | Path,
          ckpt_name: str = "model.ckpt") -> tuple[Checkpoint, TrainReport]:
    """Train from scratch; returns the final checkpoint and the loss history.

    `dataset` is a dataset directory path or a (manifest, records) pair.
    """
    if cfg.epochs < 1:
        raise InvalidConfigError("epochs must be >= 1")
    manifest, tensors = _load_tensors(dataset, config)
    if len(tensors.ids) < cfg.batch_size:
        raise InvalidConfigError(
            f"dataset of {len(tensors.ids)} records smaller than batch size {cfg.batch_size}"
        )
    train_ids, eval_ids = ds.split(manifest, cfg.train_fraction, cfg.split_seed)
    pos = {rid: i for i, rid in enumerate(tensors.ids)}
    train_idx = np.array([pos[r] for r in train_ids])
    eval_idx = np.array([pos[r] for r in eval_ids])

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    params = build(config)
    state = init_adam(params)
    params, state, report = _run_epochs(params, state, config, cfg, tensors, train_idx,
                                        eval_idx, out, 0, cfg.epochs, manifest.normalizer,
                                        ckpt_name=ckpt_name)
    return load_checkpoint(report.final_checkpoint), report


def resume(ckpt_path: str | Path, dataset, cfg: TrainConfig, out_dir: str | Path,
           extra_epochs: int | None = None, expected_config: ModelConfig | None = None,
           ckpt_name: str = "model.ckpt") -> tuple[Checkpoint, TrainReport]:
    """Continue training from a checkpoint and its stored optimizer moments.

    `extra_epochs` defaults to cfg.epochs; zero returns the checkpoint as is.
    `expected_config`, when given, must match the checkpoint's architecture.
    """
    ckpt = load_checkpoint(str(ckpt_path), expected_config=expected_config)
    n_epochs = cfg.epochs if extra_epochs is None else extra_epochs
    if n_epochs == 0:
        return ckpt, TrainReport([], [], 0.0, str(ckpt_path), ckpt.meta.get("epoch", 0), 0)

    manifest, tensors = _load_tensors(dataset, ckpt.config)
    state, start_epoch = _load_optimizer(str(ckpt_path) + OPTIMIZER_SUFFIX, ckpt.params)
    train_ids, eval_ids = ds.split(manifest, cfg.train_fraction, cfg.split_seed)
    pos = {rid: i for i, rid in enumerate(tensors.ids)}
    train_idx = np.array([pos[r] for r in train_ids])
    eval_idx = np.array([pos[r] for r in eval_ids])

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    params, state, report = _run_epochs(ckpt.params, state, ckpt.config, cfg, tensors,
                                        train_idx, eval_idx, out, start_epoch, n_epochs,
                                        ckpt.normalizer if ckpt.normalizer else manifest.normalizer,
                                        ckpt_name=ckpt_name)
    return load_checkpoint(report.final_checkpoint), report

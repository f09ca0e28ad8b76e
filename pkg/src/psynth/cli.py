"""Command-line entry point orchestrating the pipeline end to end.

Exit codes: 0 on success, 1 for usage errors (bad flags or argument
values, caught before any work starts), 2 for runtime failures. Logs go
to standard error; machine-readable outputs go to files only.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds
from .coherence import (
    CheckpointBackend,
    MonotoneOracleBackend,
    SweepLevels,
    evaluate,
    fit_backend_normalizer,
)
from .errors import PsynthError
from .features import FEATURE_NAMES, parametric_envelope
from .losses import LossConfig, MODES
from .net import (
    ModelConfig,
    forward,
    gradient_check,
    load_checkpoint,
    make_conditioning,
    small_config,
    tiny_config,
)
from .service import ServiceConfig, serve as run_service
from .train import TrainConfig, train

log = logging.getLogger("psynth")

GRADCHECK_THRESHOLD = 1e-3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; the CLI contract reserves 1 for usage."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def _json_arg(value: str):
    """Accept inline JSON or a path to a JSON file."""
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        path = Path(value)
        if path.exists():
            return json.loads(path.read_text())
        raise UsageError(f"not valid JSON and not a readable file: {value!r}")


def _parse_features(doc) -> np.ndarray:
    if not isinstance(doc, dict):
        raise UsageError("features must be a JSON object of the 7 named values")
    missing = [n for n in FEATURE_NAMES if n not in doc]
    if missing:
        raise UsageError(f"missing feature(s): {', '.join(missing)}")
    values = []
    for name in FEATURE_NAMES:
        v = float(doc[name])
        if not 0.0 <= v <= 1.0:
            raise UsageError(f"feature {name!r} = {v} outside [0, 1]")
        values.append(v)
    return np.array(values)


def _parse_envelope(doc, length: int = 16000) -> np.ndarray:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise UsageError('envelope must be a JSON object with a "kind" field')
    if doc["kind"] == "ad":
        try:
            return parametric_envelope(
                float(doc["attack_ms"]), float(doc["decay_ms"]),
                float(doc.get("amplitude", 1.0)), length
            ).values
        except (KeyError, ValueError) as exc:
            raise UsageError(f"bad ad envelope: {exc}")
    if doc["kind"] == "raw":
        samples = np.asarray(doc.get("samples", []), dtype=np.float64)
        if len(samples) != length:
            raise UsageError(f"raw envelope must have exactly {length} samples")
        if samples.min(initial=0.0) < 0.0 or samples.max(initial=0.0) > 1.0:
            raise UsageError("raw envelope values must lie in [0, 1]")
        return samples
    raise UsageError(f'unknown envelope kind {doc["kind"]!r}')


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="psynth", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[], help="preprocess a folder of one-shot WAVs")
    p.add_argument("--in", dest="src", required=True, help="folder of WAV files")
    p.add_argument("--out", required=True, help="dataset output directory")
    p.add_argument("--sr", type=int, default=16000)
    p.add_argument("--len", dest="length", type=int, default=16000)
    p.add_argument("--trim-db", type=float, default=-60.0)

    p = sub.add_parser("synth-data", help="generate the synthetic oracle dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="optimize a model on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=MODES, default="full")
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint path (.ckpt) or directory")
    p.add_argument("--k", type=int, default=15, help="encoder layers")
    p.add_argument("--base", type=int, default=32, help="base filter count")
    p.add_argument("--internal", type=int, default=32768, help="internal (padded) length")
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--no-clip", action="store_true", help="disable gradient clipping")

    p = sub.add_parser("generate", help="synthesize one waveform from a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--features", required=True, help="JSON object or path to one")
    p.add_argument("--envelope", required=True, help="JSON object or path to one")
    p.add_argument("--out", required=True, help="output WAV path")

    p = sub.add_parser("eval-coherence", help="run the feature-coherence harness")
    p.add_argument("--ckpt")
    p.add_argument("--data", required=True)
    p.add_argument("--levels", default="0.2,0.5,0.8")
    p.add_argument("--report", required=True, help="output JSON path")
    p.add_argument("--split", choices=["eval", "all"], default="eval")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--oracle-backend", action="store_true",
                   help="score the built-in monotone backend instead of a checkpoint")

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--size", choices=["tiny", "small"], default="tiny")
    p.add_argument("--mode", choices=MODES, default="full")
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("serve", help="start the HTTP inference service")
    p.add_argument("--ckpt")
    p.add_argument("--port", type=int)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--cors")
    return parser


def _cmd_ingest(args) -> int:
    pp = ds.PreprocessParams(sample_rate=args.sr, length=args.length, trim_db=args.trim_db)
    manifest = ds.ingest(args.src, args.out, pp)
    log.info("ingested %d records into %s", len(manifest.records), args.out)
    return 0


def _cmd_synth_data(args) -> int:
    manifest = ds.build_oracle_dataset(args.n, args.seed, args.out)
    log.info("wrote %d oracle records to %s", len(manifest.records), args.out)
    return 0


def _cmd_train(args) -> int:
    out = Path(args.out)
    if out.suffix == ".ckpt":
        out_dir, name = out.parent if str(out.parent) else Path("."), out.name
    else:
        out_dir, name = out, "model.ckpt"
    config = ModelConfig(encoder_layers=args.k, base_filters=args.base,
                         internal_length=args.internal, seed=args.seed)
    cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
        loss=LossConfig(mode=args.mode),
        seed=args.seed,
        split_seed=args.split_seed,
        checkpoint_every=args.checkpoint_every,
        clip_norm=0.0 if args.no_clip else 10.0,
    )
    ckpt, report = train(config, args.data, cfg, out_dir, ckpt_name=name)
    log.info("final train loss %.6f after %d epochs; checkpoint %s",
             report.train_losses[-1], report.epochs_run, report.final_checkpoint)
    return 0


def _cmd_generate(args) -> int:
    features = _parse_features(_json_arg(args.features))
    envelope = _parse_envelope(_json_arg(args.envelope))
    ckpt = load_checkpoint(args.ckpt)
    cond = make_conditioning(envelope, features, ckpt.config)
    wave = forward(ckpt.params, ckpt.config, cond)
    from .audio_io import write_wav

    write_wav(wave, args.out)
    log.info("wrote %s (%d samples)", args.out, len(wave))
    return 0


def _cmd_eval_coherence(args) -> int:
    try:
        parts = [float(v) for v in args.levels.split(",")]
        levels = SweepLevels(*parts)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad --levels: {exc}")
    if not args.oracle_backend and not args.ckpt:
        raise UsageError("--ckpt is required unless --oracle-backend is set")

    manifest, records = ds.load_dataset(args.data)
    if args.split == "eval":
        _, eval_ids = ds.split(manifest, seed=args.split_seed)
        wanted = set(eval_ids)
        records = [r for r in records if r.id in wanted]
        if not records:
            raise PsynthError(
                f"evaluation split of {len(manifest.records)} records is empty; "
                "use --split all or a larger dataset"
            )

    if args.oracle_backend:
        backend = MonotoneOracleBackend()
        normalizer = fit_backend_normalizer(backend, records, levels)
    else:
        ckpt = load_checkpoint(args.ckpt)
        backend = CheckpointBackend(ckpt)
        normalizer = ckpt.normalizer if ckpt.normalizer else manifest.normalizer
    report = evaluate(backend, records, normalizer, levels)
    Path(args.report).write_text(report.to_json() + "\n")
    sys.stderr.write(report.to_table() + "\n")
    return 0


def _cmd_gradcheck(args) -> int:
    if args.eps <= 0:
        raise UsageError("--eps must be positive")
    config = tiny_config(seed=args.seed) if args.size == "tiny" else small_config(seed=args.seed)
    report = gradient_check(config, args.mode, eps=args.eps, seed=args.seed)
    print(f"gradcheck {args.size}/{args.mode}: max_rel_err={report.max_rel_err:.3e} "
          f"over {report.n_checked} parameters")
    if report.max_rel_err >= GRADCHECK_THRESHOLD:
        log.error("max relative error %.3e exceeds %.0e", report.max_rel_err,
                  GRADCHECK_THRESHOLD)
        return 2
    return 0


def _cmd_serve(args) -> int:
    cfg = ServiceConfig.load(args.config)
    if args.ckpt:
        cfg.checkpoint = args.ckpt
    if args.port:
        cfg.port = args.port
    if args.cors:
        cfg.cors_origin = args.cors
    if not cfg.checkpoint or not Path(cfg.checkpoint).exists():
        raise PsynthError(f"checkpoint not found: {cfg.checkpoint!r}")
    run_service(cfg)
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "synth-data": _cmd_synth_data,
    "train": _cmd_train,
    "generate": _cmd_generate,
    "eval-coherence": _cmd_eval_coherence,
    "gradcheck": _cmd_gradcheck,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"psynth {args.command}: {exc}\n")
        return 1
    except PsynthError as exc:
        sys.stderr.write(f"psynth {args.command}: {exc}\n")
        return 2
    except KeyboardInterrupt:
        sys.stderr.write("interrupted\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""HTTP inference service around a loaded checkpoint.

Endpoints (JSON in, JSON or audio/wav out):

    POST /api/v1/synthesize   features + envelope -> 16-bit PCM WAV bytes
    POST /api/v1/analyze      WAV upload -> descriptor + envelope analysis
    GET  /api/v1/model        checkpoint and config metadata
    GET  /healthz             liveness

Inference reads an immutable checkpoint snapshot, so concurrent requests
are safe and identical requests return byte-identical bodies; reloading
swaps the snapshot atomically. Configuration comes from an optional JSON
file plus PSYNTH_PORT / PSYNTH_CKPT environment overrides.
"""

from __future__ import annotations

import io
import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Union

import numpy as np
from fastapi import FastAPI, HTTPException, Request, UploadFile, File
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse, Response
from pydantic import BaseModel, Field, field_validator

from . import audio_io
from .audio_io import Waveform
from .dataset import PreprocessParams
from .errors import NoSignalError, PsynthError, SilentInputError
from .features import (
    FEATURE_NAMES,
    TimbralVector,
    envelope_follow,
    extract_timbral,
    normalize,
    parametric_envelope,
)
from .net import Checkpoint, forward, load_checkpoint, make_conditioning

MAX_JSON_BYTES = 1 << 20  # 1 MiB request cap
MAX_UPLOAD_SECONDS = 10.0
ENVELOPE_LENGTH = 16000


@dataclass
class ServiceConfig:
    checkpoint: str | None = None
    port: int = 8000
    cors_origin: str | None = None

    @classmethod
    def load(cls, path: str | None = None, env: dict | None = None) -> "ServiceConfig":
        """Read the optional JSON config file, then apply environment overrides."""
        env = os.environ if env is None else env
        doc = {}
        if path:
            doc = json.loads(Path(path).read_text())
        cfg = cls(
            checkpoint=doc.get("checkpoint"),
            port=int(doc.get("port", 8000)),
            cors_origin=doc.get("cors_origin"),
        )
        if env.get("PSYNTH_CKPT"):
            cfg.checkpoint = env["PSYNTH_CKPT"]
        if env.get("PSYNTH_PORT"):
            cfg.port = int(env["PSYNTH_PORT"])
        return cfg


class FeatureSet(BaseModel):
    hardness: float = Field(ge=0.0, le=1.0)
    depth: float = Field(ge=0.0, le=1.0)
    brightness: float = Field(ge=0.0, le=1.0)
    roughness: float = Field(ge=0.0, le=1.0)
    boominess: float = Field(ge=0.0, le=1.0)
    warmth: float = Field(ge=0.0, le=1.0)
    sharpness: float = Field(ge=0.0, le=1.0)

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES], dtype=np.float64)


class AdEnvelope(BaseModel):
    kind: Literal["ad"]
    attack_ms: float = Field(ge=0.0)
    decay_ms: float = Field(gt=0.0)
    amplitude: float = Field(gt=0.0, le=1.0)


class RawEnvelope(BaseModel):
    kind: Literal["raw"]
    samples: list[float]

    @field_validator("samples")
    @classmethod
    def _check_samples(cls, v: list[float]) -> list[float]:
        if len(v) != ENVELOPE_LENGTH:
            raise ValueError(f"raw envelope must have exactly {ENVELOPE_LENGTH} samples")
        arr = np.asarray(v, dtype=np.float64)
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("raw envelope values must be finite and lie in [0, 1]")
        return v


class SynthesisRequest(BaseModel):
    features: FeatureSet
    envelope: Union[AdEnvelope, RawEnvelope] = Field(discriminator="kind")


class ServiceState:
    """Checkpoint holder with atomic swap; readers grab a snapshot reference."""

    def __init__(self, checkpoint: Checkpoint | None = None):
        self._lock = threading.Lock()
        self._ckpt = checkpoint

    def load(self, path: str) -> Checkpoint:
        ckpt = load_checkpoint(path)
        with self._lock:
            self._ckpt = ckpt
        return ckpt

    def snapshot(self) -> Checkpoint:
        ckpt = self._ckpt
        if ckpt is None:
            raise HTTPException(status_code=503, detail="no checkpoint loaded")
        return ckpt


def _envelope_values(spec: Union[AdEnvelope, RawEnvelope]) -> np.ndarray:
    if isinstance(spec, AdEnvelope):
        return parametric_envelope(spec.attack_ms, spec.decay_ms, spec.amplitude,
                                   ENVELOPE_LENGTH).values
    return np.asarray(spec.samples, dtype=np.float64)


def _preview(values: np.ndarray, points: int = 200) -> list[float]:
    if len(values) <= points:
        return [float(v) for v in values]
    idx = np.linspace(0, len(values) - 1, points).round().astype(int)
    return [float(values[i]) for i in idx]


def create_app(state: ServiceState, cors_origin: str | None = None) -> FastAPI:
    app = FastAPI(title="psynth inference service")
    if cors_origin:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=[cors_origin],
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.middleware("http")
    async def _cap_json_bodies(request: Request, call_next):
        if request.url.path == "/api/v1/synthesize":
            length = request.headers.get("content-length")
            if length and int(length) > MAX_JSON_BYTES:
                return JSONResponse(status_code=413, content={"detail": "request body too large"})
        return await call_next(request)

    @app.get("/healthz")
    def healthz() -> PlainTextResponse:
        return PlainTextResponse("ok")

    @app.post("/api/v1/synthesize")
    def synthesize(req: SynthesisRequest) -> Response:
        ckpt = state.snapshot()
        env = _envelope_values(req.envelope)
        cond = make_conditioning(env, req.features.as_array(), ckpt.config)
        wave = forward(ckpt.params, ckpt.config, cond)
        return Response(
            content=audio_io.encode_wav(wave),
            media_type="audio/wav",
            headers={"X-Checkpoint-Hash": ckpt.content_hash},
        )

    @app.post("/api/v1/analyze")
    def analyze(file: UploadFile = File(...)) -> JSONResponse:
        ckpt = state.snapshot()
        raw = file.file.read()
        try:
            wave, meta = audio_io.decode_wav(raw, path=file.filename or "<upload>")
        except PsynthError as exc:
            raise HTTPException(status_code=415, detail=f"cannot decode upload: {exc}") from exc
        duration = len(wave) / wave.sample_rate if wave.sample_rate else 0.0
        if duration > MAX_UPLOAD_SECONDS:
            raise HTTPException(status_code=422,
                                detail=f"upload of {duration:.2f}s exceeds the 10s cap")
        pp = PreprocessParams()
        try:
            wave = audio_io.resample(wave, pp.sample_rate)
            wave = audio_io.trim_silence(wave, pp.trim_db)
            wave = audio_io.pad_to_length(wave, pp.length)
            features_raw = extract_timbral(wave)
        except (NoSignalError, SilentInputError) as exc:
            raise HTTPException(status_code=422, detail=f"silent input: {exc}") from exc
        if ckpt.normalizer is None:
            raise HTTPException(status_code=503, detail="checkpoint has no normalizer")
        features_norm = normalize(ckpt.normalizer, features_raw)
        envelope = envelope_follow(wave)
        return JSONResponse(
            {
                "features_raw": features_raw.as_dict(),
                "features_normalized": features_norm.as_dict(),
                "envelope_preview": _preview(envelope.values),
                "duration_s": duration,
            }
        )

    @app.get("/api/v1/model")
    def model_info() -> JSONResponse:
        ckpt = state.snapshot()
        return JSONResponse(
            {
                "config": ckpt.config.to_dict(),
                "checkpoint_hash": ckpt.content_hash,
                "feature_names": list(FEATURE_NAMES),
                "normalizer": ckpt.normalizer.to_dict() if ckpt.normalizer else None,
                "loss_mode": (ckpt.loss or {}).get("mode"),
            }
        )

    return app


def serve(config: ServiceConfig) -> None:
    """Blocking entry point used by the CLI."""
    import uvicorn

    if not config.checkpoint:
        raise PsynthError("no checkpoint configured (flag, config file or PSYNTH_CKPT)")
    state = ServiceState()
    state.load(config.checkpoint)
    app = create_app(state, cors_origin=config.cors_origin)
    uvicorn.run(app, host="127.0.0.1", port=config.port, log_level="warning")

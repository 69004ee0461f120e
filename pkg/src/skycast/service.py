"""HTTP service exposing the prediction and synthesis pipeline.

Routes: POST /api/predict (multipart "image"), POST /api/synthesize,
GET /api/meta, GET /healthz. Models load once at startup; request handlers
share them read-only. Request logging records route/outcome/latency only,
never image bytes.
"""

from __future__ import annotations

import base64
import json
import logging
import os
import time
import uuid
from dataclasses import dataclass, field

from fastapi import FastAPI, Form, Request, UploadFile
from fastapi.responses import JSONResponse, PlainTextResponse

from . import __version__
from .aqi import AqiGrade
from .features import EmptyInput
from .imaging import MalformedImage, NoSkyDetected, UnsupportedFormat, decode_image, encode_png
from .pipeline import GradePredictor, grade_catalog, load_model
from .synth import (
    ExternalBackend,
    ProceduralBackend,
    RenderParams,
    SynthError,
    SynthesisClient,
    default_render_params,
    prompt_for_grade,
    ssim,
)

logger = logging.getLogger(__name__)

CONFIG_ENV_VAR = "SKYCAST_CONFIG"
_MIN_UPLOAD_LIMIT = 1 << 20  # 1 MiB


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class ServiceConfig:
    rf_model: str | None = None
    knn_model: str | None = None
    cnn_model: str | None = None
    primary_model: str | None = None  # rf | knn | cnn; default: first configured
    render_params_path: str | None = None
    backend: dict = field(default_factory=lambda: {"type": "procedural"})
    bind_host: str = "127.0.0.1"
    bind_port: int = 8376
    max_upload_bytes: int = 8 << 20
    request_log: str | None = None
    static_dir: str | None = None

    def __post_init__(self):
        if not (self.rf_model or self.knn_model or self.cnn_model):
            raise ConfigError("at least one model path must be configured")
        if self.max_upload_bytes < _MIN_UPLOAD_LIMIT:
            raise ConfigError("max_upload_bytes must be at least 1 MiB")

    @classmethod
    def load(cls, path) -> "ServiceConfig":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"bad service config: {exc}") from exc

    @classmethod
    def from_env(cls) -> "ServiceConfig":
        path = os.environ.get(CONFIG_ENV_VAR)
        if not path:
            raise ConfigError(f"set {CONFIG_ENV_VAR} or pass --config")
        return cls.load(path)

    def model_path(self) -> str:
        choices = {"rf": self.rf_model, "knn": self.knn_model, "cnn": self.cnn_model}
        if self.primary_model:
            path = choices.get(self.primary_model)
            if not path:
                raise ConfigError(f"primary model {self.primary_model!r} has no path")
            return path
        return next(path for path in choices.values() if path)


def _make_backend(doc: dict):
    kind = doc.get("type", "procedural")
    if kind == "procedural":
        return ProceduralBackend()
    if kind == "external":
        return ExternalBackend(
            endpoint=doc["endpoint"],
            timeout=float(doc.get("timeout", 30.0)),
            max_concurrency=int(doc.get("max_concurrency", 4)),
        )
    raise ConfigError(f"unknown backend type {kind!r}")


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": code, "message": message})


def create_app(config: ServiceConfig) -> FastAPI:
    predictor = GradePredictor(load_model(config.model_path()))
    params = (
        RenderParams.load(config.render_params_path)
        if config.render_params_path
        else default_render_params()
    )
    synth_client = SynthesisClient(_make_backend(config.backend), params)
    app = FastAPI(title="skycast", version=__version__)

    log_path = config.request_log

    @app.middleware("http")
    async def request_logger(request: Request, call_next):
        start = time.perf_counter()
        response = await call_next(request)
        if log_path:
            elapsed_ms = (time.perf_counter() - start) * 1000.0
            line = (
                f"{time.strftime('%Y-%m-%dT%H:%M:%S%z')} {request.url.path} "
                f"{response.status_code} {elapsed_ms:.1f}ms\n"
            )
            try:
                with open(log_path, "a", encoding="utf-8") as fh:
                    fh.write(line)
            except OSError:  # logging must never break a request
                logger.warning("could not append to request log %s", log_path)
        return response

    @app.exception_handler(Exception)
    async def internal_error(request: Request, exc: Exception):
        incident = uuid.uuid4().hex[:12]
        logger.exception("internal error %s on %s", incident, request.url.path)
        return _error(500, "internal", f"internal error (incident {incident})")

    @app.get("/healthz")
    async def healthz():
        return PlainTextResponse("ok")

    @app.get("/api/meta")
    async def meta():
        return {
            "version": __version__,
            "model_id": predictor.model_id,
            "model_kind": predictor.kind,
            "grades": grade_catalog(),
        }

    @app.post("/api/predict")
    async def predict(image: UploadFile | None = None):
        if image is None:
            return _error(400, "missing_image", "multipart field 'image' is required")
        data = await image.read()
        if len(data) == 0:
            return _error(400, "malformed_image", "empty upload")
        if len(data) > config.max_upload_bytes:
            return _error(413, "too_large", "upload exceeds the configured limit")
        try:
            result = predictor.predict_bytes(data)
        except (MalformedImage, UnsupportedFormat) as exc:
            return _error(400, "malformed_image", str(exc))
        except (NoSkyDetected, EmptyInput) as exc:
            return _error(422, "no_sky_detected", str(exc))
        grade = result.grade
        return {
            "grade": grade.label,
            "probabilities": [float(p) for p in result.probabilities],
            "aqi_color": grade.color,
            "advice": grade.advice,
            "prompt": prompt_for_grade(grade),
            "feature_summary": [
                {
                    "theta": d.theta,
                    "freq": d.freq,
                    "mean": d.mean,
                    "variance": d.variance,
                    "skewness": d.skewness,
                    "kurtosis": d.kurtosis,
                }
                for d in result.digest
            ],
            "model_id": result.model_id,
        }

    @app.post("/api/synthesize")
    async def synthesize(
        image: UploadFile | None = None,
        grades: str | None = Form(default=None),
        seed: int = Form(default=0),
    ):
        if image is None:
            return _error(400, "missing_image", "multipart field 'image' is required")
        data = await image.read()
        if len(data) == 0:
            return _error(400, "malformed_image", "empty upload")
        if len(data) > config.max_upload_bytes:
            return _error(413, "too_large", "upload exceeds the configured limit")
        if grades:
            try:
                wanted = [AqiGrade.from_label(g.strip()) for g in grades.split(",")]
            except ValueError as exc:
                return _error(400, "unknown_grade", str(exc))
        else:
            wanted = list(AqiGrade)
        try:
            source = decode_image(data)
        except (MalformedImage, UnsupportedFormat) as exc:
            return _error(400, "malformed_image", str(exc))
        wanted = sorted(set(wanted), key=lambda g: g.severity)
        variants = []
        try:
            for grade in wanted:
                rendered = synth_client.render(source, grade, seed)
                variants.append(
                    {
                        "grade": grade.label,
                        "prompt": prompt_for_grade(grade),
                        "ssim": ssim(source, rendered),
                        "image_png_base64": base64.b64encode(encode_png(rendered)).decode(),
                    }
                )
        except SynthError as exc:  # grayscale input, image below SSIM window, ...
            return _error(422, "cannot_synthesize", str(exc))
        return {"variants": variants}

    if config.static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=config.static_dir, html=True), name="ui")

    return app


def serve(config: ServiceConfig) -> None:
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=config.bind_host, port=config.bind_port, log_level="info")

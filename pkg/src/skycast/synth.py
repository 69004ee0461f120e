"""Grade-conditioned counterfactual sky rendering and realism metrics.

A deterministic procedural renderer stands in for a generative backbone:
per-grade atmospheric parameters (haze opacity, contrast, warmth, grain)
modulate an input sky while preserving its spatial structure. An external
backend slot can forward the work to any HTTP generative service instead,
falling back to the procedural path on failure.
"""

from __future__ import annotations

import base64
import json
import logging
import threading
import urllib.parse
from dataclasses import dataclass, field

import numpy as np

from .aqi import GRADES, AqiGrade
from .features import FeatureVector
from .imaging import RasterImage, decode_image, encode_png, sample_bilinear, to_gray

logger = logging.getLogger(__name__)


class SynthError(Exception):
    """Base class for synthesis/metric failures."""


class GrayscaleInput(SynthError):
    """Counterfactual rendering needs a color image."""


class DimensionMismatch(SynthError):
    pass


class SchemaMismatch(SynthError):
    pass


class SetTooSmall(SynthError):
    pass


# Prompt texts per grade. Good, Unhealthy, and Very Unhealthy follow the
# published wording; Moderate and Unhealthy for Sensitive Groups are composed
# in the same minimal style.
PROMPTS: dict[AqiGrade, str] = {
    AqiGrade.GOOD: "clear blue sky",
    AqiGrade.MODERATE: "a mostly clear sky with a faint pale haze",
    AqiGrade.UNHEALTHY_SENSITIVE: "a washed-out sky under a light gray haze",
    AqiGrade.UNHEALTHY: "a hazy sky with visible particulate matter",
    AqiGrade.VERY_UNHEALTHY: "thick smog with reddish haze obscuring sunlight",
}


def prompt_for_grade(grade: AqiGrade) -> str:
    return PROMPTS[grade]


@dataclass(frozen=True)
class GradeRender:
    """Atmospheric transform for one grade.

    haze_opacity blends toward haze_color; contrast_scale compresses around
    mid-gray; warmth_shift adds red bias and subtracts blue; noise_gain adds
    seeded value-noise grain.
    """

    haze_opacity: float
    contrast_scale: float
    warmth_shift: float
    noise_gain: float
    haze_color: tuple[float, float, float] = (0.78, 0.74, 0.68)

    def __post_init__(self):
        if not 0.0 <= self.haze_opacity <= 1.0:
            raise ValueError("haze_opacity must lie in [0, 1]")
        if not 0.0 < self.contrast_scale <= 1.0:
            raise ValueError("contrast_scale must lie in (0, 1]")
        if not 0.0 <= self.noise_gain <= 1.0:
            raise ValueError("noise_gain must lie in [0, 1]")


# Warmth values are kept small: a stronger red bias at high severity can
# overtake the flattened blue of the grade below it and break the saturation
# monotonicity the severity chain must keep. Noise gain steps widely enough
# that every grade leaves a distinct fine-scale texture fingerprint.
_DEFAULT_TABLE: dict[AqiGrade, GradeRender] = {
    AqiGrade.GOOD: GradeRender(0.00, 1.00, 0.000, 0.00),
    AqiGrade.MODERATE: GradeRender(0.12, 0.92, 0.010, 0.04),
    AqiGrade.UNHEALTHY_SENSITIVE: GradeRender(0.28, 0.82, 0.025, 0.06),
    AqiGrade.UNHEALTHY: GradeRender(0.45, 0.70, 0.040, 0.08),
    AqiGrade.VERY_UNHEALTHY: GradeRender(0.65, 0.55, 0.050, 0.10),
}


@dataclass(frozen=True)
class RenderParams:
    """Per-grade render table; severity must monotonically thicken the haze
    and flatten the contrast."""

    table: dict[AqiGrade, GradeRender] = field(
        default_factory=lambda: dict(_DEFAULT_TABLE)
    )

    def __post_init__(self):
        missing = [g for g in GRADES if g not in self.table]
        if missing:
            raise ValueError(f"render table is missing grades: {missing}")
        chain = [self.table[g] for g in GRADES]
        for lo, hi in zip(chain, chain[1:]):
            if not hi.haze_opacity > lo.haze_opacity:
                raise ValueError("haze_opacity must strictly increase with severity")
            if not hi.contrast_scale < lo.contrast_scale:
                raise ValueError("contrast_scale must strictly decrease with severity")

    def __getitem__(self, grade: AqiGrade) -> GradeRender:
        return self.table[grade]

    def to_json(self) -> dict:
        return {
            grade.label: {
                "haze_opacity": gr.haze_opacity,
                "contrast_scale": gr.contrast_scale,
                "warmth_shift": gr.warmth_shift,
                "noise_gain": gr.noise_gain,
                "haze_color": list(gr.haze_color),
            }
            for grade, gr in self.table.items()
        }

    @classmethod
    def from_json(cls, doc: dict) -> "RenderParams":
        table = {}
        for label, cfg in doc.items():
            grade = AqiGrade.from_label(label)
            table[grade] = GradeRender(
                haze_opacity=float(cfg["haze_opacity"]),
                contrast_scale=float(cfg["contrast_scale"]),
                warmth_shift=float(cfg["warmth_shift"]),
                noise_gain=float(cfg.get("noise_gain", 0.0)),
                haze_color=tuple(cfg.get("haze_color", (0.78, 0.74, 0.68))),
            )
        return cls(table)

    @classmethod
    def load(cls, path) -> "RenderParams":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")


def default_render_params() -> RenderParams:
    return RenderParams()


def value_noise(
    height: int, width: int, rng: np.random.Generator, base_cell: int = 24, octaves: int = 2
) -> np.ndarray:
    """Seeded smooth noise field in [0, 1]: bilinear-upsampled random grids
    summed over octaves."""
    total = np.zeros((height, width))
    amp, cell, norm = 1.0, max(2, base_cell), 0.0
    for _ in range(octaves):
        gh = height // cell + 2
        gw = width // cell + 2
        grid = rng.random((gh, gw))[:, :, None]
        yy, xx = np.meshgrid(
            np.arange(height, dtype=np.float64) / cell,
            np.arange(width, dtype=np.float64) / cell,
            indexing="ij",
        )
        total += amp * sample_bilinear(grid, yy, xx)[:, :, 0]
        norm += amp
        amp *= 0.5
        cell = max(2, cell // 2)
    return total / norm


def render_variant(
    img: RasterImage,
    grade: AqiGrade,
    params: RenderParams | None = None,
    seed: int = 0,
) -> RasterImage:
    """Render the counterfactual appearance of `img` under `grade`.

    Applies contrast compression, warmth shift, haze blending, and seeded
    grain, in that order; stages with identity parameters are skipped so the
    Good grade reproduces the input exactly. Deterministic given
    (img, grade, seed).
    """
    if img.channels != 3:
        raise GrayscaleInput("counterfactual rendering needs a 3-channel image")
    params = params or default_render_params()
    gr = params[grade]
    px = img.pixels
    if gr.contrast_scale != 1.0:
        px = (px - 0.5) * gr.contrast_scale + 0.5
    if gr.warmth_shift != 0.0:
        px = px.copy() if px is img.pixels else px
        px[:, :, 0] = px[:, :, 0] + gr.warmth_shift
        px[:, :, 2] = px[:, :, 2] - gr.warmth_shift
    if gr.haze_opacity > 0.0:
        haze = np.asarray(gr.haze_color, dtype=np.float64)
        px = (1.0 - gr.haze_opacity) * px + gr.haze_opacity * haze
    if gr.noise_gain > 0.0:
        rng = np.random.default_rng([seed, grade.value])
        grain = value_noise(img.height, img.width, rng, base_cell=8, octaves=2)
        px = px + gr.noise_gain * (grain - 0.5)[:, :, None]
    if px is img.pixels:
        return img
    return RasterImage(np.clip(px, 0.0, 1.0))


def synthesize_all_grades(
    img: RasterImage, params: RenderParams | None = None, seed: int = 0
) -> list[tuple[AqiGrade, RasterImage]]:
    """One variant per grade, in severity order."""
    return [(g, render_variant(img, g, params, seed)) for g in GRADES]


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    idx = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(idx**2) / (2.0 * sigma**2))
    win = np.outer(g, g)
    return win / win.sum()


_SSIM_WINDOW = _gaussian_window()
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03
_SSIM_RANGE = 1.0


def _windowed(plane: np.ndarray) -> np.ndarray:
    wins = np.lib.stride_tricks.sliding_window_view(plane, _SSIM_WINDOW.shape)
    return np.tensordot(wins, _SSIM_WINDOW, axes=([2, 3], [0, 1]))


def ssim(a: RasterImage, b: RasterImage) -> float:
    """Mean local SSIM over an 11x11 Gaussian window (sigma 1.5), on luminance.

    Stabilizers K1=0.01, K2=0.03 with dynamic range 1.0.
    """
    if (a.height, a.width) != (b.height, b.width):
        raise DimensionMismatch(
            f"image sizes differ: {a.height}x{a.width} vs {b.height}x{b.width}"
        )
    if a.height < 11 or a.width < 11:
        raise DimensionMismatch("images must be at least 11x11 for SSIM")
    x = to_gray(a)
    y = to_gray(b)
    c1 = (_SSIM_K1 * _SSIM_RANGE) ** 2
    c2 = (_SSIM_K2 * _SSIM_RANGE) ** 2
    mu_x = _windowed(x)
    mu_y = _windowed(y)
    var_x = _windowed(x * x) - mu_x * mu_x
    var_y = _windowed(y * y) - mu_y * mu_y
    cov = _windowed(x * y) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def _as_matrix(vectors) -> tuple[np.ndarray, str | None]:
    if isinstance(vectors, np.ndarray):
        mat = np.asarray(vectors, dtype=np.float64)
        return mat, None
    rows, schema = [], None
    for v in vectors:
        if isinstance(v, FeatureVector):
            if schema is None:
                schema = v.schema_id
            elif v.schema_id != schema:
                raise SchemaMismatch("mixed feature schemas within one set")
            rows.append(v.values)
        else:
            rows.append(np.asarray(v, dtype=np.float64))
    return np.asarray(rows, dtype=np.float64), schema


def frechet_feature_distance(set_a, set_b) -> float:
    """Fréchet distance between Gaussian fits of two feature sets, with a
    diagonal-covariance simplification:

        |mu_a - mu_b|^2 + sum_i (var_a_i + var_b_i - 2*sqrt(var_a_i*var_b_i))
    """
    a, schema_a = _as_matrix(set_a)
    b, schema_b = _as_matrix(set_b)
    if schema_a is not None and schema_b is not None and schema_a != schema_b:
        raise SchemaMismatch(f"feature schemas differ: {schema_a} vs {schema_b}")
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise SchemaMismatch("feature sets must be (n, d) with matching d")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise SetTooSmall("each feature set needs at least 2 vectors")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    var_a, var_b = a.var(axis=0), b.var(axis=0)
    mean_term = float(((mu_a - mu_b) ** 2).sum())
    var_term = float((var_a + var_b - 2.0 * np.sqrt(var_a * var_b)).sum())
    return mean_term + var_term


def consistency_rate(predict, variants) -> float:
    """Fraction of (target_grade, image) variants whose prediction recovers
    the generation target."""
    variants = list(variants)
    if not variants:
        raise ValueError("consistency_rate needs at least one variant")
    hits = sum(1 for grade, image in variants if predict(image) == grade)
    return hits / len(variants)


@dataclass(frozen=True)
class ProceduralBackend:
    """Local procedural renderer; no external calls."""


@dataclass(frozen=True)
class ExternalBackend:
    """HTTP generative service: POST {prompt, grade, image(b64 PNG)} -> PNG."""

    endpoint: str
    timeout: float = 30.0
    max_concurrency: int = 4

    def __post_init__(self):
        parsed = urllib.parse.urlparse(self.endpoint)
        if parsed.scheme not in ("http", "https") or not parsed.netloc:
            raise ValueError(f"invalid backend endpoint: {self.endpoint!r}")
        if self.timeout <= 0 or self.max_concurrency < 1:
            raise ValueError("timeout must be > 0 and max_concurrency >= 1")


BackendSlot = ProceduralBackend | ExternalBackend


class SynthesisClient:
    """Renders grade variants through the configured backend, degrading to the
    procedural renderer when the external service fails."""

    def __init__(self, backend: BackendSlot | None = None, params: RenderParams | None = None):
        self.backend = backend or ProceduralBackend()
        self.params = params or default_render_params()
        if isinstance(self.backend, ExternalBackend):
            self._gate = threading.BoundedSemaphore(self.backend.max_concurrency)

    def render(self, img: RasterImage, grade: AqiGrade, seed: int = 0) -> RasterImage:
        if isinstance(self.backend, ExternalBackend):
            try:
                return self._render_external(img, grade)
            except Exception as exc:  # degrade, never fail the request
                logger.warning(
                    "external synthesis backend failed (%s); using procedural renderer",
                    exc,
                )
        return render_variant(img, grade, self.params, seed)

    def render_all(self, img: RasterImage, seed: int = 0) -> list[tuple[AqiGrade, RasterImage]]:
        return [(g, self.render(img, g, seed)) for g in GRADES]

    def _render_external(self, img: RasterImage, grade: AqiGrade) -> RasterImage:
        import httpx

        backend = self.backend
        payload = {
            "prompt": prompt_for_grade(grade),
            "grade": grade.label,
            "image": base64.b64encode(encode_png(img)).decode("ascii"),
        }
        with self._gate:
            resp = httpx.post(backend.endpoint, json=payload, timeout=backend.timeout)
        resp.raise_for_status()
        out = decode_image(resp.content)
        if (out.height, out.width) != (img.height, img.width):
            raise SynthError(
                f"backend returned {out.height}x{out.width}, expected "
                f"{img.height}x{img.width}"
            )
        return out

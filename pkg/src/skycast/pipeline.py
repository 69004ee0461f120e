"""Shared plumbing between the CLI and the HTTP service: manifest-driven
preprocessing, feature matrices, model loading, and the single-image
prediction path (decode -> resize -> mask -> features -> classify).
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np

from . import classify, cnn
from .aqi import GRADES, AqiGrade
from .dataset import ManifestEntry
from .features import FeatureVector, GaborBank, extract_features
from .imaging import (
    RasterImage,
    SkyMask,
    augment,
    decode_image,
    heuristic_sky_mask,
    resize_bilinear,
)
from .synth import PROMPTS

logger = logging.getLogger(__name__)

WORKING_SIZE = 200


class PipelineError(Exception):
    pass


def load_image_file(path) -> RasterImage:
    with open(path, "rb") as fh:
        return decode_image(fh.read())


def mask_from_file(path, height: int, width: int) -> SkyMask:
    """Load a precomputed mask PNG (nonzero = sky), resampled to the working
    size when needed."""
    mask_img = load_image_file(path)
    bits = mask_img.pixels.max(axis=2) > 0
    if bits.shape != (height, width):
        binary = RasterImage(bits.astype(np.float64)[:, :, None])
        bits = resize_bilinear(binary, width, height).pixels[:, :, 0] >= 0.5
    return SkyMask(bits)


def prepare_entry(entry: ManifestEntry, base_dir, size: int = WORKING_SIZE):
    """Resolve one manifest entry to (image, mask) at the working size.

    Augmented entries re-derive their pixels from the source image. The mask
    comes from the entry's mask file when present, otherwise from the sky
    heuristic.
    """
    img = load_image_file(os.path.join(base_dir, entry.image_path))
    img = resize_bilinear(img, size, size)
    if entry.augment is not None:
        img = augment(img, entry.augment)
    if entry.mask_path:
        mask = mask_from_file(os.path.join(base_dir, entry.mask_path), size, size)
    else:
        mask = heuristic_sky_mask(img)
    return img, mask


def feature_matrix(
    entries, base_dir, bank: GaborBank | None = None, size: int = WORKING_SIZE
):
    """Gabor feature matrix (n, 4*|bank|) and labels for a manifest slice."""
    bank = bank or GaborBank.default()
    X = np.empty((len(entries), bank.feature_length))
    y = np.empty(len(entries), dtype=np.int64)
    for i, entry in enumerate(entries):
        img, mask = prepare_entry(entry, base_dir, size)
        X[i] = extract_features(img, mask, bank).values
        y[i] = entry.grade.value
        if (i + 1) % 50 == 0:
            logger.info("extracted features for %d/%d images", i + 1, len(entries))
    return X, y


def downscale_antialiased(img: RasterImage, size: int) -> RasterImage:
    """Resize with a Gaussian prefilter when shrinking, so fine texture does
    not alias into spurious low-frequency structure."""
    factor = min(img.height, img.width) / size
    if factor > 1.5:
        from scipy import ndimage

        sigma = 0.5 * factor
        px = ndimage.gaussian_filter(img.pixels, sigma=(sigma, sigma, 0.0), mode="nearest")
        img = RasterImage(np.clip(px, 0.0, 1.0))
    return resize_bilinear(img, size, size)


def image_matrix(entries, base_dir, size: int):
    """Raw pixel tensor (n, size, size, 3) and labels, for CNN training."""
    X = np.empty((len(entries), size, size, 3))
    y = np.empty(len(entries), dtype=np.int64)
    for i, entry in enumerate(entries):
        img = load_image_file(os.path.join(base_dir, entry.image_path))
        img = downscale_antialiased(img, size)
        if entry.augment is not None:
            img = augment(img, entry.augment)
        if img.channels == 1:
            px = np.repeat(img.pixels, 3, axis=2)
        else:
            px = img.pixels
        X[i] = px
        y[i] = entry.grade.value
    return X, y


@dataclass(frozen=True)
class MomentDigest:
    """Per-filter feature summary surfaced in prediction responses."""

    theta: float
    freq: float
    mean: float
    variance: float
    skewness: float
    kurtosis: float


@dataclass(frozen=True)
class Prediction:
    grade: AqiGrade
    probabilities: np.ndarray
    features: FeatureVector | None
    digest: list[MomentDigest]
    model_id: str


def _feature_digest(bank: GaborBank, fv: FeatureVector) -> list[MomentDigest]:
    out = []
    for i, p in enumerate(bank):
        m = fv.values[4 * i : 4 * i + 4]
        out.append(MomentDigest(p.theta, p.freq, *map(float, m)))
    return out


class GradePredictor:
    """A loaded model plus everything needed to take raw bytes to a grade."""

    def __init__(self, model, bank: GaborBank | None = None, size: int = WORKING_SIZE):
        self.model = model
        self.size = size
        if isinstance(model, cnn.CnnModel):
            self.bank = bank or GaborBank.default()
        else:
            self.bank = bank or model.bank or GaborBank.default()

    @property
    def model_id(self) -> str:
        return self.model.model_id

    @property
    def kind(self) -> str:
        if isinstance(self.model, classify.RandomForestModel):
            return "rf"
        if isinstance(self.model, classify.KnnModel):
            return "knn"
        return "cnn"

    def predict_raster(self, raster: RasterImage) -> Prediction:
        """Full path on a decoded image: resize, mask, features, classify.

        The mask and feature digest are always computed at the working size;
        a CNN model additionally gets the image resampled to its own input
        size for the forward pass.
        """
        img = resize_bilinear(raster, self.size, self.size)
        if img.channels == 1:
            img = RasterImage(np.repeat(img.pixels, 3, axis=2))
        mask = heuristic_sky_mask(img)
        fv = extract_features(img, mask, self.bank)
        if isinstance(self.model, classify.RandomForestModel):
            grade, probs = classify.rf_predict(self.model, fv.values)
        elif isinstance(self.model, classify.KnnModel):
            grade = classify.knn_predict(self.model, fv.values)
            probs = np.zeros(len(GRADES))
            probs[grade.value] = 1.0
        else:
            side = self.model.input_size
            net_in = img if side == self.size else downscale_antialiased(img, side)
            grade, probs = cnn.predict(self.model, net_in)
        return Prediction(
            grade=grade,
            probabilities=probs,
            features=fv,
            digest=_feature_digest(self.bank, fv),
            model_id=self.model_id,
        )

    def predict_bytes(self, data: bytes) -> Prediction:
        return self.predict_raster(decode_image(data))

    def predict_image(self, raster: RasterImage) -> AqiGrade:
        return self.predict_raster(raster).grade


def load_model(path):
    """Dispatch on the model file's magic header."""
    with open(path, encoding="utf-8") as fh:
        magic = fh.readline().strip()
    if magic == classify.RF_MAGIC:
        return classify.load_rf(path)
    if magic == classify.KNN_MAGIC:
        return classify.load_knn(path)
    if magic == cnn.CNN_MAGIC:
        return cnn.load_cnn(path)
    raise PipelineError(f"unrecognized model file {path!r} (header {magic!r})")


def grade_catalog() -> list[dict]:
    """The five grades with color, advice, prompt, and AQI band, in severity
    order; the metadata payload for UIs."""
    out = []
    for grade in GRADES:
        lo, hi = grade.aqi_band
        out.append(
            {
                "grade": grade.label,
                "color": grade.color,
                "advice": grade.advice,
                "prompt": PROMPTS[grade],
                "aqi_band": [lo, hi],
            }
        )
    return out

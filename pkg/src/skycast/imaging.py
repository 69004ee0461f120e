"""Image decode/encode, resizing, sky masking, and label-preserving augmentation.

Everything downstream works on :class:`RasterImage`, a float64 pixel grid in
[0, 1]. All operations here are pure functions; images are treated as
immutable values.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

# Rec.601 luma weights, used everywhere a scalar intensity is needed.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_JPEG_MAGIC = b"\xff\xd8\xff"


class ImagingError(Exception):
    """Base class for image handling failures."""


class MalformedImage(ImagingError):
    """Byte stream claims to be PNG/JPEG but cannot be decoded."""


class UnsupportedFormat(ImagingError):
    """Byte stream is neither PNG nor JPEG."""


class ZeroDimension(ImagingError):
    """Requested output size has a zero or negative dimension."""


class NoSkyDetected(ImagingError):
    """The sky heuristic found no sky pixels; callers must surface this."""


@dataclass(frozen=True)
class RasterImage:
    """Decoded pixel grid stored as (height, width, channels) float64 in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"expected a (h, w, 1|3) pixel array, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if not np.isfinite(px).all():
            raise ValueError("pixel intensities must be finite")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("pixel intensities must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


@dataclass(frozen=True)
class SkyMask:
    """Boolean per-pixel marker, True where the pixel belongs to the sky."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {bits.shape}")
        object.__setattr__(self, "bits", bits)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    @classmethod
    def full(cls, height: int, width: int) -> "SkyMask":
        return cls(np.ones((height, width), dtype=bool))


@dataclass(frozen=True)
class AugmentationSpec:
    """One augmentation draw. `seed` records the draw that produced the spec;
    applying the spec itself is fully deterministic."""

    horizontal_flip: bool = False
    contrast_normalize: bool = False
    gaussian_blur_sigma: float = 0.0
    rotation_degrees: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.gaussian_blur_sigma < 0:
            raise ValueError("blur sigma must be >= 0")
        if abs(self.rotation_degrees) > 10.0:
            raise ValueError("rotation must stay within +/-10 degrees")

    @property
    def is_identity(self) -> bool:
        return (
            not self.horizontal_flip
            and not self.contrast_normalize
            and self.gaussian_blur_sigma == 0.0
            and self.rotation_degrees == 0.0
        )


def to_gray(img: RasterImage) -> np.ndarray:
    """Luminance plane (h, w); Rec.601 weighting for color inputs."""
    px = img.pixels
    if px.shape[2] == 1:
        return px[:, :, 0]
    return px @ LUMA_WEIGHTS


def decode_image(data: bytes) -> RasterImage:
    """Decode a PNG or JPEG byte stream into a [0, 1] RasterImage.

    Grayscale sources map to 1 channel, everything else to 3 (RGB; alpha
    dropped). Raises :class:`UnsupportedFormat` for non-PNG/JPEG bytes and
    :class:`MalformedImage` for undecodable streams.
    """
    if data[: len(_PNG_MAGIC)] == _PNG_MAGIC:
        pass
    elif data[: len(_JPEG_MAGIC)] == _JPEG_MAGIC:
        pass
    else:
        raise UnsupportedFormat("input is not a PNG or JPEG stream")
    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            if im.mode in ("1", "L", "LA", "I", "I;16", "F"):
                arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
                arr = arr[:, :, None]
            else:
                arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise MalformedImage(f"cannot decode image: {exc}") from exc
    return RasterImage(arr)


def encode_png(img: RasterImage) -> bytes:
    """Encode losslessly as PNG, quantizing with round-half-up to 8 bits."""
    q = np.floor(img.pixels * 255.0 + 0.5).astype(np.uint8)
    if img.channels == 1:
        pil = Image.fromarray(q[:, :, 0], mode="L")
    else:
        pil = Image.fromarray(q, mode="RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def sample_bilinear(px: np.ndarray, yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
    """Sample a (h, w, c) array at fractional coordinates, clamping to edges.

    `yy`/`xx` are same-shaped grids of source coordinates; output has their
    shape plus the channel axis.
    """
    h, w = px.shape[:2]
    y0 = np.floor(yy).astype(np.int64)
    x0 = np.floor(xx).astype(np.int64)
    fy = (yy - y0)[..., None]
    fx = (xx - x0)[..., None]
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    top = px[y0c, x0c] * (1.0 - fx) + px[y0c, x1c] * fx
    bot = px[y1c, x0c] * (1.0 - fx) + px[y1c, x1c] * fx
    return top * (1.0 - fy) + bot * fy


def resize_bilinear(img: RasterImage, out_w: int, out_h: int) -> RasterImage:
    """Resize by point-sampled bilinear interpolation (half-pixel centers)."""
    if out_w < 1 or out_h < 1:
        raise ZeroDimension(f"cannot resize to {out_w}x{out_h}")
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * (img.height / out_h) - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * (img.width / out_w) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    out = sample_bilinear(img.pixels, yy, xx)
    return RasterImage(np.clip(out, 0.0, 1.0))


def _sky_color_rule(px: np.ndarray) -> np.ndarray:
    r, g, b = px[:, :, 0], px[:, :, 1], px[:, :, 2]
    lum = px @ LUMA_WEIGHTS
    mx = px.max(axis=2)
    mn = px.min(axis=2)
    sat = np.divide(mx - mn, mx, out=np.zeros_like(mx), where=mx > 0)
    blue_sky = (b >= 0.35) & (b >= r) & (lum >= 0.25)
    hazy_sky = (sat <= 0.15) & (lum >= 0.55)
    return blue_sky | hazy_sky


_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


def heuristic_sky_mask(img: RasterImage) -> SkyMask:
    """Mark sky pixels: sky-colored and 4-connected to the top row.

    A pixel is sky-colored when it is blue-ish (B >= 0.35, B >= R,
    luminance >= 0.25) or gray/hazy (saturation <= 0.15, luminance >= 0.55).
    Precomputed mask files, when available, should be used instead.
    """
    if img.channels != 3:
        raise ValueError("sky heuristic needs a 3-channel image")
    colored = _sky_color_rule(img.pixels)
    labels, _ = ndimage.label(colored, structure=_FOUR_CONNECTED)
    top_ids = np.unique(labels[0])
    top_ids = top_ids[top_ids != 0]
    bits = np.isin(labels, top_ids)
    if not bits.any():
        raise NoSkyDetected("no sky region found in the image")
    return SkyMask(bits)


def _rotate(px: np.ndarray, degrees: float) -> np.ndarray:
    h, w = px.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rad = math.radians(degrees)
    c, s = math.cos(rad), math.sin(rad)
    yy, xx = np.meshgrid(
        np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij"
    )
    dy = yy - cy
    dx = xx - cx
    # inverse map: sample the source pixel that lands on (yy, xx)
    sy = cy + c * dy + s * dx
    sx = cx - s * dy + c * dx
    return sample_bilinear(px, sy, sx)


def _minmax_normalize(px: np.ndarray) -> np.ndarray:
    out = px.copy()
    for ch in range(px.shape[2]):
        plane = px[:, :, ch]
        lo, hi = plane.min(), plane.max()
        if hi - lo > 1e-12:
            out[:, :, ch] = (plane - lo) / (hi - lo)
    return out


def augment(img: RasterImage, spec: AugmentationSpec) -> RasterImage:
    """Apply rotate, flip, blur, then contrast normalization, in that order.

    Deterministic given the spec; output dimensions are unchanged (rotation
    samples out-of-frame pixels by edge clamping).
    """
    px = img.pixels
    if spec.rotation_degrees != 0.0:
        px = _rotate(px, spec.rotation_degrees)
    if spec.horizontal_flip:
        px = px[:, ::-1, :]
    if spec.gaussian_blur_sigma > 0.0:
        sigma = spec.gaussian_blur_sigma
        px = ndimage.gaussian_filter(px, sigma=(sigma, sigma, 0.0), mode="nearest")
    if spec.contrast_normalize:
        px = _minmax_normalize(px)
    if px is img.pixels:
        return img
    return RasterImage(np.clip(px, 0.0, 1.0))

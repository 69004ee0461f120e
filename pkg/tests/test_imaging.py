import io

import numpy as np
import pytest
from PIL import Image

from skycast.imaging import (
    AugmentationSpec,
    MalformedImage,
    NoSkyDetected,
    RasterImage,
    UnsupportedFormat,
    ZeroDimension,
    augment,
    decode_image,
    encode_png,
    heuristic_sky_mask,
    resize_bilinear,
)


def _png_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def test_decode_white_pixel_png():
    data = _png_bytes(np.full((1, 1, 3), 255, dtype=np.uint8))
    img = decode_image(data)
    assert (img.height, img.width, img.channels) == (1, 1, 3)
    assert np.all(img.pixels == 1.0)


def test_decode_grayscale_keeps_one_channel():
    data = _png_bytes(np.full((4, 5), 128, dtype=np.uint8))
    img = decode_image(data)
    assert img.channels == 1
    assert img.pixels[0, 0, 0] == 128 / 255


def test_decode_truncated_png_is_malformed():
    data = _png_bytes(np.zeros((16, 16, 3), dtype=np.uint8))
    with pytest.raises(MalformedImage):
        decode_image(data[: len(data) // 2])


def test_decode_garbage_is_unsupported():
    with pytest.raises(UnsupportedFormat):
        decode_image(b"GIF89a not a png")
    with pytest.raises(UnsupportedFormat):
        decode_image(b"")


def test_decode_jpeg():
    buf = io.BytesIO()
    Image.fromarray(np.full((8, 8, 3), 200, dtype=np.uint8)).save(buf, format="JPEG")
    img = decode_image(buf.getvalue())
    assert img.channels == 3


def test_encode_round_trip_exact():
    rng = np.random.default_rng(0)
    for _ in range(5):
        img = decode_image(_png_bytes(rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)))
        again = decode_image(encode_png(img))
        assert np.array_equal(img.pixels, again.pixels)


def test_encode_quantizes_round_half_up():
    img = RasterImage(np.full((2, 2, 1), 0.5))
    decoded = Image.open(io.BytesIO(encode_png(img)))
    assert np.asarray(decoded)[0, 0] == 128


def test_encode_quantization_error_bound():
    rng = np.random.default_rng(1)
    img = RasterImage(rng.random((6, 6, 3)))
    back = decode_image(encode_png(img))
    assert np.abs(back.pixels - img.pixels).max() <= 1.0 / 255 / 2 + 1e-12


def test_raster_image_invariants():
    with pytest.raises(ValueError):
        RasterImage(np.full((2, 2, 3), 1.5))
    with pytest.raises(ValueError):
        RasterImage(np.zeros((2, 2, 4)))
    with pytest.raises(ValueError):
        RasterImage(np.zeros((0, 2, 3)))


def test_resize_constant_stays_constant():
    img = RasterImage(np.full((7, 5, 3), 0.37))
    out = resize_bilinear(img, 13, 4)
    assert (out.height, out.width) == (4, 13)
    assert np.abs(out.pixels - 0.37).max() < 1e-12


def test_resize_center_sample_oracle():
    # 2x2 checker to a single center sample: the four pixels average to 0.5
    img = RasterImage(np.array([[0.0, 1.0], [1.0, 0.0]])[:, :, None])
    out = resize_bilinear(img, 1, 1)
    assert out.pixels[0, 0, 0] == pytest.approx(0.5, abs=1e-12)


def test_resize_to_working_size():
    rng = np.random.default_rng(2)
    img = RasterImage(rng.random((400, 400, 3)))
    out = resize_bilinear(img, 200, 200)
    assert (out.height, out.width, out.channels) == (200, 200, 3)


def test_resize_identity_is_exact():
    rng = np.random.default_rng(3)
    img = RasterImage(rng.random((9, 11, 3)))
    out = resize_bilinear(img, 11, 9)
    assert np.array_equal(out.pixels, img.pixels)


def test_resize_zero_dimension():
    img = RasterImage(np.zeros((4, 4, 1)))
    with pytest.raises(ZeroDimension):
        resize_bilinear(img, 0, 4)


def test_sky_mask_uniform_blue():
    img = RasterImage(np.tile(np.array([0.4, 0.6, 0.9]), (10, 10, 1)))
    mask = heuristic_sky_mask(img)
    assert mask.count == 100
    assert (mask.height, mask.width) == (10, 10)


def test_sky_mask_dark_image_raises():
    img = RasterImage(np.full((10, 10, 3), 0.05))
    with pytest.raises(NoSkyDetected):
        heuristic_sky_mask(img)


def test_sky_mask_flood_fill_from_top():
    # blue sky over green grass; only the top half connects to the top row
    px = np.empty((10, 10, 3))
    px[:5] = [0.4, 0.6, 0.9]
    px[5:] = [0.2, 0.6, 0.2]
    mask = heuristic_sky_mask(RasterImage(px))
    assert mask.bits[:5].all()
    assert not mask.bits[5:].any()


def test_sky_mask_disconnected_blue_patch_excluded():
    # a sky-colored pond at the bottom, separated by grass, is not sky
    px = np.empty((12, 8, 3))
    px[:4] = [0.4, 0.6, 0.9]
    px[4:9] = [0.2, 0.55, 0.15]
    px[9:] = [0.4, 0.6, 0.9]
    mask = heuristic_sky_mask(RasterImage(px))
    assert mask.bits[:4].all()
    assert not mask.bits[9:].any()


def test_augment_identity_spec_is_identity():
    rng = np.random.default_rng(4)
    img = RasterImage(rng.random((12, 12, 3)))
    out = augment(img, AugmentationSpec())
    assert np.array_equal(out.pixels, img.pixels)


def test_flip_is_involution():
    rng = np.random.default_rng(5)
    img = RasterImage(rng.random((6, 9, 3)))
    spec = AugmentationSpec(horizontal_flip=True)
    twice = augment(augment(img, spec), spec)
    assert np.array_equal(twice.pixels, img.pixels)


def test_rotation_zero_is_identity():
    rng = np.random.default_rng(6)
    img = RasterImage(rng.random((8, 8, 3)))
    out = augment(img, AugmentationSpec(rotation_degrees=0.0))
    assert np.array_equal(out.pixels, img.pixels)


def test_rotation_preserves_dims():
    rng = np.random.default_rng(7)
    img = RasterImage(rng.random((20, 30, 3)))
    out = augment(img, AugmentationSpec(rotation_degrees=7.5))
    assert (out.height, out.width) == (20, 30)


def test_contrast_normalization_hits_full_range():
    rng = np.random.default_rng(8)
    px = rng.uniform(0.2, 0.6, (16, 16, 3))
    out = augment(RasterImage(px), AugmentationSpec(contrast_normalize=True))
    for ch in range(3):
        assert out.pixels[:, :, ch].min() == pytest.approx(0.0, abs=1e-12)
        assert out.pixels[:, :, ch].max() == pytest.approx(1.0, abs=1e-12)


def test_blur_preserves_constant_interior():
    img = RasterImage(np.full((20, 20, 3), 0.6))
    out = augment(img, AugmentationSpec(gaussian_blur_sigma=1.2))
    assert np.abs(out.pixels[5:15, 5:15] - 0.6).max() < 1e-6


def test_augment_spec_validation():
    with pytest.raises(ValueError):
        AugmentationSpec(rotation_degrees=11.0)
    with pytest.raises(ValueError):
        AugmentationSpec(gaussian_blur_sigma=-0.1)

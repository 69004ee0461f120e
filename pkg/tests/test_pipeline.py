import os

import numpy as np
import pytest

from skycast.aqi import AqiGrade
from skycast.dataset import ManifestEntry
from skycast.features import GaborBank
from skycast.imaging import AugmentationSpec, RasterImage, encode_png
from skycast.pipeline import (
    GradePredictor,
    PipelineError,
    feature_matrix,
    grade_catalog,
    load_model,
    mask_from_file,
    prepare_entry,
)


def _write_png(path, px):
    with open(path, "wb") as fh:
        fh.write(encode_png(RasterImage(px)))


@pytest.fixture
def image_dir(tmp_path):
    rng = np.random.default_rng(0)
    sky = np.empty((40, 40, 3))
    sky[:] = [0.4, 0.6, 0.9]
    sky += rng.normal(0, 0.02, sky.shape)
    _write_png(tmp_path / "sky.png", np.clip(sky, 0, 1))
    mask = np.zeros((40, 40, 1))
    mask[:20] = 1.0
    _write_png(tmp_path / "mask.png", mask)
    return tmp_path


def test_prepare_entry_uses_mask_file(image_dir):
    entry = ManifestEntry(
        image_path="sky.png", grade=AqiGrade.GOOD, mask_path="mask.png"
    )
    img, mask = prepare_entry(entry, image_dir, size=40)
    assert (img.height, img.width) == (40, 40)
    assert mask.bits[:20].all()
    assert not mask.bits[20:].any()


def test_mask_file_nonzero_means_sky(tmp_path):
    # faint nonzero values still count as sky
    faint = np.zeros((10, 10, 1))
    faint[:4] = 2.0 / 255
    _write_png(tmp_path / "m.png", faint)
    mask = mask_from_file(tmp_path / "m.png", 10, 10)
    assert mask.bits[:4].all()
    assert not mask.bits[4:].any()


def test_mask_file_resampled(tmp_path):
    mask = np.zeros((20, 20, 1))
    mask[:10] = 1.0
    _write_png(tmp_path / "m.png", mask)
    out = mask_from_file(tmp_path / "m.png", 40, 40)
    assert (out.height, out.width) == (40, 40)
    assert out.bits[:18].all()
    assert not out.bits[22:].any()


def test_prepare_entry_applies_augmentation(image_dir):
    plain = ManifestEntry(image_path="sky.png", grade=AqiGrade.GOOD)
    flipped = ManifestEntry(
        image_path="sky.png",
        grade=AqiGrade.GOOD,
        augment=AugmentationSpec(horizontal_flip=True),
    )
    img_a, _ = prepare_entry(plain, image_dir, size=40)
    img_b, _ = prepare_entry(flipped, image_dir, size=40)
    assert np.array_equal(img_b.pixels, img_a.pixels[:, ::-1, :])


def test_feature_matrix_shapes(image_dir):
    entries = [
        ManifestEntry(image_path="sky.png", grade=AqiGrade.GOOD),
        ManifestEntry(
            image_path="sky.png",
            grade=AqiGrade.MODERATE,
            augment=AugmentationSpec(rotation_degrees=4.0, seed=1),
        ),
    ]
    bank = GaborBank.default()
    X, y = feature_matrix(entries, image_dir, bank, size=80)
    assert X.shape == (2, 48)
    assert list(y) == [0, 1]
    assert np.isfinite(X).all()


def test_load_model_rejects_unknown_file(tmp_path):
    path = tmp_path / "bogus.model"
    path.write_text("NOT-A-MODEL v9\n{}\n")
    with pytest.raises(PipelineError):
        load_model(path)


def test_load_model_dispatch(tmp_path, mini_rf_model):
    model = load_model(mini_rf_model)
    predictor = GradePredictor(model)
    assert predictor.kind == "rf"
    assert predictor.model_id.startswith("skycast-rf-")


def test_predictor_serves_cnn_with_small_input(tmp_path):
    # the 69px bank kernels must still fit: features run at the working size
    # even when the CNN itself consumes 64px inputs
    from skycast import cnn
    from skycast.dataset import render_base_sky

    model = cnn.CnnModel("C(2)(3)-S(2)", input_size=64, seed=0)
    path = tmp_path / "tiny.cnn"
    cnn.save_cnn(model, path)
    predictor = GradePredictor(load_model(path))
    assert predictor.kind == "cnn"
    sky = render_base_sky(200, np.random.default_rng(3))
    result = predictor.predict_raster(sky)
    assert result.probabilities.sum() == pytest.approx(1.0, abs=1e-6)
    assert len(result.digest) == 12


def test_grade_catalog_contract():
    catalog = grade_catalog()
    assert len(catalog) == 5
    assert [c["grade"] for c in catalog] == [
        "Good",
        "Moderate",
        "Unhealthy for Sensitive Groups",
        "Unhealthy",
        "Very Unhealthy",
    ]
    assert catalog[0]["aqi_band"] == [0, 50]
    assert catalog[-1]["aqi_band"] == [201, None]
    assert all(c["prompt"] for c in catalog)

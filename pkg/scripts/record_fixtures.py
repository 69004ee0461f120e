#!/usr/bin/env python3
"""Re-record the frontend API fixtures from a live in-process service.

Trains a small RF on a fresh synthetic corpus, boots the app, replays the
canonical requests, and writes the responses to frontend/fixtures/.
"""

import json
import os
import sys
import tempfile

import numpy as np
from fastapi.testclient import TestClient

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from skycast import classify
from skycast.dataset import (
    SyntheticSkyConfig,
    apply_split,
    generate_synthetic_dataset,
    render_base_sky,
    stratified_split,
)
from skycast.features import GaborBank
from skycast.imaging import RasterImage, encode_png
from skycast.pipeline import feature_matrix
from skycast.service import ServiceConfig, create_app

OUT_DIR = os.path.join(os.path.dirname(__file__), "..", "frontend", "fixtures")


def main() -> None:
    tmp = tempfile.mkdtemp()
    cfg = SyntheticSkyConfig(images_per_grade=6, image_size=200, seed=123)
    _, entries = generate_synthetic_dataset(cfg, tmp)
    entries = apply_split(entries, stratified_split(entries, seed=1))
    bank = GaborBank.default()
    train = [e for e in entries if e.split == "train"]
    X, y = feature_matrix(train, tmp, bank)
    model = classify.train_random_forest(
        X, y, classify.RandomForestConfig(n_trees=30, seed=0)
    )
    model.schema_id = bank.schema_id
    model.bank = bank
    model_path = os.path.join(tmp, "fixture.rf")
    classify.save_rf(model, model_path)

    client = TestClient(create_app(ServiceConfig(rf_model=model_path)))
    os.makedirs(OUT_DIR, exist_ok=True)

    def dump(name, doc):
        with open(os.path.join(OUT_DIR, name), "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        print("recorded", name)

    dump("meta.json", client.get("/api/meta").json())

    clear = encode_png(render_base_sky(200, np.random.default_rng([777, 0])))
    resp = client.post("/api/predict", files={"image": ("sky.png", clear, "image/png")})
    assert resp.status_code == 200 and resp.json()["grade"] == "Good"
    dump("predict_good.json", resp.json())

    dark = encode_png(RasterImage(np.full((64, 64, 3), 0.03)))
    resp = client.post("/api/predict", files={"image": ("night.png", dark, "image/png")})
    assert resp.status_code == 422
    dump("predict_no_sky.json", resp.json())

    small = encode_png(render_base_sky(48, np.random.default_rng([777, 1])))
    resp = client.post("/api/synthesize", files={"image": ("sky.png", small, "image/png")})
    assert resp.status_code == 200
    dump("synthesize.json", resp.json())


if __name__ == "__main__":
    main()

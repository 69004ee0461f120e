import os

import pytest

from skycast import classify
from skycast.dataset import (
    SyntheticSkyConfig,
    apply_split,
    generate_synthetic_dataset,
    stratified_split,
)
from skycast.features import GaborBank
from skycast.pipeline import feature_matrix


@pytest.fixture(scope="session")
def mini_corpus(tmp_path_factory):
    """A small synthetic corpus shared across service/CLI tests."""
    root = tmp_path_factory.mktemp("mini_corpus")
    cfg = SyntheticSkyConfig(images_per_grade=6, image_size=200, seed=123)
    manifest_path, entries = generate_synthetic_dataset(cfg, root)
    entries = apply_split(entries, stratified_split(entries, seed=1))
    from skycast.dataset import save_manifest

    save_manifest(entries, manifest_path)
    return {"root": root, "manifest": manifest_path, "entries": entries}


@pytest.fixture(scope="session")
def mini_rf_model(mini_corpus, tmp_path_factory):
    """An RF trained on the mini corpus, saved as a model file."""
    bank = GaborBank.default()
    train_entries = [e for e in mini_corpus["entries"] if e.split == "train"]
    X, y = feature_matrix(train_entries, mini_corpus["root"], bank)
    model = classify.train_random_forest(
        X, y, classify.RandomForestConfig(n_trees=30, seed=0)
    )
    model.schema_id = bank.schema_id
    model.bank = bank
    path = tmp_path_factory.mktemp("models") / "mini.rf"
    classify.save_rf(model, path)
    return str(path)

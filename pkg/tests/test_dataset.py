import json
import os

import numpy as np
import pytest

from skycast.aqi import GRADES, AqiGrade
from skycast.dataset import (
    ClassTooSmall,
    ManifestEntry,
    MissingLabel,
    ParseError,
    SyntheticSkyConfig,
    apply_split,
    balance_by_augmentation,
    generate_synthetic_dataset,
    largest_remainder,
    load_manifest,
    save_manifest,
    stratified_split,
)
from skycast.pipeline import load_image_file


def _write(tmp_path, lines):
    path = tmp_path / "manifest.jsonl"
    path.write_text("\n".join(json.dumps(rec) for rec in lines) + "\n")
    return path


def test_load_manifest_table1_pollutants_only(tmp_path):
    # the published sample record: pollutants plus its AQI, no grade field
    path = _write(
        tmp_path,
        [{"image": "a.png", "pm25": 35, "pm10": 103, "o3": 9, "co": 2.7, "no2": 45, "aqi": 110}],
    )
    entries = load_manifest(path)
    assert entries[0].grade is AqiGrade.UNHEALTHY_SENSITIVE


def test_load_manifest_grade_from_concentrations(tmp_path):
    path = _write(tmp_path, [{"image": "a.png", "pm25": 45.0}])
    entries = load_manifest(path)
    # pm25 45 interpolates to AQI ~124 -> Unhealthy for Sensitive Groups
    assert entries[0].grade is AqiGrade.UNHEALTHY_SENSITIVE


def test_load_manifest_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert load_manifest(path) == []


def test_load_manifest_unknown_grade(tmp_path):
    path = _write(tmp_path, [{"image": "a.png", "grade": "Purple"}])
    with pytest.raises(ParseError) as err:
        load_manifest(path)
    assert err.value.line == 1


def test_load_manifest_unknown_field_rejected(tmp_path):
    path = _write(tmp_path, [{"image": "a.png", "grade": "Good", "wind": 3}])
    with pytest.raises(ParseError):
        load_manifest(path)


def test_load_manifest_missing_label(tmp_path):
    path = _write(tmp_path, [{"image": "a.png"}])
    with pytest.raises(MissingLabel):
        load_manifest(path)


def test_load_manifest_line_numbers(tmp_path):
    path = _write(
        tmp_path,
        [{"image": "a.png", "grade": "Good"}, {"image": "b.png", "grade": "Bad"}],
    )
    with pytest.raises(ParseError) as err:
        load_manifest(path)
    assert err.value.line == 2


def test_manifest_round_trip(tmp_path):
    entries = [
        ManifestEntry(image_path="x.png", grade=AqiGrade.GOOD, split="train"),
        ManifestEntry(image_path="y.png", grade=AqiGrade.UNHEALTHY, mask_path="y_mask.png"),
    ]
    path = tmp_path / "m.jsonl"
    save_manifest(entries, path)
    loaded = load_manifest(path)
    assert [e.image_path for e in loaded] == ["x.png", "y.png"]
    assert loaded[0].split == "train"
    assert loaded[1].mask_path == "y_mask.png"


def test_largest_remainder_exact_and_total():
    assert largest_remainder(100, (0.7, 0.15, 0.15)) == [70, 15, 15]
    assert largest_remainder(40, (0.7, 0.15, 0.15)) == [28, 6, 6]
    assert largest_remainder(15, (0.7, 0.15, 0.15)) == [11, 2, 2]
    assert largest_remainder(5, (0.7, 0.15, 0.15)) == [3, 1, 1]
    for n in range(3, 60):
        parts = largest_remainder(n, (0.7, 0.15, 0.15))
        assert sum(parts) == n


def _entries_with_counts(counts):
    entries = []
    for grade, n in zip(GRADES, counts):
        for i in range(n):
            entries.append(ManifestEntry(image_path=f"{grade.name}_{i}.png", grade=grade))
    return entries


def test_stratified_split_largest_remainder_math():
    entries = _entries_with_counts([40, 30, 15, 10, 5])
    assignment = stratified_split(entries, seed=3)
    tags = assignment.tags
    train_per_class = []
    pos = 0
    for n in (40, 30, 15, 10, 5):
        class_tags = tags[pos : pos + n]
        train_per_class.append(class_tags.count("train"))
        pos += n
    assert train_per_class == [28, 21, 11, 7, 3]
    assert tags.count("train") == 70


def test_stratified_split_exact_on_balanced():
    entries = _entries_with_counts([100, 100, 100, 100, 100])
    counts = stratified_split(entries, seed=0).counts()
    assert counts == {"train": 350, "val": 75, "test": 75}


def test_stratified_split_deterministic_and_seed_sensitive():
    entries = _entries_with_counts([20, 20, 20, 20, 20])
    a = stratified_split(entries, seed=5)
    b = stratified_split(entries, seed=5)
    c = stratified_split(entries, seed=6)
    assert a.tags == b.tags
    assert a.tags != c.tags


def test_stratified_split_disjoint_exhaustive():
    entries = _entries_with_counts([13, 9, 21, 6, 17])
    tags = stratified_split(entries, seed=1).tags
    assert len(tags) == len(entries)
    assert all(t in ("train", "val", "test") for t in tags)


def test_stratified_split_class_too_small():
    entries = _entries_with_counts([10, 10, 2, 10, 10])
    with pytest.raises(ClassTooSmall):
        stratified_split(entries, seed=0)


def test_apply_split_tags_entries():
    entries = _entries_with_counts([5, 5, 5, 5, 5])
    tagged = apply_split(entries, stratified_split(entries, seed=2))
    assert all(e.split in ("train", "val", "test") for e in tagged)


def test_balance_pads_minority_classes():
    entries = _entries_with_counts([30, 10, 30, 30, 30])
    out = balance_by_augmentation(entries, target=30, seed=0)
    assert len(out) == len(entries) + 20
    added = out[len(entries) :]
    assert all(e.grade is AqiGrade.MODERATE for e in added)
    assert all(e.augment is not None for e in added)
    # augmented records reference existing source images
    sources = {e.image_path for e in entries if e.grade is AqiGrade.MODERATE}
    assert all(e.image_path in sources for e in added)


def test_balance_noop_when_balanced():
    entries = _entries_with_counts([10, 10, 10, 10, 10])
    assert balance_by_augmentation(entries, target=10, seed=0) == entries


def test_balance_specs_within_protocol_ranges():
    entries = _entries_with_counts([3, 40, 40, 40, 40])
    out = balance_by_augmentation(entries, target=40, seed=7)
    specs = [e.augment for e in out if e.augment is not None]
    assert len(specs) == 37
    for spec in specs:
        assert abs(spec.rotation_degrees) <= 10.0
        assert 0.0 <= spec.gaussian_blur_sigma <= 1.5


def test_balance_deterministic():
    entries = _entries_with_counts([5, 20, 20, 20, 20])
    a = balance_by_augmentation(entries, target=20, seed=3)
    b = balance_by_augmentation(entries, target=20, seed=3)
    assert a == b


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    cfg = SyntheticSkyConfig(images_per_grade=3, image_size=64, seed=11)
    manifest_path, entries = generate_synthetic_dataset(cfg, out)
    return out, manifest_path, entries


def test_generate_counts_and_manifest(small_corpus):
    out, manifest_path, entries = small_corpus
    assert len(entries) == 15
    loaded = load_manifest(manifest_path)
    assert len(loaded) == 15
    per_grade = {g: sum(1 for e in loaded if e.grade == g) for g in GRADES}
    assert all(n == 3 for n in per_grade.values())
    for e in loaded:
        assert os.path.exists(os.path.join(out, e.image_path))


def test_generate_deterministic(tmp_path):
    cfg = SyntheticSkyConfig(images_per_grade=2, image_size=48, seed=9)
    _, entries_a = generate_synthetic_dataset(cfg, tmp_path / "a")
    _, entries_b = generate_synthetic_dataset(cfg, tmp_path / "b")
    for ea, eb in zip(entries_a, entries_b):
        img_a = load_image_file(os.path.join(tmp_path / "a", ea.image_path))
        img_b = load_image_file(os.path.join(tmp_path / "b", eb.image_path))
        assert np.array_equal(img_a.pixels, img_b.pixels)


def test_generated_saturation_orders_good_above_very_unhealthy(small_corpus):
    out, _, entries = small_corpus

    def mean_sat(img):
        px = img.pixels
        mx, mn = px.max(axis=2), px.min(axis=2)
        return float(np.divide(mx - mn, mx, out=np.zeros_like(mx), where=mx > 0).mean())

    sats = {g: [] for g in GRADES}
    for e in entries:
        sats[e.grade].append(mean_sat(load_image_file(os.path.join(out, e.image_path))))
    assert np.mean(sats[AqiGrade.GOOD]) > np.mean(sats[AqiGrade.VERY_UNHEALTHY])


def test_synthetic_config_validation():
    with pytest.raises(ValueError):
        SyntheticSkyConfig(images_per_grade=0)
    with pytest.raises(ValueError):
        SyntheticSkyConfig(image_size=4)

"""Manifest ingestion, stratified splitting, class balancing, and the
procedural synthetic-sky corpus generator.

Manifests are JSON-lines files, one record per image, with fields
{image, mask?, pm25?, pm10?, o3?, co?, no2?, aqi?, grade?, split?, augment?}.
Unknown fields are rejected. Grades resolve with precedence
grade > aqi > composite of the pollutant concentrations.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from . import aqi as aqi_mod
from .aqi import GRADES, AqiGrade, PollutantRecord
from .imaging import AugmentationSpec, RasterImage, encode_png
from .synth import RenderParams, default_render_params, render_variant, value_noise

SPLITS = ("train", "val", "test")
DEFAULT_RATIOS = (0.70, 0.15, 0.15)

_POLLUTANT_FIELDS = ("pm25", "pm10", "o3", "co", "no2")
_KNOWN_FIELDS = {"image", "mask", "aqi", "grade", "split", "augment", *_POLLUTANT_FIELDS}
_AUGMENT_FIELDS = {
    "horizontal_flip",
    "contrast_normalize",
    "gaussian_blur_sigma",
    "rotation_degrees",
    "seed",
}
# Blur draws for minority-class padding; rotation range comes from the
# labeling protocol (+/-10 degrees), blur is capped where it stays
# label-preserving at 200x200.
_AUGMENT_BLUR_MAX = 1.5


class DatasetError(Exception):
    """Base class for manifest/split failures."""


class ParseError(DatasetError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class MissingLabel(ParseError):
    pass


class ClassTooSmall(DatasetError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    """One labeled image. Augmented entries reference their source image plus
    the spec that derives them; no pixel data is duplicated on disk."""

    image_path: str
    grade: AqiGrade
    mask_path: str | None = None
    pollutants: PollutantRecord | None = None
    aqi: float | None = None
    split: str | None = None
    augment: AugmentationSpec | None = None

    def __post_init__(self):
        if not self.image_path:
            raise ValueError("image path must be nonempty")
        if self.split is not None and self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}")


def _parse_record(doc: dict, line_no: int) -> ManifestEntry:
    unknown = set(doc) - _KNOWN_FIELDS
    if unknown:
        raise ParseError(line_no, f"unknown fields: {sorted(unknown)}")
    image = doc.get("image")
    if not isinstance(image, str) or not image:
        raise ParseError(line_no, "missing or empty 'image' field")

    pollutants = None
    if any(doc.get(name) is not None for name in _POLLUTANT_FIELDS):
        try:
            pollutants = PollutantRecord(
                **{name: doc.get(name) for name in _POLLUTANT_FIELDS}
            )
        except (ValueError, aqi_mod.AqiError) as exc:
            raise ParseError(line_no, f"bad pollutant values: {exc}") from exc

    aqi_value = doc.get("aqi")
    if aqi_value is not None:
        aqi_value = float(aqi_value)
        if not math.isfinite(aqi_value) or aqi_value < 0:
            raise ParseError(line_no, "aqi must be finite and >= 0")

    if doc.get("grade") is not None:
        try:
            grade = AqiGrade.from_label(doc["grade"])
        except ValueError as exc:
            raise ParseError(line_no, str(exc)) from exc
    elif aqi_value is not None:
        grade = aqi_mod.grade_of_aqi(aqi_value)
    elif pollutants is not None:
        grade = aqi_mod.grade_of_aqi(aqi_mod.composite_aqi(pollutants))
    else:
        raise MissingLabel(line_no, "record has neither grade, aqi, nor pollutants")

    split = doc.get("split")
    if split is not None and split not in SPLITS:
        raise ParseError(line_no, f"unknown split {split!r}")

    augment = None
    if doc.get("augment") is not None:
        spec = doc["augment"]
        if not isinstance(spec, dict) or set(spec) - _AUGMENT_FIELDS:
            raise ParseError(line_no, "malformed augment record")
        try:
            augment = AugmentationSpec(**spec)
        except (TypeError, ValueError) as exc:
            raise ParseError(line_no, f"bad augment spec: {exc}") from exc

    return ManifestEntry(
        image_path=image,
        grade=grade,
        mask_path=doc.get("mask"),
        pollutants=pollutants,
        aqi=aqi_value,
        split=split,
        augment=augment,
    )


def load_manifest(path) -> list[ManifestEntry]:
    """Parse a JSONL manifest; errors carry 1-based line numbers."""
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(line_no, f"invalid JSON: {exc}") from exc
            if not isinstance(doc, dict):
                raise ParseError(line_no, "record must be a JSON object")
            entries.append(_parse_record(doc, line_no))
    return entries


def _entry_to_record(entry: ManifestEntry) -> dict:
    doc: dict = {"image": entry.image_path}
    if entry.mask_path:
        doc["mask"] = entry.mask_path
    if entry.pollutants is not None:
        for name, value in entry.pollutants.items():
            doc[name] = value
    if entry.aqi is not None:
        doc["aqi"] = entry.aqi
    doc["grade"] = entry.grade.label
    if entry.split is not None:
        doc["split"] = entry.split
    if entry.augment is not None:
        doc["augment"] = dataclasses.asdict(entry.augment)
    return doc


def save_manifest(entries, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(_entry_to_record(entry)) + "\n")


@dataclass(frozen=True)
class SplitAssignment:
    """Per-entry split tags, aligned with the entry list that produced them."""

    tags: tuple[str, ...]
    ratios: tuple[float, float, float]
    seed: int

    def counts(self) -> dict[str, int]:
        return {s: self.tags.count(s) for s in SPLITS}


def largest_remainder(n: int, ratios) -> list[int]:
    """Allocate n items proportionally; remainders go to the largest
    fractional parts, ties to the earlier bucket."""
    quotas = [n * r for r in ratios]
    base = [math.floor(q) for q in quotas]
    left = n - sum(base)
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - base[i]), i))
    for i in order[:left]:
        base[i] += 1
    return base


def stratified_split(entries, ratios=DEFAULT_RATIOS, seed: int = 0) -> SplitAssignment:
    """Seeded per-class shuffle, then largest-remainder allocation to
    train/val/test. Deterministic given (entries, ratios, seed)."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must be three positive numbers summing to 1")
    by_class: dict[AqiGrade, list[int]] = {g: [] for g in GRADES}
    for i, entry in enumerate(entries):
        by_class[entry.grade].append(i)
    tags: list[str | None] = [None] * len(list(entries))
    rng = np.random.default_rng(seed)
    for grade in GRADES:
        idx = by_class[grade]
        if not idx:
            continue
        if len(idx) < 3:
            raise ClassTooSmall(
                f"class {grade.label!r} has {len(idx)} entries; need at least 3"
            )
        perm = rng.permutation(len(idx))
        shuffled = [idx[j] for j in perm]
        n_train, n_val, _ = largest_remainder(len(idx), ratios)
        for pos, entry_idx in enumerate(shuffled):
            if pos < n_train:
                tags[entry_idx] = "train"
            elif pos < n_train + n_val:
                tags[entry_idx] = "val"
            else:
                tags[entry_idx] = "test"
    return SplitAssignment(tuple(tags), ratios, seed)


def apply_split(entries, assignment: SplitAssignment) -> list[ManifestEntry]:
    return [
        dataclasses.replace(entry, split=tag)
        for entry, tag in zip(entries, assignment.tags)
    ]


def balance_by_augmentation(train_entries, target: int, seed: int = 0) -> list[ManifestEntry]:
    """Pad minority classes up to `target` with augmented copies.

    Augmentation specs are drawn from the labeling protocol's ranges
    (flip/contrast coin flips, blur sigma in [0, 1.5], rotation within +/-10
    degrees). Classes at or above target are untouched; originals come first
    in the output, augmented records are appended in class order.
    """
    entries = list(train_entries)
    by_class: dict[AqiGrade, list[ManifestEntry]] = {g: [] for g in GRADES}
    for entry in entries:
        by_class[entry.grade].append(entry)
    out = list(entries)
    for grade in GRADES:
        members = by_class[grade]
        deficit = target - len(members)
        if not members or deficit <= 0:
            continue
        rng = np.random.default_rng([seed, grade.value])
        order = rng.permutation(len(members))
        for i in range(deficit):
            src = members[order[i % len(members)]]
            spec = AugmentationSpec(
                horizontal_flip=bool(rng.random() < 0.5),
                contrast_normalize=bool(rng.random() < 0.5),
                gaussian_blur_sigma=float(rng.uniform(0.0, _AUGMENT_BLUR_MAX)),
                rotation_degrees=float(rng.uniform(-10.0, 10.0)),
                seed=int(rng.integers(2**32)),
            )
            out.append(dataclasses.replace(src, augment=spec))
    return out


@dataclass(frozen=True)
class SyntheticSkyConfig:
    """Generator settings; render parameters are shared with the
    counterfactual renderer so both express one visual model per grade."""

    images_per_grade: int = 100
    image_size: int = 200
    seed: int = 0
    render_params: RenderParams | None = None

    def __post_init__(self):
        if self.images_per_grade < 1:
            raise ValueError("images_per_grade must be >= 1")
        if self.image_size < 16:
            raise ValueError("image_size must be >= 16")


def render_base_sky(size: int, rng: np.random.Generator) -> RasterImage:
    """A clean procedural sky: vertical blue gradient plus a noise cloud layer."""
    zenith = np.array(
        [rng.uniform(0.10, 0.25), rng.uniform(0.35, 0.55), rng.uniform(0.75, 0.95)]
    )
    horizon = np.array(
        [rng.uniform(0.55, 0.75), rng.uniform(0.75, 0.90), rng.uniform(0.90, 1.00)]
    )
    t = np.linspace(0.0, 1.0, size)[:, None, None]
    curve = rng.uniform(0.8, 1.5)
    w = t**curve
    px = (1.0 - w) * zenith + w * horizon
    px = np.broadcast_to(px, (size, size, 3)).copy()
    clouds = value_noise(size, size, rng, base_cell=max(4, size // 6), octaves=3)
    cover = rng.uniform(0.30, 0.50)
    alpha = np.clip((clouds - (1.0 - cover)) / 0.30, 0.0, 1.0) * rng.uniform(0.50, 0.80)
    cloud_color = np.array([0.97, 0.97, 0.98])
    px = px * (1.0 - alpha[:, :, None]) + alpha[:, :, None] * cloud_color
    return RasterImage(np.clip(px, 0.0, 1.0))


_GRADE_FILE_KEYS = {
    AqiGrade.GOOD: "good",
    AqiGrade.MODERATE: "moderate",
    AqiGrade.UNHEALTHY_SENSITIVE: "usg",
    AqiGrade.UNHEALTHY: "unhealthy",
    AqiGrade.VERY_UNHEALTHY: "very_unhealthy",
}


def generate_synthetic_dataset(cfg: SyntheticSkyConfig, out_dir) -> tuple[str, list[ManifestEntry]]:
    """Render images_per_grade skies per grade, write PNGs plus a manifest,
    and return (manifest_path, entries). Deterministic given cfg.seed."""
    params = cfg.render_params or default_render_params()
    images_dir = os.path.join(out_dir, "images")
    os.makedirs(images_dir, exist_ok=True)
    entries = []
    for g_idx, grade in enumerate(GRADES):
        for i in range(cfg.images_per_grade):
            rng = np.random.default_rng([cfg.seed, g_idx, i])
            base = render_base_sky(cfg.image_size, rng)
            variant_seed = int(rng.integers(2**31))
            img = render_variant(base, grade, params, seed=variant_seed)
            name = f"{_GRADE_FILE_KEYS[grade]}_{i:04d}.png"
            with open(os.path.join(images_dir, name), "wb") as fh:
                fh.write(encode_png(img))
            entries.append(
                ManifestEntry(image_path=os.path.join("images", name), grade=grade)
            )
    manifest_path = os.path.join(out_dir, "manifest.jsonl")
    save_manifest(entries, manifest_path)
    return manifest_path, entries

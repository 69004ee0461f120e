"""Command-line entry points.

Subcommands: dataset gen|split|balance, train, eval, predict, synthesize,
serve, bench. Exit codes: 0 success, 1 usage error, 2 runtime error.
Every command touching randomness accepts --seed.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import classify, cnn, report
from .aqi import GRADES, AqiGrade
from .dataset import (
    DEFAULT_RATIOS,
    SyntheticSkyConfig,
    apply_split,
    balance_by_augmentation,
    generate_synthetic_dataset,
    load_manifest,
    save_manifest,
    stratified_split,
)
from .features import GaborBank, extract_features
from .imaging import SkyMask, decode_image, encode_png, heuristic_sky_mask, resize_bilinear
from .pipeline import (
    GradePredictor,
    feature_matrix,
    image_matrix,
    load_image_file,
    load_model,
)
from .synth import (
    RenderParams,
    default_render_params,
    prompt_for_grade,
    render_variant,
    ssim,
)

DEFAULT_ARCH = "C(6)(5)-S(2)-C(6)(5)-S(2)-C(10)(5)"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors, synopsis on stderr
        raise UsageError(f"{message}\n{self.format_usage()}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="skycast", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    ds = sub.add_parser("dataset", help="generate, split, or balance a manifest")
    ds_sub = ds.add_subparsers(dest="dataset_command", required=True)

    gen = ds_sub.add_parser("gen", help="render a synthetic labeled sky corpus")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--per-grade", type=int, default=100)
    gen.add_argument("--size", type=int, default=200)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--report-dir", help="write a sample-grid figure here")

    split = ds_sub.add_parser("split", help="stratified 70/15/15 split")
    split.add_argument("--manifest", required=True)
    split.add_argument("--ratios", type=float, nargs=3, default=list(DEFAULT_RATIOS))
    split.add_argument("--seed", type=int, default=0)
    split.add_argument("--out", help="output manifest (default: rewrite in place)")

    balance = ds_sub.add_parser("balance", help="pad minority classes with augmentations")
    balance.add_argument("--manifest", required=True)
    balance.add_argument("--target", type=int, required=True)
    balance.add_argument("--seed", type=int, default=0)
    balance.add_argument("--out", help="output manifest (default: rewrite in place)")

    train = sub.add_parser("train", help="train a model on a manifest")
    train.add_argument("--model", choices=("rf", "knn", "cnn"), required=True)
    train.add_argument("--manifest", required=True)
    train.add_argument("--out", required=True, help="model file to write")
    train.add_argument("--split", default="train", help="manifest split to train on")
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--trees", type=int, default=100)
    train.add_argument("--max-depth", type=int, default=None)
    train.add_argument("--min-samples-leaf", type=int, default=1)
    train.add_argument("--k", type=int, default=3)
    train.add_argument("--keep-fraction", type=float, default=None,
                       help="KNN: keep this fraction of features by variance")
    train.add_argument("--arch", default=DEFAULT_ARCH)
    train.add_argument("--size", type=int, default=None,
                       help="CNN input size (default 200)")
    train.add_argument("--epochs", type=int, default=20)
    train.add_argument("--lr", type=float, default=0.01)
    train.add_argument("--momentum", type=float, default=0.9)
    train.add_argument("--batch-size", type=int, default=16)
    train.add_argument("--report-dir", help="write loss curve + CSV here (cnn)")

    ev = sub.add_parser("eval", help="evaluate a model on a manifest split")
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--model", required=True)
    ev.add_argument("--split", default="test")
    ev.add_argument("--report-dir", help="write figures + metrics.csv here")

    pred = sub.add_parser("predict", help="grade one image")
    pred.add_argument("--model", required=True)
    pred.add_argument("--image", required=True)

    syn = sub.add_parser("synthesize", help="render counterfactual grade variants")
    syn.add_argument("--image", required=True)
    syn.add_argument("--out", required=True, help="output directory for PNGs")
    syn.add_argument("--grades", help="comma-separated grade labels (default: all)")
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--params", help="render-params JSON file")

    srv = sub.add_parser("serve", help="run the HTTP service")
    srv.add_argument("--config", help="service config JSON (or set SKYCAST_CONFIG)")
    srv.add_argument("--host", default=None)
    srv.add_argument("--port", type=int, default=None)

    bench = sub.add_parser("bench", help="time the core pipeline operations")
    bench.add_argument("--size", type=int, default=200)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--report-dir", help="write timings CSV + chart here")

    return parser


def _entries_for_split(entries, split: str):
    if split == "all":
        return entries
    picked = [e for e in entries if e.split == split]
    if not picked:
        raise RuntimeError(
            f"manifest has no entries with split={split!r}; run 'skycast dataset split' first"
        )
    return picked


def _cmd_dataset_gen(args) -> int:
    cfg = SyntheticSkyConfig(
        images_per_grade=args.per_grade, image_size=args.size, seed=args.seed
    )
    manifest_path, entries = generate_synthetic_dataset(cfg, args.out)
    print(f"wrote {len(entries)} images and {manifest_path}")
    if args.report_dir:
        report.ensure_dir(args.report_dir)
        by_grade = {}
        for grade in GRADES:
            sample = [e for e in entries if e.grade == grade][:4]
            by_grade[grade] = [
                load_image_file(os.path.join(args.out, e.image_path)) for e in sample
            ]
        fig_path = os.path.join(args.report_dir, "sample_grid.png")
        report.save_sample_grid(by_grade, fig_path)
        print(f"wrote {fig_path}")
    return 0


def _cmd_dataset_split(args) -> int:
    entries = load_manifest(args.manifest)
    assignment = stratified_split(entries, tuple(args.ratios), args.seed)
    out_path = args.out or args.manifest
    save_manifest(apply_split(entries, assignment), out_path)
    counts = assignment.counts()
    print(f"wrote {out_path}: " + ", ".join(f"{k}={v}" for k, v in counts.items()))
    return 0


def _cmd_dataset_balance(args) -> int:
    entries = load_manifest(args.manifest)
    train_entries = [e for e in entries if e.split in (None, "train")]
    rest = [e for e in entries if e.split not in (None, "train")]
    balanced = balance_by_augmentation(train_entries, args.target, args.seed)
    out_path = args.out or args.manifest
    save_manifest(balanced + rest, out_path)
    print(f"wrote {out_path}: {len(balanced) - len(train_entries)} augmented records added")
    return 0


def _cmd_train(args) -> int:
    entries = load_manifest(args.manifest)
    base_dir = os.path.dirname(os.path.abspath(args.manifest))
    train_entries = _entries_for_split(entries, args.split)
    bank = GaborBank.default()
    if args.model in ("rf", "knn"):
        X, y = feature_matrix(train_entries, base_dir, bank)
        if args.model == "rf":
            cfg = classify.RandomForestConfig(
                n_trees=args.trees,
                max_depth=args.max_depth,
                min_samples_leaf=args.min_samples_leaf,
                seed=args.seed,
            )
            model = classify.train_random_forest(X, y, cfg)
        else:
            selected = None
            if args.keep_fraction is not None:
                selected = tuple(classify.select_high_variance_features(X, args.keep_fraction))
            model = classify.fit_knn(X, y, classify.KnnConfig(k=args.k, selected_features=selected))
        model.schema_id = bank.schema_id
        model.bank = bank
        if args.model == "rf":
            classify.save_rf(model, args.out)
        else:
            classify.save_knn(model, args.out)
        print(f"wrote {args.out} ({model.model_id}) on {len(y)} samples")
        return 0

    size = args.size or 200
    X, y = image_matrix(train_entries, base_dir, size)
    model = cnn.CnnModel(args.arch, input_size=size, seed=args.seed)
    cfg = cnn.TrainConfig(
        learning_rate=args.lr,
        momentum=args.momentum,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
    )
    model, history = cnn.train(model, X, y, cfg)
    cnn.save_cnn(model, args.out)
    print(f"wrote {args.out} ({model.model_id}); final loss {history[-1]:.4f}"
          if history else f"wrote {args.out} ({model.model_id})")
    if args.report_dir:
        report.ensure_dir(args.report_dir)
        report.write_loss_csv(history, os.path.join(args.report_dir, "loss_history.csv"))
        report.save_loss_curve(history, os.path.join(args.report_dir, "loss_curve.png"))
        print(f"wrote loss report to {args.report_dir}")
    return 0


def evaluate_manifest(model_path: str, manifest_path: str, split: str = "test"):
    """Library-level eval used by both the CLI and the tests: returns the
    EvalReport computed over the manifest split."""
    entries = load_manifest(manifest_path)
    base_dir = os.path.dirname(os.path.abspath(manifest_path))
    picked = _entries_for_split(entries, split)
    model = load_model(model_path)
    y_true = [e.grade for e in picked]
    if isinstance(model, cnn.CnnModel):
        X, _ = image_matrix(picked, base_dir, model.input_size)
        y_pred = [cnn.predict(model, x)[0] for x in X]
    else:
        bank = model.bank or GaborBank.default()
        X, _ = feature_matrix(picked, base_dir, bank)
        if isinstance(model, classify.RandomForestModel):
            y_pred = [classify.rf_predict(model, x)[0] for x in X]
        else:
            y_pred = [classify.knn_predict(model, x) for x in X]
    return classify.evaluate(y_true, y_pred)


def _cmd_eval(args) -> int:
    result = evaluate_manifest(args.model, args.manifest, args.split)
    print(f"accuracy,{result.accuracy:.6f}")
    print(f"macro_f1,{result.macro_f1:.6f}")
    for grade, f1 in zip(GRADES, result.per_class_f1):
        print(f"f1_{grade.label.replace(' ', '_')},{f1:.6f}")
    if args.report_dir:
        report.ensure_dir(args.report_dir)
        report.write_metrics_csv(result, os.path.join(args.report_dir, "metrics.csv"))
        report.save_confusion_matrix(
            result, os.path.join(args.report_dir, "confusion_matrix.png")
        )
        report.save_per_class_f1(result, os.path.join(args.report_dir, "per_class_f1.png"))
        print(f"wrote report to {args.report_dir}", file=sys.stderr)
    return 0


def _cmd_predict(args) -> int:
    predictor = GradePredictor(load_model(args.model))
    prediction = predictor.predict_raster(load_image_file(args.image))
    grade = prediction.grade
    print(f"grade: {grade.label}")
    print(f"color: {grade.color}")
    print(f"advice: {grade.advice}")
    probs = ", ".join(
        f"{g.label}={p:.3f}" for g, p in zip(GRADES, prediction.probabilities)
    )
    print(f"probabilities: {probs}")
    return 0


def _cmd_synthesize(args) -> int:
    img = load_image_file(args.image)
    params = RenderParams.load(args.params) if args.params else default_render_params()
    if args.grades:
        grades = [AqiGrade.from_label(g.strip()) for g in args.grades.split(",")]
    else:
        grades = list(GRADES)
    os.makedirs(args.out, exist_ok=True)
    for grade in sorted(set(grades), key=lambda g: g.severity):
        variant = render_variant(img, grade, params, args.seed)
        name = grade.label.lower().replace(" ", "_") + ".png"
        path = os.path.join(args.out, name)
        with open(path, "wb") as fh:
            fh.write(encode_png(variant))
        score = ssim(img, variant)
        print(f"{grade.label}\tssim={score:.4f}\tprompt={prompt_for_grade(grade)}\t{path}")
    return 0


def _cmd_serve(args) -> int:
    from .service import ServiceConfig, serve

    config = ServiceConfig.load(args.config) if args.config else ServiceConfig.from_env()
    if args.host or args.port:
        import dataclasses

        config = dataclasses.replace(
            config,
            bind_host=args.host or config.bind_host,
            bind_port=args.port or config.bind_port,
        )
    serve(config)
    return 0


def _time(fn, repeats: int = 3) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, (time.perf_counter() - start) * 1000.0)
    return best


def _cmd_bench(args) -> int:
    from .dataset import render_base_sky

    rng = np.random.default_rng(args.seed)
    sky = render_base_sky(args.size, rng)
    png = encode_png(sky)
    bank = GaborBank.default()
    mask = SkyMask.full(args.size, args.size)
    fv = extract_features(sky, mask, bank)
    model = classify.train_random_forest(
        rng.normal(size=(24, len(fv.values))),
        rng.integers(0, len(GRADES), size=24),
        classify.RandomForestConfig(n_trees=10, seed=args.seed),
    )
    net = cnn.CnnModel(DEFAULT_ARCH, input_size=64, seed=args.seed)
    small = resize_bilinear(sky, 64, 64)
    rows = [
        ("decode+resize 200", _time(lambda: resize_bilinear(decode_image(png), 200, 200))),
        ("sky mask", _time(lambda: heuristic_sky_mask(sky))),
        ("gabor features (12 filters)", _time(lambda: extract_features(sky, mask, bank))),
        ("rf predict", _time(lambda: classify.rf_predict(model, fv.values))),
        ("cnn forward 64x64", _time(lambda: cnn.forward(net, small.pixels))),
        ("render variant", _time(lambda: render_variant(sky, GRADES[3], seed=args.seed))),
        ("ssim 200x200", _time(lambda: ssim(sky, render_variant(sky, GRADES[3])))),
    ]
    print("operation,ms")
    for name, ms in rows:
        print(f"{name},{ms:.3f}")
    if args.report_dir:
        report.ensure_dir(args.report_dir)
        report.write_bench_csv(rows, os.path.join(args.report_dir, "bench.csv"))
        report.save_bench_chart(rows, os.path.join(args.report_dir, "bench.png"))
        print(f"wrote report to {args.report_dir}", file=sys.stderr)
    return 0


_HANDLERS = {
    ("dataset", "gen"): _cmd_dataset_gen,
    ("dataset", "split"): _cmd_dataset_split,
    ("dataset", "balance"): _cmd_dataset_balance,
    ("train", None): _cmd_train,
    ("eval", None): _cmd_eval,
    ("predict", None): _cmd_predict,
    ("synthesize", None): _cmd_synthesize,
    ("serve", None): _cmd_serve,
    ("bench", None): _cmd_bench,
}


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    handler = _HANDLERS[(args.command, getattr(args, "dataset_command", None))]
    try:
        return handler(args)
    except KeyboardInterrupt:
        return 130
    except Exception as exc:
        print(f"skycast: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()

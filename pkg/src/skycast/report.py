"""Report rendering: matplotlib figures written to files alongside the
delimited (CSV) metric output produced by the CLI."""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .aqi import GRADES
from .classify import EvalReport

_SHORT_LABELS = ("Good", "Moderate", "USG", "Unhealthy", "Very Unh.")


def write_metrics_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        writer.writerow(["accuracy", f"{report.accuracy:.6f}"])
        writer.writerow(["macro_f1", f"{report.macro_f1:.6f}"])
        for grade, f1 in zip(GRADES, report.per_class_f1):
            writer.writerow([f"f1_{grade.label}", f"{f1:.6f}"])


def save_confusion_matrix(report: EvalReport, path) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 4.8))
    im = ax.imshow(report.confusion, cmap="Blues")
    ax.set_xticks(range(len(_SHORT_LABELS)), _SHORT_LABELS, rotation=30, ha="right")
    ax.set_yticks(range(len(_SHORT_LABELS)), _SHORT_LABELS)
    ax.set_xlabel("Predicted")
    ax.set_ylabel("True")
    for i in range(report.confusion.shape[0]):
        for j in range(report.confusion.shape[1]):
            count = report.confusion[i, j]
            color = "white" if count > report.confusion.max() / 2 else "black"
            ax.text(j, i, str(count), ha="center", va="center", color=color)
    fig.colorbar(im, ax=ax, shrink=0.85)
    ax.set_title(f"accuracy {report.accuracy:.3f} / macro F1 {report.macro_f1:.3f}")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_per_class_f1(report: EvalReport, path) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    colors = [g.color for g in GRADES]
    ax.bar(range(len(GRADES)), report.per_class_f1, color=colors, edgecolor="gray")
    ax.set_xticks(range(len(_SHORT_LABELS)), _SHORT_LABELS, rotation=30, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("F1")
    ax.axhline(report.macro_f1, color="black", linestyle="--", linewidth=1,
               label=f"macro F1 {report.macro_f1:.3f}")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_loss_curve(history, path) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    ax.plot(range(1, len(history) + 1), history, marker="o", markersize=3)
    ax.set_xlabel("Epoch")
    ax.set_ylabel("Mean cross-entropy")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def write_loss_csv(history, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss"])
        for i, loss in enumerate(history, start=1):
            writer.writerow([i, f"{loss:.6f}"])


def save_sample_grid(images_by_grade, path, per_grade: int = 4) -> None:
    """Thumbnail grid, one row per grade, for eyeballing a generated corpus."""
    rows = len(images_by_grade)
    fig, axes = plt.subplots(rows, per_grade, figsize=(2.0 * per_grade, 2.0 * rows))
    axes = np.atleast_2d(axes)
    for r, (grade, images) in enumerate(images_by_grade.items()):
        for c in range(per_grade):
            ax = axes[r, c]
            ax.axis("off")
            if c < len(images):
                ax.imshow(images[c].pixels)
            if c == 0:
                ax.set_title(grade.label, fontsize=9, loc="left")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def write_bench_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["operation", "ms"])
        for name, ms in rows:
            writer.writerow([name, f"{ms:.3f}"])


def save_bench_chart(rows, path) -> None:
    names = [name for name, _ in rows]
    values = [ms for _, ms in rows]
    fig, ax = plt.subplots(figsize=(6.5, 0.5 * len(rows) + 1.2))
    ax.barh(range(len(rows)), values, color="#4a78b0")
    ax.set_yticks(range(len(rows)), names)
    ax.invert_yaxis()
    ax.set_xlabel("latency (ms)")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path

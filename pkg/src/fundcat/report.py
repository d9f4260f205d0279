"""Write evaluation results to JSON, CSV and (optionally) SVG files."""

from __future__ import annotations

import csv
import json
import math
import os
from typing import Sequence

import numpy as np

from ._io import atomic_open
from .metrics import MetricsReport, RocCurve


def _num(v) -> float | None:
    """JSON-safe float: NaN becomes null."""
    v = float(v)
    return None if math.isnan(v) else v


def _cell(v) -> str:
    v = float(v)
    if math.isnan(v):
        return ""
    return repr(v)


def metrics_document(report: MetricsReport, categories: Sequence[str]) -> dict:
    """Everything in ``metrics.json``: scalars plus the per-category table."""
    pc = report.per_class
    doc = {k: v for k, v in report.scalars().items()}
    doc["categories"] = list(categories)
    doc["per_class"] = [
        {
            "category": name,
            "support": int(pc.support[c]),
            "tp": int(pc.tp[c]),
            "fp": int(pc.fp[c]),
            "fn": int(pc.fn[c]),
            "precision": _num(pc.precision[c]),
            "recall": _num(pc.recall[c]),
            "f1": _num(pc.f1[c]),
            "auc": None if report.roc.per_class[c] is None else report.roc.per_class[c].auc,
        }
        for c, name in enumerate(categories)
    ]
    return doc


def write_json(doc: dict, path) -> str:
    with atomic_open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    return os.fspath(path)


def write_metrics_json(report: MetricsReport, categories: Sequence[str], path) -> str:
    return write_json(metrics_document(report, categories), path)


def write_confusion_csv(report: MetricsReport, categories: Sequence[str], path) -> str:
    """Long format: one row per (true, predicted) pair with count and row-normalized value."""
    cm = report.confusion
    with atomic_open(path, "w") as fh:
        w = csv.writer(fh)
        w.writerow(["true", "predicted", "count", "normalized"])
        for i, a in enumerate(categories):
            for j, b in enumerate(categories):
                w.writerow([a, b, int(cm.counts[i, j]), repr(float(cm.normalized[i, j]))])
    return os.fspath(path)


def write_per_class_csv(report: MetricsReport, categories: Sequence[str], path) -> str:
    rows = metrics_document(report, categories)["per_class"]
    cols = ["category", "support", "tp", "fp", "fn", "precision", "recall", "f1", "auc"]
    with atomic_open(path, "w") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow(["" if r[c] is None else (repr(r[c]) if isinstance(r[c], float) else r[c]) for c in cols])
    return os.fspath(path)


def write_roc_csv(curve: RocCurve, path) -> str:
    with atomic_open(path, "w") as fh:
        w = csv.writer(fh)
        w.writerow(["fpr", "tpr", "threshold"])
        for f, t, th in zip(curve.fpr, curve.tpr, curve.thresholds):
            w.writerow([repr(float(f)), repr(float(t)), _cell(th)])
    return os.fspath(path)


def write_importance_csv(column_names: Sequence[str], importances, path,
                         groups: Sequence[tuple[str, float]] | None = None) -> str:
    """Per-column importances, largest first; ``groups`` adds aggregate rows."""
    imp = np.asarray(importances, dtype=np.float64)
    order = sorted(range(imp.size), key=lambda j: (-imp[j], j))
    with atomic_open(path, "w") as fh:
        w = csv.writer(fh)
        w.writerow(["level", "name", "importance"])
        for j in order:
            w.writerow(["column", column_names[j], repr(float(imp[j]))])
        for name, v in groups or ():
            w.writerow(["group", name, repr(float(v))])
    return os.fspath(path)


def write_history_csv(history, path) -> str:
    with atomic_open(path, "w") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss", "val_accuracy"])
        for epoch, tl, vl, va in history:
            w.writerow([int(epoch), repr(float(tl)), repr(float(vl)), repr(float(va))])
    return os.fspath(path)


def write_svgs(report: MetricsReport, categories: Sequence[str], out_dir) -> list[str]:
    """ROC curves and a row-normalized confusion heatmap. Needs matplotlib."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise RuntimeError("SVG output needs matplotlib (pip install fundcat[plot])") from exc

    plt.rcParams["svg.hashsalt"] = "fundcat"
    plt.rcParams["svg.fonttype"] = "none"
    meta = {"Date": None}
    paths = []

    fig, ax = plt.subplots(figsize=(6, 6))
    ax.plot(report.roc.micro.fpr, report.roc.micro.tpr, label=f"micro (AUC {report.auc_micro:.4f})")
    ax.plot(report.roc.macro.fpr, report.roc.macro.tpr, label=f"macro (AUC {report.auc_macro:.4f})")
    ax.plot([0, 1], [0, 1], color="grey", lw=0.8, ls="--")
    ax.set(xlabel="False positive rate", ylabel="True positive rate", xlim=(0, 1), ylim=(0, 1.01))
    ax.legend(loc="lower right")
    path = os.path.join(out_dir, "roc.svg")
    fig.savefig(path, format="svg", metadata=meta)
    plt.close(fig)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(6, 6))
    for c, curve in enumerate(report.roc.per_class):
        if curve is not None:
            ax.plot(curve.fpr, curve.tpr, lw=0.8, label=categories[c])
    ax.plot([0, 1], [0, 1], color="grey", lw=0.8, ls="--")
    ax.set(xlabel="False positive rate", ylabel="True positive rate", xlim=(0, 1), ylim=(0, 1.01))
    if len(categories) <= 12:
        ax.legend(loc="lower right", fontsize="small")
    path = os.path.join(out_dir, "roc_per_class.svg")
    fig.savefig(path, format="svg", metadata=meta)
    plt.close(fig)
    paths.append(path)

    C = len(categories)
    fig, ax = plt.subplots(figsize=(max(6, 0.3 * C), max(6, 0.3 * C)))
    ax.imshow(report.confusion.normalized, cmap="Blues", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(C), categories, rotation=90, fontsize="x-small")
    ax.set_yticks(range(C), categories, fontsize="x-small")
    ax.set(xlabel="Predicted category", ylabel="True category")
    fig.tight_layout()
    path = os.path.join(out_dir, "confusion.svg")
    fig.savefig(path, format="svg", metadata=meta)
    plt.close(fig)
    paths.append(path)
    return paths


def emit_report(report: MetricsReport, categories: Sequence[str], out_dir, *, svg: bool = False) -> list[str]:
    """Write the full evaluation file set into ``out_dir``; returns the paths written."""
    os.makedirs(out_dir, exist_ok=True)

    def j(name):
        return os.path.join(out_dir, name)

    paths = [
        write_metrics_json(report, categories, j("metrics.json")),
        write_confusion_csv(report, categories, j("confusion.csv")),
        write_per_class_csv(report, categories, j("per_class.csv")),
        write_roc_csv(report.roc.micro, j("roc_micro.csv")),
        write_roc_csv(report.roc.macro, j("roc_macro.csv")),
    ]
    for c, curve in enumerate(report.roc.per_class):
        if curve is not None:
            paths.append(write_roc_csv(curve, j(f"roc_class_{c}.csv")))
    if svg:
        paths.extend(write_svgs(report, categories, out_dir))
    return paths

"""Aggregate experiment records into per-point tables and figures.

Outputs: summary.csv (mean metrics and costs per configuration, keyed by
point label where the configuration matches one), matched_points.csv (the
federated-versus-baseline pairing at matched data volumes), and three PNG
figures: the two AUCs against memory, build time against memory, and the
builder comparison.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np

from .experiment import point_label, primed_label

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = [
    "label", "builder", "max_depth", "num_trees", "train_size", "n_clients",
    "reps", "auc_roc", "auc_pr", "best_f1", "best_threshold",
    "tp", "fp", "fn", "tn", "tpr", "fpr", "ppv",
    "peak_memory_bytes", "build_time_seconds",
]


def aggregate(records: list[dict]) -> list[dict]:
    """Mean metrics/cost per configuration; error records are skipped."""
    groups: dict[tuple, list[dict]] = {}
    for rec in records:
        if "error" in rec:
            log.warning("skipping error record: %s", rec["error"])
            continue
        p = rec["params"]
        key = (p["builder"], p["max_depth"], p["num_trees"], p["train_size"],
               p["n_clients"])
        groups.setdefault(key, []).append(rec)

    rows = []
    for (builder, depth, trees, size, n_clients), recs in sorted(groups.items()):
        def mean(path) -> float:
            values = []
            for r in recs:
                v = r
                for k in path:
                    v = v[k]
                values.append(v)
            return float(np.mean(values))

        tp = mean(("metrics", "confusion", "tp"))
        fp = mean(("metrics", "confusion", "fp"))
        fn = mean(("metrics", "confusion", "fn"))
        tn = mean(("metrics", "confusion", "tn"))
        rows.append({
            "label": point_label(depth, trees, size, builder, n_clients) or "",
            "builder": builder,
            "max_depth": depth,
            "num_trees": trees,
            "train_size": size,
            "n_clients": n_clients,
            "reps": len(recs),
            "auc_roc": mean(("metrics", "auc_roc")),
            "auc_pr": mean(("metrics", "auc_pr")),
            "best_f1": mean(("metrics", "best_f1")),
            "best_threshold": mean(("metrics", "best_threshold")),
            "tp": tp, "fp": fp, "fn": fn, "tn": tn,
            "tpr": tp / (tp + fn) if tp + fn > 0 else 0.0,
            "fpr": fp / (fp + tn) if fp + tn > 0 else 0.0,
            "ppv": tp / (tp + fp) if tp + fp > 0 else 0.0,
            "peak_memory_bytes": mean(("cost", "peak_memory_bytes")),
            "build_time_seconds": mean(("cost", "build_time_seconds")),
        })
    return rows


def matched_pairs(rows: list[dict]) -> list[dict]:
    """Pair each labeled federated row with its primed baseline row."""
    by_label = {r["label"]: r for r in rows if r["label"]}
    pairs = []
    for label, fed in sorted(by_label.items()):
        if fed["builder"] != "federated":
            continue
        base = by_label.get(primed_label(label))
        if base is None:
            continue
        pairs.append({
            "label": label,
            "federated_auc_pr": fed["auc_pr"],
            "baseline_auc_pr": base["auc_pr"],
            "auc_pr_gap": base["auc_pr"] - fed["auc_pr"],
            "federated_auc_roc": fed["auc_roc"],
            "baseline_auc_roc": base["auc_roc"],
            "federated_memory_bytes": fed["peak_memory_bytes"],
            "baseline_memory_bytes": base["peak_memory_bytes"],
        })
    return pairs


def _write_csv(path: Path, rows: list[dict], columns: list[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in columns})


def _annotate(ax, xs, ys, labels) -> None:
    for x, y, lab in zip(xs, ys, labels):
        ax.annotate(lab, (x, y), textcoords="offset points", xytext=(4, 4), fontsize=8)


def render_figures(rows: list[dict], pairs: list[dict], out_dir: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    fed = sorted(
        (r for r in rows if r["builder"] == "federated" and r["label"]),
        key=lambda r: r["peak_memory_bytes"],
    )
    if fed:
        mem = [r["peak_memory_bytes"] / 1024.0 for r in fed]
        labels = [r["label"] for r in fed]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(mem, [r["auc_roc"] for r in fed], "o-", label="AUC-ROC")
        ax.plot(mem, [r["auc_pr"] for r in fed], "s-", label="AUC-PR")
        _annotate(ax, mem, [r["auc_roc"] for r in fed], labels)
        ax.set_xlabel("peak training memory (KiB)")
        ax.set_ylabel("area under curve")
        ax.set_title("Detection quality vs training memory")
        ax.legend()
        ax.grid(True, alpha=0.3)
        path = out_dir / "auc_vs_memory.png"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)

        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(mem, [r["build_time_seconds"] for r in fed], "o-")
        _annotate(ax, mem, [r["build_time_seconds"] for r in fed], labels)
        ax.set_xlabel("peak training memory (KiB)")
        ax.set_ylabel("build time (s)")
        ax.set_title("Build time vs training memory")
        ax.grid(True, alpha=0.3)
        path = out_dir / "time_vs_memory.png"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)

    if pairs:
        fig, ax = plt.subplots(figsize=(6, 4))
        fx = [p["federated_memory_bytes"] / 1024.0 for p in pairs]
        bx = [p["baseline_memory_bytes"] / 1024.0 for p in pairs]
        ax.plot(fx, [p["federated_auc_pr"] for p in pairs], "o-", label="federated")
        ax.plot(bx, [p["baseline_auc_pr"] for p in pairs], "s-", label="pooled baseline")
        _annotate(ax, fx, [p["federated_auc_pr"] for p in pairs],
                  [p["label"] for p in pairs])
        _annotate(ax, bx, [p["baseline_auc_pr"] for p in pairs],
                  [primed_label(p["label"]) for p in pairs])
        ax.set_xlabel("peak training memory (KiB)")
        ax.set_ylabel("AUC-PR")
        ax.set_title("Federated vs pooled baseline at matched data volume")
        ax.legend()
        ax.grid(True, alpha=0.3)
        path = out_dir / "builder_comparison.png"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    return written


def write_report(records: list[dict], out_dir) -> dict:
    """Emit CSV tables and figures; returns paths of everything written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = aggregate(records)
    if not rows:
        raise ValueError("no usable records")
    pairs = matched_pairs(rows)
    summary_path = out_dir / "summary.csv"
    _write_csv(summary_path, rows, SUMMARY_COLUMNS)
    written = {"summary": summary_path}
    if pairs:
        matched_path = out_dir / "matched_points.csv"
        _write_csv(matched_path, pairs, list(pairs[0].keys()))
        written["matched"] = matched_path
    written["figures"] = render_figures(rows, pairs, out_dir)
    return written

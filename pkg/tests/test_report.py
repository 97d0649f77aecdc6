"""Aggregation tables, matched-pair comparison, and figure rendering."""

import csv

import pytest

from fedforest.model_io import RECORD_VERSION
from fedforest.report import SUMMARY_COLUMNS, aggregate, matched_pairs, write_report

PNG_MAGIC = b"\x89PNG\r\n"


def rec(builder, depth, trees, size, *, roc, pr, f1v=0.9, thr=0.8,
        tp=95.0, fp=5.0, fn=5.0, tn=295.0, mem=1000, secs=0.5, rep=0):
    return {
        "params": {"max_depth": depth, "num_trees": trees, "train_size": size,
                   "n_clients": 2, "seed": 1, "builder": builder, "rep_idx": rep},
        "metrics": {"auc_roc": roc, "auc_pr": pr, "best_f1": f1v,
                    "best_threshold": thr,
                    "confusion": {"tp": tp, "fp": fp, "fn": fn, "tn": tn}},
        "cost": {"peak_memory_bytes": mem, "build_time_seconds": secs},
        "version": RECORD_VERSION,
    }


def test_aggregate_means_per_configuration():
    records = [
        rec("federated", 4, 10, 50, roc=0.75, pr=0.5, tp=90.0, fp=10.0, fn=10.0,
            tn=290.0, mem=1000, rep=0),
        rec("federated", 4, 10, 50, roc=0.5, pr=0.25, tp=100.0, fp=0.0, fn=0.0,
            tn=300.0, mem=3000, rep=1),
        rec("baseline", 5, 7, 30, roc=0.9, pr=0.9),
    ]
    rows = aggregate(records)
    assert len(rows) == 2
    # sorted by (builder, ...): the unlabeled baseline config comes first
    assert rows[0]["builder"] == "baseline"
    assert rows[0]["label"] == ""

    fed = rows[1]
    assert fed["label"] == "A"
    assert fed["reps"] == 2
    assert fed["auc_roc"] == 0.625
    assert fed["auc_pr"] == 0.375
    assert fed["tp"] == 95.0 and fed["fp"] == 5.0
    # rates come from the mean confusion matrix
    assert fed["tpr"] == 0.95
    assert fed["ppv"] == 0.95
    assert abs(fed["fpr"] - 5.0 / 300.0) < 1e-15
    assert fed["peak_memory_bytes"] == 2000.0


def test_aggregate_skips_error_records():
    records = [
        rec("federated", 4, 10, 50, roc=0.75, pr=0.5),
        {"params": {"max_depth": 4, "num_trees": 10, "train_size": 50,
                    "n_clients": 2, "seed": 1, "builder": "federated",
                    "rep_idx": 1},
         "error": "build failed", "version": RECORD_VERSION},
    ]
    rows = aggregate(records)
    assert len(rows) == 1
    assert rows[0]["reps"] == 1


def test_matched_pairs_line_up_primed_points():
    rows = aggregate([
        rec("federated", 4, 10, 50, roc=0.7, pr=0.375, mem=1000),
        rec("baseline", 4, 10, 100, roc=0.9, pr=0.5, mem=4000),
        rec("federated", 6, 25, 100, roc=0.8, pr=0.6),  # B without a baseline
    ])
    pairs = matched_pairs(rows)
    assert len(pairs) == 1
    pair = pairs[0]
    assert pair["label"] == "A"
    assert pair["federated_auc_pr"] == 0.375
    assert pair["baseline_auc_pr"] == 0.5
    assert pair["auc_pr_gap"] == 0.125
    assert pair["federated_memory_bytes"] == 1000.0
    assert pair["baseline_memory_bytes"] == 4000.0


def test_write_report_emits_tables_and_figures(tmp_path):
    records = [
        rec("federated", 4, 10, 50, roc=0.75, pr=0.5, mem=1000, rep=0),
        rec("federated", 4, 10, 50, roc=0.5, pr=0.25, mem=1200, rep=1),
        rec("baseline", 4, 10, 100, roc=0.9, pr=0.8, mem=4000),
        rec("federated", 6, 25, 100, roc=0.8, pr=0.6, mem=2500),
        rec("baseline", 6, 25, 200, roc=0.95, pr=0.85, mem=9000),
    ]
    written = write_report(records, tmp_path / "out")
    assert written["summary"].exists()
    assert written["matched"].exists()
    assert len(written["figures"]) == 3
    for fig_path in written["figures"]:
        assert fig_path.read_bytes()[:6] == PNG_MAGIC

    with open(written["summary"], newline="") as fh:
        reader = csv.DictReader(fh)
        assert reader.fieldnames == SUMMARY_COLUMNS
        labels = [row["label"] for row in reader]
    assert sorted(labels) == ["A", "A'", "B", "B'"]

    with open(written["matched"], newline="") as fh:
        pair_labels = [row["label"] for row in csv.DictReader(fh)]
    assert pair_labels == ["A", "B"]


def test_write_report_without_labeled_points(tmp_path):
    rows_only = [rec("baseline", 5, 7, 30, roc=0.9, pr=0.9)]
    written = write_report(rows_only, tmp_path)
    assert written["summary"].exists()
    assert "matched" not in written
    assert written["figures"] == []


def test_write_report_requires_usable_records(tmp_path):
    errors_only = [{"params": {"max_depth": 4, "num_trees": 10, "train_size": 50,
                               "n_clients": 2, "seed": 1, "builder": "federated",
                               "rep_idx": 0},
                    "error": "boom", "version": RECORD_VERSION}]
    with pytest.raises(ValueError, match="no usable records"):
        write_report(errors_only, tmp_path)

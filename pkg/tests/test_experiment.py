"""Grid catalog, cost measurement, and the repetition harness."""

import json
import time
import tracemalloc

import numpy as np
import pytest

from fedforest import experiment
from fedforest.data import gen_test_set, gen_training_set
from fedforest.experiment import (
    DEFAULT_ANOMALY_FRAC,
    DEFAULT_N_CLIENTS,
    DEFAULT_N_TEST,
    DEFAULT_SEED,
    GridPoint,
    POINTS,
    evaluate,
    measure_cost,
    parse_points,
    point_label,
    primed_label,
    run_experiment,
    train_point,
)
from fedforest.forest import anomaly_scores, build_iforest_baseline
from fedforest.metrics import confusion, f1
from fedforest.model_io import RECORD_VERSION
from fedforest.runner import rng_for_node, run_federated_loopback


def strip_cost(records):
    return [{k: v for k, v in rec.items() if k != "cost"} for rec in records]


def test_grid_catalog():
    assert POINTS["A"] == GridPoint(4, 10, 50)
    assert POINTS["B"] == GridPoint(6, 25, 100)
    assert POINTS["C"] == GridPoint(8, 50, 150)
    assert POINTS["D"] == GridPoint(10, 75, 200)
    assert POINTS["E"] == GridPoint(6, 25, 200)
    assert DEFAULT_SEED == 1234
    assert DEFAULT_N_TEST == 10000
    assert DEFAULT_ANOMALY_FRAC == 0.10
    assert DEFAULT_N_CLIENTS == 2


def test_parse_points():
    assert parse_points("A") == [POINTS["A"]]
    assert parse_points("a, c,E") == [POINTS["A"], POINTS["C"], POINTS["E"]]
    with pytest.raises(ValueError, match="unknown point"):
        parse_points("A,Z")


def test_point_labels():
    assert point_label(4, 10, 50, "federated") == "A"
    assert point_label(4, 10, 100, "baseline") == "A'"
    assert point_label(4, 10, 150, "baseline", n_clients=3) == "A'"
    assert point_label(10, 75, 200, "federated") == "D"
    assert point_label(4, 10, 50, "baseline") is None
    assert point_label(5, 10, 50, "federated") is None
    # (depth 6, 25 trees) is shared: per-client 200 is one point, pooled
    # 2 * 100 the primed form of the other
    assert point_label(6, 25, 200, "federated") == "E"
    assert point_label(6, 25, 200, "baseline") == "B'"
    assert primed_label("A") == "A'"


def test_measure_cost_passthrough():
    result, peak, elapsed = measure_cost(lambda: "done")
    assert result == "done"
    assert 0 <= peak < 1_000_000
    assert elapsed >= 0.0


def test_measure_cost_sees_allocations_and_time():
    def thunk():
        block = np.zeros(1_000_000)  # 8 MB
        time.sleep(0.05)
        return block.nbytes

    result, peak, elapsed = measure_cost(thunk)
    assert result == 8_000_000
    assert peak >= 8_000_000
    assert elapsed >= 0.04


def test_measure_cost_keeps_outer_tracing_alive():
    tracemalloc.start()
    try:
        _, peak, _ = measure_cost(lambda: np.zeros(100_000).nbytes)
        assert tracemalloc.is_tracing()
        assert peak >= 800_000
    finally:
        tracemalloc.stop()
    assert not tracemalloc.is_tracing()


def test_run_experiment_record_shape():
    records = run_experiment([POINTS["A"]], reps=2, seed=11, n_test=300,
                             builders=("federated", "baseline"))
    assert len(records) == 4
    by_builder = {}
    for rec in records:
        assert rec["version"] == RECORD_VERSION
        p = rec["params"]
        assert p["max_depth"] == 4 and p["num_trees"] == 10
        assert p["n_clients"] == 2 and p["seed"] == 11
        m = rec["metrics"]
        assert set(m) == {"auc_roc", "auc_pr", "best_f1", "best_threshold", "confusion"}
        cm = m["confusion"]
        assert cm["tp"] + cm["fp"] + cm["fn"] + cm["tn"] == 300.0
        assert 0.0 < m["best_threshold"] < 1.0
        assert rec["cost"]["peak_memory_bytes"] >= 0
        assert rec["cost"]["build_time_seconds"] >= 0.0
        by_builder.setdefault(p["builder"], []).append(p)
    # federated records carry the per-client size, the pooled baseline 2x
    assert [p["train_size"] for p in by_builder["federated"]] == [50, 50]
    assert [p["train_size"] for p in by_builder["baseline"]] == [100, 100]
    assert [p["rep_idx"] for p in by_builder["federated"]] == [0, 1]


def test_run_experiment_is_deterministic_modulo_cost():
    kwargs = dict(reps=2, seed=7, n_test=250, builders=("federated", "baseline"))
    first = run_experiment([POINTS["A"]], **kwargs)
    second = run_experiment([POINTS["A"]], **kwargs)
    assert json.dumps(strip_cost(first), sort_keys=True) == \
        json.dumps(strip_cost(second), sort_keys=True)


def test_reps_draw_fresh_test_sets_and_builder_seeds():
    records = run_experiment([POINTS["A"]], reps=2, seed=7, n_test=250)
    m0, m1 = records[0]["metrics"], records[1]["metrics"]
    assert m0 != m1


def test_sink_receives_every_record():
    seen = []
    records = run_experiment([POINTS["A"]], reps=2, seed=3, n_test=200, sink=seen.append)
    assert seen == records


def test_build_failure_is_recorded_and_stops_that_config(monkeypatch):
    def boom(*args, **kwargs):
        raise RuntimeError("boom")

    monkeypatch.setattr(experiment, "run_federated_loopback", boom)
    records = run_experiment([POINTS["A"]], reps=3, seed=5, n_test=200,
                             builders=("federated", "baseline"))
    failed = [r for r in records if "error" in r]
    good = [r for r in records if "error" not in r]
    assert len(failed) == 1
    assert failed[0]["params"]["builder"] == "federated"
    assert failed[0]["params"]["rep_idx"] == 0
    assert "boom" in failed[0]["error"]
    assert failed[0]["version"] == RECORD_VERSION
    assert "metrics" not in failed[0]
    # the pooled baseline still runs all reps
    assert len(good) == 3
    assert all(r["params"]["builder"] == "baseline" for r in good)


def test_run_experiment_validation():
    with pytest.raises(ValueError, match="empty grid"):
        run_experiment([], reps=1)
    with pytest.raises(ValueError, match="reps"):
        run_experiment([POINTS["A"]], reps=0)
    pooled = gen_training_set(40, np.random.default_rng(0))
    with pytest.raises(ValueError, match="unknown builder"):
        train_point(POINTS["A"], "nope", 1, 0, pooled, 2)


def test_train_point_returns_designated_client_model():
    pooled = gen_training_set(200, np.random.default_rng(2))  # 2 clients x 100
    model, peak, elapsed = train_point(POINTS["B"], "federated", 9, 0, pooled, 2)
    assert model.builder == "federated"
    assert len(model.trees) == 25
    assert model.trees[0].train_size == 100  # per-client share
    assert peak > 0 and elapsed > 0

    base, _, _ = train_point(POINTS["B"], "baseline", 9, 0, pooled, 2)
    assert base.builder == "baseline"
    assert base.trees[0].train_size == 200


def test_evaluate_is_consistent_with_metric_definitions():
    rng = np.random.default_rng(12)
    train = gen_training_set(150, rng)
    model = build_iforest_baseline(train, 25, 6, rng_for_node(12, 1))
    test = gen_test_set(train, 500, 0.2, np.random.default_rng(13))
    result = evaluate(model, test)

    scores = anomaly_scores(model, test.values)
    cm = confusion(scores, test.labels, result["best_threshold"])
    assert result["confusion"] == {"tp": cm.tp, "fp": cm.fp, "fn": cm.fn, "tn": cm.tn}
    assert abs(result["best_f1"] - f1(cm)) < 1e-12
    assert 0.0 < result["auc_roc"] <= 1.0
    assert 0.0 < result["auc_pr"] <= 1.0


def test_models_separate_injected_anomalies():
    rng = np.random.default_rng(31)
    shares = {1: gen_training_set(100, rng), 2: gen_training_set(100, rng)}
    pooled = np.concatenate([shares[1], shares[2]])
    test = gen_test_set(pooled, 400, 0.25, np.random.default_rng(32))

    fed = run_federated_loopback(shares, 25, 6, seed=31)[1]
    base = build_iforest_baseline(pooled, 25, 6, rng_for_node(31, 1))
    for model in (fed, base):
        scores = anomaly_scores(model, test.values)
        assert scores[test.labels == 1].mean() > scores[test.labels == 0].mean()


def test_operating_scores_cluster_near_default_threshold(point_e_records):
    """Mean best-F1 threshold on the reference configuration sits in the
    band the shipped default was calibrated for."""
    records, _ = point_e_records
    thresholds = [r["metrics"]["best_threshold"] for r in records]
    assert len(thresholds) == 40
    assert 0.7265 <= float(np.mean(thresholds)) <= 0.9265

"""Experiment grid: train models over parameter points, score fresh test
sets, and persist one record per repetition.

Training data for a configuration is generated once and reused across all
repetitions and builders; each repetition draws a fresh test set and a fresh
builder seed. Streams are keyed by (seed, depth, trees, size, clients) so a
configuration's data does not depend on which builders or reps are run.
"""

from __future__ import annotations

import logging
import time
import tracemalloc
from dataclasses import dataclass

import numpy as np

from . import data as datagen
from . import metrics
from .forest import Forest, anomaly_scores, build_iforest_baseline
from .model_io import RECORD_VERSION
from .runner import rng_for_node, run_federated_loopback

log = logging.getLogger(__name__)

DEFAULT_SEED = 1234
DEFAULT_N_TEST = 10000
DEFAULT_ANOMALY_FRAC = 0.10
DEFAULT_N_CLIENTS = 2


@dataclass(frozen=True)
class GridPoint:
    max_depth: int
    num_trees: int
    train_size: int  # per client; the pooled baseline trains on clients * this


# The evaluation points; primed labels are the pooled-data baseline
# counterparts (per-client size times the default two clients).
POINTS = {
    "A": GridPoint(4, 10, 50),
    "B": GridPoint(6, 25, 100),
    "C": GridPoint(8, 50, 150),
    "D": GridPoint(10, 75, 200),
    "E": GridPoint(6, 25, 200),
}


def primed_label(label: str) -> str:
    return label + "'"


def parse_points(names: str) -> list[GridPoint]:
    points = []
    for name in names.split(","):
        name = name.strip().upper()
        if name not in POINTS:
            raise ValueError(f"unknown point {name!r}; expected one of {sorted(POINTS)}")
        points.append(POINTS[name])
    return points


def point_label(depth: int, trees: int, size: int, builder: str,
                n_clients: int = DEFAULT_N_CLIENTS) -> str | None:
    """Resolve a configuration back to its point label, if it has one."""
    for label, p in POINTS.items():
        if (p.max_depth, p.num_trees) != (depth, trees):
            continue
        if builder == "federated" and size == p.train_size:
            return label
        if builder == "baseline" and size == p.train_size * n_clients:
            return primed_label(label)
    return None


def _stream(seed: int, point: GridPoint, n_clients: int, spawn_key) -> np.random.Generator:
    entropy = (seed, point.max_depth, point.num_trees, point.train_size, n_clients)
    return np.random.default_rng(np.random.SeedSequence(entropy=entropy, spawn_key=spawn_key))


def _rep_seed(seed: int, point: GridPoint, n_clients: int, rep: int) -> int:
    entropy = (seed, point.max_depth, point.num_trees, point.train_size, n_clients)
    ss = np.random.SeedSequence(entropy=entropy, spawn_key=(1, rep))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def measure_cost(thunk):
    """Run thunk, returning (result, peak_memory_bytes, build_time_seconds).

    Peak memory is the incremental allocation high-water mark during the
    call, from the interpreter's own allocation tracing; wall-clock time is
    monotonic. Both include everything the build allocates, temporaries and
    model alike.
    """
    was_tracing = tracemalloc.is_tracing()
    if not was_tracing:
        tracemalloc.start()
    tracemalloc.reset_peak()
    base = tracemalloc.get_traced_memory()[0]
    t0 = time.perf_counter()
    try:
        result = thunk()
    finally:
        elapsed = time.perf_counter() - t0
        _, peak = tracemalloc.get_traced_memory()
        if not was_tracing:
            tracemalloc.stop()
    return result, max(0, peak - base), elapsed


def train_point(point: GridPoint, builder: str, seed: int, rep: int,
                pooled: np.ndarray, n_clients: int) -> tuple[Forest, int, float]:
    """Build one model for one repetition; returns (model, peak_bytes, seconds).

    The federated model evaluated downstream is the designated client's
    (lowest id); the baseline trains on the pooled data of all clients.
    """
    rep_seed = _rep_seed(seed, point, n_clients, rep)
    if builder == "federated":
        size = point.train_size
        shares = {
            cid: pooled[(cid - 1) * size: cid * size] for cid in range(1, n_clients + 1)
        }
        forests, peak, elapsed = measure_cost(
            lambda: run_federated_loopback(shares, point.num_trees, point.max_depth,
                                           seed=rep_seed)
        )
        return forests[min(forests)], peak, elapsed
    if builder == "baseline":
        model, peak, elapsed = measure_cost(
            lambda: build_iforest_baseline(pooled, point.num_trees, point.max_depth,
                                           rng_for_node(rep_seed, 1), seed=rep_seed)
        )
        return model, peak, elapsed
    raise ValueError(f"unknown builder {builder!r}")


def evaluate(model: Forest, test: datagen.TestSet) -> dict:
    scores = anomaly_scores(model, test.values)
    threshold, best_f1 = metrics.best_threshold_by_f1(scores, test.labels)
    cm = metrics.confusion(scores, test.labels, threshold)
    return {
        "auc_roc": metrics.roc_auc(scores, test.labels),
        "auc_pr": metrics.pr_auc(scores, test.labels),
        "best_f1": best_f1,
        "best_threshold": threshold,
        "confusion": {"tp": cm.tp, "fp": cm.fp, "fn": cm.fn, "tn": cm.tn},
    }


def run_experiment(points: list[GridPoint], reps: int, sink=None, *,
                   builders=("federated",), n_clients: int = DEFAULT_N_CLIENTS,
                   seed: int = DEFAULT_SEED, n_test: int = DEFAULT_N_TEST,
                   anomaly_frac: float = DEFAULT_ANOMALY_FRAC) -> list[dict]:
    """Run the grid; returns all records and forwards each to sink if given.

    A build failure records an error entry and abandons the remaining reps
    of that (point, builder) configuration only.
    """
    if not points:
        raise ValueError("empty grid")
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    records: list[dict] = []

    def emit(rec: dict) -> None:
        records.append(rec)
        if sink is not None:
            sink(rec)

    for point in points:
        pooled = datagen.gen_training_set(
            point.train_size * n_clients, _stream(seed, point, n_clients, (0,))
        )
        for builder in builders:
            train_size = point.train_size if builder == "federated" \
                else point.train_size * n_clients
            params = {
                "max_depth": point.max_depth,
                "num_trees": point.num_trees,
                "train_size": train_size,
                "n_clients": n_clients,
                "seed": seed,
                "builder": builder,
            }
            for rep in range(reps):
                try:
                    model, peak, elapsed = train_point(
                        point, builder, seed, rep, pooled, n_clients
                    )
                except Exception as exc:
                    log.error("build failed for %s rep %d: %s", params, rep, exc)
                    emit({"params": params | {"rep_idx": rep}, "error": str(exc),
                          "version": RECORD_VERSION})
                    break
                test = datagen.gen_test_set(
                    pooled, n_test, anomaly_frac, _stream(seed, point, n_clients, (2, rep))
                )
                emit({
                    "params": params | {"rep_idx": rep},
                    "metrics": evaluate(model, test),
                    "cost": {"peak_memory_bytes": int(peak),
                             "build_time_seconds": elapsed},
                    "version": RECORD_VERSION,
                })
    return records

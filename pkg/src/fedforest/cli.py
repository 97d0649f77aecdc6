"""Command-line entry point: train, score, experiment, and report.

Exit codes: 0 success, 1 runtime failure (bad model, no results), 2 usage or
configuration errors (unknown point names, missing files, bad thresholds).
The transport default can be set with FEDFOREST_TRANSPORT=loopback|tcp.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import data as datagen
from . import experiment, model_io, report
from .forest import DEFAULT_THRESHOLD, anomaly_scores, build_iforest_baseline, classify
from .model_io import ModelFormatError
from .runner import (rng_for_node, run_federated_loopback, run_tcp_client,
                     run_tcp_server)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _client_data(args, cid: int) -> np.ndarray:
    """Private values for one client: a file if given, else synthesized."""
    if args.data:
        path = Path(args.data[cid - 1])
        if not path.exists():
            raise CliError(f"data file not found: {path}")
        try:
            return datagen.load_values(path)
        except ValueError as exc:
            raise CliError(f"cannot parse {path}: {exc}", EXIT_RUNTIME) from exc
    rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(1000 + cid,)))
    return datagen.gen_training_set(args.gen_size, rng)


def cmd_train(args) -> int:
    if args.data and len(args.data) != args.clients:
        raise CliError(f"got {len(args.data)} data files for {args.clients} clients")
    # the TCP server holds no training data; every other invocation needs some
    server_only = (args.builder == "federated" and args.transport == "tcp"
                   and args.role == "server")
    if not server_only and not args.data and args.gen_size is None:
        raise CliError("provide --data per client or --gen-size")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    client_ids = list(range(1, args.clients + 1))

    if args.builder == "baseline":
        pooled = np.concatenate([_client_data(args, cid) for cid in client_ids])
        model, peak, elapsed = experiment.measure_cost(
            lambda: build_iforest_baseline(pooled, args.trees, args.depth,
                                           rng_for_node(args.seed, 1), seed=args.seed)
        )
        path = out_dir / "model_baseline.json"
        model_io.save_model(model, path)
        print(f"wrote {path}")
        print(f"peak_memory_bytes={peak} build_time_seconds={elapsed:.6f}")
        return EXIT_OK

    if args.transport == "tcp":
        if args.role == "all":
            raise CliError("TCP requires --role server or --role client per node")
        if args.role == "server":
            run_tcp_server(client_ids, args.trees, args.depth, args.seed,
                           host=args.host, port=args.port, timeout=args.timeout,
                           on_ready=lambda port: print(f"listening on {args.host}:{port}",
                                                       flush=True))
            return EXIT_OK
        if args.node_id is None or args.node_id not in client_ids:
            raise CliError(f"--node-id must be one of {client_ids}")
        values = _client_data(args, args.node_id)
        model, peak, elapsed = experiment.measure_cost(
            lambda: run_tcp_client(args.node_id, client_ids, values, args.trees,
                                   args.depth, args.seed, args.host, args.port,
                                   timeout=args.timeout)
        )
        path = out_dir / f"model_client{args.node_id}.json"
        model_io.save_model(model, path)
        print(f"wrote {path}")
        print(f"peak_memory_bytes={peak} build_time_seconds={elapsed:.6f}")
        return EXIT_OK

    # all-in-one loopback
    datasets = {cid: _client_data(args, cid) for cid in client_ids}
    forests, peak, elapsed = experiment.measure_cost(
        lambda: run_federated_loopback(datasets, args.trees, args.depth, seed=args.seed)
    )
    for cid in client_ids:
        path = out_dir / f"model_client{cid}.json"
        model_io.save_model(forests[cid], path)
        print(f"wrote {path}")
    print(f"peak_memory_bytes={peak} build_time_seconds={elapsed:.6f}")
    return EXIT_OK


def cmd_score(args) -> int:
    model_path = Path(args.model)
    input_path = Path(args.input)
    for path in (model_path, input_path):
        if not path.exists():
            raise CliError(f"file not found: {path}")
    if not 0.0 < args.threshold < 1.0:
        raise CliError(f"threshold must be in (0, 1), got {args.threshold}")
    try:
        model = model_io.load_model(model_path)
    except ModelFormatError as exc:
        raise CliError(f"cannot load model {model_path}: {exc}", EXIT_RUNTIME) from exc
    try:
        values = datagen.load_values(input_path)
    except ValueError as exc:
        raise CliError(f"cannot parse {input_path}: {exc}", EXIT_RUNTIME) from exc
    scores = anomaly_scores(model, values)
    for value, score in zip(values, scores):
        print(f"{value:g} {score:.6f} {classify(score, args.threshold)}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    points: list[experiment.GridPoint] = []
    if args.points:
        try:
            points.extend(experiment.parse_points(args.points))
        except ValueError as exc:
            raise CliError(str(exc)) from exc
    if args.depths or args.trees or args.train_sizes:
        if not (args.depths and args.trees and args.train_sizes):
            raise CliError("--depths, --trees and --train-sizes must be given together")
        points.extend(
            experiment.GridPoint(d, t, s)
            for d in _int_list(args.depths, "--depths")
            for t in _int_list(args.trees, "--trees")
            for s in _int_list(args.train_sizes, "--train-sizes")
        )
    if not points:
        raise CliError("no grid: pass --point/--points or --depths/--trees/--train-sizes")
    builders = ("federated", "baseline") if args.builder == "both" else (args.builder,)

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    def sink(rec: dict) -> None:
        model_io.append_records([rec], out_path)

    records = experiment.run_experiment(
        points, args.reps, sink, builders=builders, n_clients=args.clients,
        seed=args.seed, n_test=args.n_test, anomaly_frac=args.anomaly_frac,
    )
    failures = sum(1 for r in records if "error" in r)
    print(f"wrote {len(records)} records to {out_path}"
          + (f" ({failures} build failures)" if failures else ""))
    return EXIT_RUNTIME if failures else EXIT_OK


def cmd_report(args) -> int:
    results_path = Path(args.results)
    if not results_path.exists():
        raise CliError(f"results file not found: {results_path}")
    records, skipped = model_io.read_records_lenient(results_path)
    if skipped:
        print(f"skipped {skipped} corrupt lines in {results_path}", file=sys.stderr)
    if not records:
        raise CliError(f"no usable records in {results_path}", EXIT_RUNTIME)
    try:
        written = report.write_report(records, args.out_dir)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_RUNTIME) from exc
    print(f"wrote {written['summary']}")
    if "matched" in written:
        print(f"wrote {written['matched']}")
    for fig in written["figures"]:
        print(f"wrote {fig}")
    return EXIT_OK


def _int_list(text: str, flag: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise CliError(f"{flag} expects comma-separated integers: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedforest",
        description="Federated isolation-forest anomaly detection over temperature data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="build a model and write model files")
    p.add_argument("--builder", choices=("federated", "baseline"), default="federated")
    p.add_argument("--transport", choices=("loopback", "tcp"),
                   default=os.environ.get("FEDFOREST_TRANSPORT", "loopback"))
    p.add_argument("--role", choices=("all", "server", "client"), default="all",
                   help="node role; all-in-one runs every node in-process over loopback")
    p.add_argument("--clients", type=int, default=2, help="number of client nodes")
    p.add_argument("--node-id", type=int, help="this node's client id (TCP client role)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0, help="server port (0 picks a free one)")
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--trees", type=int, default=25)
    p.add_argument("--depth", type=int, default=6)
    p.add_argument("--seed", type=int, default=experiment.DEFAULT_SEED)
    p.add_argument("--data", action="append",
                   help="training values file, one flag per client")
    p.add_argument("--gen-size", type=int,
                   help="synthesize this many training values per client")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score values against a model file")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("experiment", help="run the evaluation grid")
    p.add_argument("--points", "--point", dest="points",
                   help="comma-separated point labels, e.g. A,B,C,D,E")
    p.add_argument("--depths", help="comma-separated max depths")
    p.add_argument("--trees", help="comma-separated forest sizes")
    p.add_argument("--train-sizes", help="comma-separated per-client training sizes")
    p.add_argument("--clients", type=int, default=experiment.DEFAULT_N_CLIENTS)
    p.add_argument("--reps", type=int, default=40)
    p.add_argument("--seed", type=int, default=experiment.DEFAULT_SEED)
    p.add_argument("--builder", choices=("federated", "baseline", "both"),
                   default="federated")
    p.add_argument("--n-test", type=int, default=experiment.DEFAULT_N_TEST)
    p.add_argument("--anomaly-frac", type=float, default=experiment.DEFAULT_ANOMALY_FRAC)
    p.add_argument("--out", default="results.jsonl")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="aggregate results into tables and figures")
    p.add_argument("--results", required=True)
    p.add_argument("--out-dir", default="report")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

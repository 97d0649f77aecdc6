"""Node orchestration: run a federated build across loopback threads or TCP.

Node ids: the server is id 0 by convention; clients are 1..n. Every node's
split draws come from its own generator stream, derived from the run seed
and the node id, so loopback and TCP runs of the same configuration produce
identical models.
"""

from __future__ import annotations

import logging
import threading

import numpy as np

from .forest import Forest
from .protocol import NodeState, build_iforest_federated
from .transport import LoopbackHub, TcpClientChannel, TcpServerChannel

log = logging.getLogger(__name__)

SERVER_ID = 0


def rng_for_node(seed: int, node_id: int) -> np.random.Generator:
    """Per-node stream: same (seed, node_id) gives the same draws everywhere."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(node_id,)))


def _run_node(state: NodeState, num_trees: int, max_depth: int, seed: int,
              out: dict, errors: list, node_id: int) -> None:
    try:
        out[node_id] = build_iforest_federated(state, num_trees, max_depth, seed=seed)
    except BaseException as exc:  # surface thread failures to the caller
        log.error("node %d failed: %s", node_id, exc)
        errors.append((node_id, exc))
    finally:
        state.channel.close()


def run_federated_loopback(datasets: dict[int, np.ndarray], num_trees: int,
                           max_depth: int, seed: int,
                           state_sink: dict | None = None,
                           timeout: float | None = 60.0) -> dict[int, Forest]:
    """All-in-one run: one thread per node, queues as the wire.

    datasets maps client id -> private values; returns client id -> Forest.
    When state_sink is given it is filled with node id -> NodeState after the
    run, exposing per-tree round counts for cost accounting. The timeout only
    fires when a peer thread died mid-round; rounds otherwise never stall.
    """
    client_ids = sorted(datasets)
    if SERVER_ID in client_ids:
        raise ValueError(f"client id {SERVER_ID} is reserved for the server")
    for cid in client_ids:
        if np.asarray(datasets[cid]).size == 0:
            raise ValueError(f"client {cid} has no training data")
    hub = LoopbackHub(server_id=SERVER_ID, client_ids=client_ids, timeout=timeout)
    states = {
        SERVER_ID: NodeState(
            channel=hub.channel(SERVER_ID),
            rng=rng_for_node(seed, SERVER_ID),
            data=np.empty(0),
        )
    }
    for cid in client_ids:
        states[cid] = NodeState(
            channel=hub.channel(cid), rng=rng_for_node(seed, cid), data=datasets[cid]
        )

    out: dict[int, Forest] = {}
    errors: list = []
    threads = [
        threading.Thread(
            target=_run_node,
            args=(states[nid], num_trees, max_depth, seed, out, errors, nid),
            name=f"node-{nid}",
        )
        for nid in states
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        nid, exc = errors[0]
        raise RuntimeError(f"federated build failed on node {nid}: {exc}") from exc
    if state_sink is not None:
        state_sink.update(states)
    return {cid: out[cid] for cid in client_ids}


def run_tcp_server(client_ids, num_trees: int, max_depth: int, seed: int,
                   host: str = "127.0.0.1", port: int = 0,
                   timeout: float = 30.0, on_ready=None) -> None:
    """Blocking server node: accept all clients, then drive the build."""
    channel = TcpServerChannel(SERVER_ID, client_ids, host=host, port=port, timeout=timeout)
    if on_ready is not None:
        on_ready(channel.port)
    try:
        channel.accept_clients()
        state = NodeState(channel=channel, rng=rng_for_node(seed, SERVER_ID), data=np.empty(0))
        build_iforest_federated(state, num_trees, max_depth, seed=seed)
    finally:
        channel.close()


def run_tcp_client(node_id: int, client_ids, data, num_trees: int, max_depth: int,
                   seed: int, host: str, port: int, timeout: float = 30.0) -> Forest:
    """Blocking client node: connect, register, build, return the local forest."""
    channel = TcpClientChannel(node_id, SERVER_ID, client_ids, host=host, port=port,
                               timeout=timeout)
    try:
        state = NodeState(channel=channel, rng=rng_for_node(seed, node_id), data=data)
        return build_iforest_federated(state, num_trees, max_depth, seed=seed)
    finally:
        channel.close()


def run_federated_tcp(datasets: dict[int, np.ndarray], num_trees: int, max_depth: int,
                      seed: int, timeout: float = 30.0) -> dict[int, Forest]:
    """Same contract as run_federated_loopback but over localhost sockets."""
    client_ids = sorted(datasets)
    if SERVER_ID in client_ids:
        raise ValueError(f"client id {SERVER_ID} is reserved for the server")

    port_ready = threading.Event()
    port_box: dict[str, int] = {}

    def on_ready(port: int) -> None:
        port_box["port"] = port
        port_ready.set()

    errors: list = []

    def server_main() -> None:
        try:
            run_tcp_server(client_ids, num_trees, max_depth, seed,
                           timeout=timeout, on_ready=on_ready)
        except BaseException as exc:
            errors.append((SERVER_ID, exc))
            port_ready.set()

    server_thread = threading.Thread(target=server_main, name="node-0")
    server_thread.start()
    port_ready.wait(timeout)
    if "port" not in port_box:
        server_thread.join()
        raise RuntimeError(f"TCP server failed to start: {errors}")
    port = port_box["port"]

    out: dict[int, Forest] = {}

    def client_main(cid: int) -> None:
        try:
            out[cid] = run_tcp_client(cid, client_ids, datasets[cid], num_trees,
                                      max_depth, seed, "127.0.0.1", port, timeout=timeout)
        except BaseException as exc:
            errors.append((cid, exc))

    client_threads = [
        threading.Thread(target=client_main, args=(cid,), name=f"node-{cid}")
        for cid in client_ids
    ]
    for t in client_threads:
        t.start()
    for t in client_threads:
        t.join()
    server_thread.join()
    if errors:
        nid, exc = errors[0]
        raise RuntimeError(f"federated build failed on node {nid}: {exc}") from exc
    return {cid: out[cid] for cid in client_ids}

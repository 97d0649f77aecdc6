"""Layer-by-layer federated isolation-forest training.

Every node runs the same program (SPMD); behavior branches on whether the
node is the aggregation server. Tree growth is breadth-first: each queue pop
costs one split round (clients propose, the server averages) followed by one
phase-sync round (the server's phase is disseminated so all nodes exit a
tree together). A client whose queue drains enters CLIENT_RESTING and keeps
answering rounds with a resting marker until the server has filtered every
client out and flips to END_TREE.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .forest import Forest, Tree, TreeNode, propose_split
from .messages import Phase, RoundMessage
from .transport import Channel

log = logging.getLogger(__name__)


class ProtocolError(RuntimeError):
    """Raised when a build violates the round contract or stalls."""


def fl_centralized(channel: Channel, server_cb, client_cb, local_data, private_data,
                   iterations: int = 1) -> RoundMessage:
    """One centralized federated-learning exchange.

    Round contract: the server broadcasts its local_data, every client
    answers with client_cb(local_data, private_data, received), the server
    reduces the replies with server_cb and broadcasts the aggregate, which
    every node (server included) returns.
    """
    result = None
    for _ in range(iterations):
        if channel.is_server:
            channel.broadcast(_as_message(local_data))
            replies = channel.gather()
            result = server_cb(local_data, replies)
            channel.broadcast(result)
        else:
            msg = channel.await_broadcast()
            channel.reply(client_cb(local_data, private_data, msg))
            result = channel.await_broadcast()
    return result


def _as_message(value) -> RoundMessage:
    """Normalize callback inputs to the wire message shape."""
    if isinstance(value, RoundMessage):
        return value
    if isinstance(value, Phase):
        return RoundMessage(phase=value)
    if value is None:
        return RoundMessage(phase=Phase.INITIAL)
    return RoundMessage(phase=Phase.INITIAL, data=float(value))


def client_process_layer(partition, rng, full_range) -> float:
    """Client-side split proposal for the partition being processed.

    Degenerate partitions still produce a well-formed proposal: a singleton
    proposes its value, an empty partition proposes a draw over the client's
    full data range. The aggregate for such a node is never applied by this
    client (the node is terminal for it), but other clients may use it.
    """
    return propose_split(partition, rng, fallback_range=full_range)


def server_aggregate_layer(proposals: list[float]) -> float:
    """Arithmetic mean of the surviving client proposals."""
    assert proposals, "aggregation requires at least one active proposal"
    return float(np.mean(proposals))


@dataclass
class NodeState:
    """One node's per-run identity and per-tree phase registers."""

    channel: Channel
    rng: np.random.Generator
    data: np.ndarray  # this node's private values (empty on the server)
    client_phase: Phase = Phase.INITIAL
    server_phase: Phase = Phase.INITIAL
    full_range: tuple[float, float] | None = field(default=None)
    rounds_log: list[int] = field(default_factory=list)  # iterations per tree build

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.size and self.full_range is None:
            self.full_range = (float(self.data.min()), float(self.data.max()))

    def reset_phases(self) -> None:
        # Carrying END_TREE over would end every later tree on its first
        # round, so each tree build starts from INITIAL.
        self.client_phase = Phase.INITIAL
        self.server_phase = Phase.INITIAL

    # -- split-round callbacks Alg. 3 / Alg. 4 ----------------------------

    def client_processing(self, local_data, private_partition, msg) -> RoundMessage:
        if self.client_phase == Phase.CLIENT_RESTING:
            return RoundMessage(phase=Phase.CLIENT_RESTING, data=0.0)
        proposal = client_process_layer(private_partition, self.rng, self.full_range)
        return RoundMessage(phase=self.client_phase, data=proposal)

    def server_processing(self, local_data, msgs: list[RoundMessage]) -> RoundMessage:
        proposals = [m.data for m in msgs if m.phase != Phase.CLIENT_RESTING]
        if not proposals:
            self.server_phase = Phase.END_TREE
            return RoundMessage(phase=self.server_phase, data=None)
        return RoundMessage(phase=self.server_phase, data=server_aggregate_layer(proposals))

    # -- phase-sync callbacks ----------------------------------------------

    def server_phase_cb(self, local_data, msgs) -> RoundMessage:
        # The server's phase is the round result regardless of client echoes.
        return _as_message(local_data)

    def client_phase_cb(self, local_data, private_data, msg) -> RoundMessage:
        return RoundMessage(phase=msg.phase)


def build_itree_federated(state: NodeState, max_depth: int) -> TreeNode | None:
    """Grow one tree across all nodes; returns the local root (None on the server).

    Per iteration every node pops its next (node, partition, depth) task, or
    a blank task if its queue is empty, then joins the split round and the
    phase-sync round. Terminal tasks (depth cap or <= 1 distinct value) still
    contribute a proposal to the split round before being discarded; the
    client rests once a terminal pop leaves its queue empty. Client queues
    may diverge in shape when a partition empties locally, so an aggregate
    can average proposals from different tree positions.
    """
    if max_depth < 1:
        raise ProtocolError(f"max_depth must be >= 1, got {max_depth}")
    state.reset_phases()
    channel = state.channel
    root = TreeNode()
    tasks = deque([(root, state.data, 0)])

    # Every pop handles one node; a client tree has at most 2^(max_depth+1)-1
    # nodes, plus one closing all-resting iteration.
    watchdog = 2 * (2 ** (max_depth + 1))
    rounds = 0
    while True:
        rounds += 1
        if rounds > watchdog:
            raise ProtocolError(
                f"protocol stalled: {rounds} rounds for max_depth {max_depth}"
            )
        if tasks:
            node, partition, depth = tasks.popleft()
        else:
            node, partition, depth = None, None, None

        ret = fl_centralized(
            channel,
            state.server_processing,
            state.client_processing,
            RoundMessage(phase=state.server_phase),
            partition,
        )
        phase = fl_centralized(
            channel, state.server_phase_cb, state.client_phase_cb, ret.phase, ret.phase
        )
        if phase.phase == Phase.END_TREE:
            state.rounds_log.append(rounds)
            return None if channel.is_server else root
        if channel.is_server:
            continue
        if state.client_phase == Phase.CLIENT_RESTING or node is None:
            continue
        if depth >= max_depth or len(np.unique(partition)) <= 1:
            if not tasks:
                state.client_phase = Phase.CLIENT_RESTING
            continue
        node.split_value = float(ret.data)
        node.left = TreeNode()
        node.right = TreeNode()
        mask = partition < node.split_value
        tasks.append((node.left, partition[mask], depth + 1))
        tasks.append((node.right, partition[~mask], depth + 1))


def build_iforest_federated(state: NodeState, num_trees: int, max_depth: int,
                            seed: int = 0) -> Forest | None:
    """Sequential tree builds; clients return their forest, the server None."""
    if num_trees < 1:
        raise ProtocolError(f"num_trees must be >= 1, got {num_trees}")
    trees = []
    for tree_idx in range(num_trees):
        state.channel.set_tree(tree_idx)
        root = build_itree_federated(state, max_depth)
        if root is not None:
            trees.append(Tree(root=root, train_size=int(state.data.size)))
    if state.channel.is_server:
        return None
    return Forest(trees=trees, max_depth=max_depth, builder="federated", seed=seed)

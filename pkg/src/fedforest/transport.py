"""Round-synchronous message exchange between one server and its clients.

Two interchangeable backends: an in-process loopback built on queues, and a
TCP backend with length-prefixed JSON frames. Both expose the same primitive
set (broadcast/gather on the server, await_broadcast/reply on clients) with
strict round alternation: no node sees a frame from round k+1 before round k
is complete. Sequence numbers enforce the lockstep.
"""

from __future__ import annotations

import json
import logging
import queue
import socket
import struct
import time
from dataclasses import dataclass

from .messages import Phase, RoundMessage

log = logging.getLogger(__name__)

KIND_BROADCAST = "b"
KIND_REPLY = "r"
KIND_HELLO = "h"  # registration only, not part of round traffic

DEFAULT_TCP_TIMEOUT = 30.0


class TransportError(RuntimeError):
    """Raised on framing violations, timeouts, or broken connections."""


@dataclass(frozen=True)
class Frame:
    """One wire unit: a round payload tagged with its position in the run."""

    seq: int
    tree: int
    kind: str
    phase: int
    data: float | None

    def message(self) -> RoundMessage:
        return RoundMessage(phase=Phase(self.phase), data=self.data)


def frame_from_message(msg: RoundMessage, seq: int, tree: int, kind: str) -> Frame:
    data = msg.data if msg.data is None else float(msg.data)
    return Frame(seq=seq, tree=tree, kind=kind, phase=int(msg.phase), data=data)


def encode_frame(frame: Frame) -> bytes:
    payload = json.dumps(
        {
            "seq": frame.seq,
            "tree": frame.tree,
            "kind": frame.kind,
            "phase": frame.phase,
            "data": frame.data,
        },
        separators=(",", ":"),
    ).encode("utf-8")
    return struct.pack(">I", len(payload)) + payload


def decode_frame(payload: bytes) -> Frame:
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TransportError(f"undecodable frame: {exc}") from exc
    try:
        kind = obj["kind"]
        if kind not in (KIND_BROADCAST, KIND_REPLY, KIND_HELLO):
            raise TransportError(f"unknown frame kind {kind!r}")
        data = obj["data"]
        if data is not None:
            data = float(data)
        return Frame(
            seq=int(obj["seq"]),
            tree=int(obj["tree"]),
            kind=kind,
            phase=int(obj["phase"]),
            data=data,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise TransportError(f"malformed frame {obj!r}: {exc}") from exc


class Channel:
    """One node's view of the round exchange.

    Subclasses supply the raw send/receive primitives; this base tracks the
    (tree, seq) lockstep shared by both backends. The server drives rounds
    with broadcast()/gather(); clients mirror with await_broadcast()/reply().
    """

    def __init__(self, node_id: int, server_id: int, client_ids):
        self.node_id = node_id
        self.server_id = server_id
        self.client_ids = sorted(client_ids)
        if not self.client_ids:
            raise TransportError("no clients configured")
        if server_id in self.client_ids:
            raise TransportError(f"node {server_id} cannot be both server and client")
        self.seq = 0
        self.tree = 0

    @property
    def is_server(self) -> bool:
        return self.node_id == self.server_id

    def set_tree(self, tree_idx: int) -> None:
        self.tree = tree_idx

    # -- server side ------------------------------------------------------

    def broadcast(self, msg: RoundMessage) -> None:
        if not self.is_server:
            raise TransportError("broadcast is a server operation")
        self.seq += 1
        frame = frame_from_message(msg, seq=self.seq, tree=self.tree, kind=KIND_BROADCAST)
        self._send_to_clients(frame)

    def gather(self) -> list[RoundMessage]:
        """One reply per client for the current seq, ordered by client id."""
        if not self.is_server:
            raise TransportError("gather is a server operation")
        replies: dict[int, Frame] = {}
        for _ in self.client_ids:
            sender, frame = self._recv_reply()
            if sender in replies:
                raise TransportError(f"duplicate reply from node {sender} at seq {self.seq}")
            if frame.kind != KIND_REPLY:
                raise TransportError(f"expected reply from node {sender}, got kind {frame.kind!r}")
            if frame.seq != self.seq:
                raise TransportError(
                    f"stale reply from node {sender}: seq {frame.seq}, expected {self.seq}"
                )
            if frame.tree != self.tree:
                raise TransportError(
                    f"tree desync from node {sender}: tree {frame.tree}, expected {self.tree}"
                )
            replies[sender] = frame
        return [replies[cid].message() for cid in self.client_ids]

    # -- client side ------------------------------------------------------

    def await_broadcast(self) -> RoundMessage:
        if self.is_server:
            raise TransportError("await_broadcast is a client operation")
        frame = self._recv_broadcast()
        self.seq += 1
        if frame.kind != KIND_BROADCAST:
            raise TransportError(f"expected broadcast, got kind {frame.kind!r}")
        if frame.seq != self.seq:
            raise TransportError(f"round desync: broadcast seq {frame.seq}, expected {self.seq}")
        if frame.tree != self.tree:
            raise TransportError(f"tree desync: broadcast tree {frame.tree}, expected {self.tree}")
        return frame.message()

    def reply(self, msg: RoundMessage) -> None:
        if self.is_server:
            raise TransportError("reply is a client operation")
        frame = frame_from_message(msg, seq=self.seq, tree=self.tree, kind=KIND_REPLY)
        self._send_to_server(frame)

    # -- backend primitives -----------------------------------------------

    def _send_to_clients(self, frame: Frame) -> None:
        raise NotImplementedError

    def _recv_reply(self) -> tuple[int, Frame]:
        raise NotImplementedError

    def _recv_broadcast(self) -> Frame:
        raise NotImplementedError

    def _send_to_server(self, frame: Frame) -> None:
        raise NotImplementedError

    def close(self) -> None:
        pass


class LoopbackHub:
    """Shared mailboxes for an all-in-one run; one queue per direction."""

    def __init__(self, server_id: int, client_ids, timeout: float | None = None):
        self.server_id = server_id
        self.client_ids = sorted(client_ids)
        self.timeout = timeout  # None blocks forever; loopback cannot lose frames
        self.inboxes = {cid: queue.Queue() for cid in self.client_ids}
        self.server_inbox: queue.Queue = queue.Queue()

    def channel(self, node_id: int) -> "LoopbackChannel":
        if node_id != self.server_id and node_id not in self.inboxes:
            raise TransportError(f"unknown node id {node_id}")
        return LoopbackChannel(self, node_id)


class LoopbackChannel(Channel):
    def __init__(self, hub: LoopbackHub, node_id: int):
        super().__init__(node_id, hub.server_id, hub.client_ids)
        self.hub = hub

    def _get(self, box: queue.Queue):
        try:
            return box.get(timeout=self.hub.timeout)
        except queue.Empty:
            raise TransportError(f"node {self.node_id}: round timed out") from None

    def _send_to_clients(self, frame: Frame) -> None:
        for cid in self.client_ids:
            self.hub.inboxes[cid].put(frame)

    def _recv_reply(self) -> tuple[int, Frame]:
        return self._get(self.hub.server_inbox)

    def _recv_broadcast(self) -> Frame:
        return self._get(self.hub.inboxes[self.node_id])

    def _send_to_server(self, frame: Frame) -> None:
        self.hub.server_inbox.put((self.node_id, frame))


# -- TCP backend ------------------------------------------------------------


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        try:
            chunk = sock.recv(n - len(buf))
        except socket.timeout:
            raise TransportError("socket receive timed out") from None
        if not chunk:
            raise TransportError("connection closed mid-frame")
        buf.extend(chunk)
    return bytes(buf)


def send_frame(sock: socket.socket, frame: Frame) -> None:
    try:
        sock.sendall(encode_frame(frame))
    except OSError as exc:
        raise TransportError(f"send failed: {exc}") from exc


def recv_frame(sock: socket.socket) -> Frame:
    header = _recv_exact(sock, 4)
    (length,) = struct.unpack(">I", header)
    return decode_frame(_recv_exact(sock, length))


class TcpServerChannel(Channel):
    """Accepts one connection per configured client before round 0 begins.

    Registration: each client's first frame is a hello carrying its node id
    in the data field. The server refuses to start until every configured
    client has registered.
    """

    def __init__(
        self,
        node_id: int,
        client_ids,
        host: str = "127.0.0.1",
        port: int = 0,
        timeout: float = DEFAULT_TCP_TIMEOUT,
    ):
        super().__init__(node_id, node_id, client_ids)
        self.timeout = timeout
        self.listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.listener.bind((host, port))
        self.listener.listen(len(self.client_ids))
        self.port = self.listener.getsockname()[1]
        self.conns: dict[int, socket.socket] = {}

    def accept_clients(self) -> None:
        self.listener.settimeout(self.timeout)
        while len(self.conns) < len(self.client_ids):
            try:
                conn, addr = self.listener.accept()
            except socket.timeout:
                missing = sorted(set(self.client_ids) - set(self.conns))
                raise TransportError(f"clients never connected: {missing}") from None
            conn.settimeout(self.timeout)
            # rounds are ping-pongs of tiny frames; Nagle + delayed ACK would
            # add ~40ms whenever two broadcasts go out back to back
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            hello = recv_frame(conn)
            if hello.kind != KIND_HELLO or hello.data is None:
                raise TransportError(f"bad registration from {addr}: {hello}")
            cid = int(hello.data)
            if cid not in self.client_ids:
                raise TransportError(f"unexpected node id {cid} from {addr}")
            if cid in self.conns:
                raise TransportError(f"node {cid} registered twice")
            self.conns[cid] = conn
            log.debug("registered client %d from %s", cid, addr)
        self.listener.close()

    def _send_to_clients(self, frame: Frame) -> None:
        if len(self.conns) < len(self.client_ids):
            raise TransportError("broadcast before all clients registered")
        for cid in self.client_ids:
            send_frame(self.conns[cid], frame)

    def _recv_reply(self) -> tuple[int, Frame]:
        # Read sockets in id order; each client sends exactly one reply per
        # broadcast, so a per-socket blocking read cannot deadlock.
        cid = self._pending.pop(0)
        try:
            return cid, recv_frame(self.conns[cid])
        except TransportError as exc:
            raise TransportError(f"node {cid}: {exc}") from exc

    def gather(self) -> list[RoundMessage]:
        self._pending = list(self.client_ids)
        return super().gather()

    def close(self) -> None:
        for conn in self.conns.values():
            try:
                conn.close()
            except OSError:
                pass


class TcpClientChannel(Channel):
    def __init__(
        self,
        node_id: int,
        server_id: int,
        client_ids,
        host: str,
        port: int,
        timeout: float = DEFAULT_TCP_TIMEOUT,
        connect_retries: int = 50,
        retry_delay: float = 0.1,
    ):
        super().__init__(node_id, server_id, client_ids)
        self.sock = None
        last_err = None
        for _ in range(connect_retries):
            try:
                self.sock = socket.create_connection((host, port), timeout=timeout)
                break
            except OSError as exc:
                last_err = exc
                time.sleep(retry_delay)
        if self.sock is None:
            raise TransportError(f"cannot reach server at {host}:{port}: {last_err}")
        self.sock.settimeout(timeout)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        send_frame(self.sock, Frame(seq=0, tree=0, kind=KIND_HELLO, phase=0, data=float(node_id)))

    def _recv_broadcast(self) -> Frame:
        return recv_frame(self.sock)

    def _send_to_server(self, frame: Frame) -> None:
        send_frame(self.sock, frame)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass

"""Halo exchange and collective reductions over pluggable transports.

Two transports implement the same point-to-point contract:

* ``InprocTransport`` - shared mailboxes between worker threads in one
  process (the default).
* ``SocketTransport`` - length-prefixed binary frames over TCP for
  multi-process runs.  Frame layout, bit exact:
  ``[magic 0x48 0x59 0x44 0x52][u32 LE tag][u32 LE payload bytes]
  [payload: IEEE-754 binary64 little-endian]``.
  The tag packs ``(field_id << 24) | (face_id << 16) | source_rank``.

Payloads are slabs flattened with the x index fastest (i, then j, then k).
Ghost corners and edges are filled by exchanging one axis at a time in the
fixed order x, y, z: the y pass carries the freshly filled x ghost columns
and the z pass carries both, so diagonal data propagates without dedicated
corner messages.  All stencils in this package are axis aligned plus the
trilinear multigrid prolongation, which this two-pass propagation covers.

Reductions run on a rank-ascending binomial tree with a fixed combine order,
so sums are reproducible across runs for a given worker count.
"""

from __future__ import annotations

import math
import socket
import struct
import threading
import time
from collections import deque

import numpy as np

from .errors import TransportFailure
from .mesh import HIGH, LOW, face_index

MAGIC = bytes.fromhex("48594452")
HEADER = struct.Struct("<4sII")

FIELD_IDS = {"u": 0, "v": 1, "w": 2, "p": 3, "phi": 4, "rho": 5, "mu": 6,
             "nut": 7, "nu": 8, "d0": 9, "scratch": 10}
_REDUCE_FIELD = 60
_BCAST_FIELD = 61
_GATHER_FIELD = 62

DEFAULT_TIMEOUT = 600.0


def pack_tag(field_id: int, face_id: int, source: int) -> int:
    if not (0 <= field_id < 64 and 0 <= face_id < 8 and 0 <= source < 65536):
        raise ValueError("tag component out of range")
    return (field_id << 24) | (face_id << 16) | source


def unpack_tag(tag: int) -> tuple[int, int, int]:
    return (tag >> 24) & 0xFF, (tag >> 16) & 0xFF, tag & 0xFFFF


def encode_frame(tag: int, payload: np.ndarray) -> bytes:
    data = np.ascontiguousarray(payload, dtype="<f8").tobytes()
    return HEADER.pack(MAGIC, tag, len(data)) + data


class Mailbox:
    """Thread-safe store of received payloads keyed by (source, tag)."""

    def __init__(self):
        self._cond = threading.Condition()
        self._slots: dict[tuple[int, int], deque] = {}

    def put(self, source: int, tag: int, payload: np.ndarray):
        with self._cond:
            self._slots.setdefault((source, tag), deque()).append(payload)
            self._cond.notify_all()

    def get(self, source: int, tag: int, timeout: float) -> np.ndarray:
        deadline = time.monotonic() + timeout
        with self._cond:
            while True:
                q = self._slots.get((source, tag))
                if q:
                    return q.popleft()
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise TransportFailure(
                        f"timed out waiting for message source={source} "
                        f"tag={tag:#010x}")
                self._cond.wait(remaining)


class InprocRouter:
    """Mailbox fabric shared by all worker threads of one run."""

    def __init__(self, size: int):
        self.size = size
        self.boxes = [Mailbox() for _ in range(size)]

    def transport(self, rank: int) -> "InprocTransport":
        return InprocTransport(self, rank)


class InprocTransport:
    def __init__(self, router: InprocRouter, rank: int):
        self._router = router
        self.rank = rank
        self.size = router.size
        self.timeout = DEFAULT_TIMEOUT

    def send(self, dest: int, tag: int, payload: np.ndarray):
        # copy so the sender may immediately reuse its buffer
        self._router.boxes[dest].put(self.rank, tag,
                                     np.array(payload, dtype=np.float64,
                                              copy=True).ravel())

    def recv(self, source: int, tag: int) -> np.ndarray:
        return self._router.boxes[self.rank].get(source, tag, self.timeout)

    def close(self):
        pass


class SocketTransport:
    """Full-mesh TCP transport speaking the documented frame format.

    Rank ``r`` accepts connections from every higher rank on its own
    listener and connects to every lower rank, then a reader thread per peer
    demultiplexes frames into the mailbox.  Blocking sends cannot deadlock
    because every peer drains its sockets independently of its compute
    thread.
    """

    def __init__(self, rank: int, addresses, listener: socket.socket | None = None):
        self.rank = rank
        self.size = len(addresses)
        self.timeout = DEFAULT_TIMEOUT
        self._mailbox = Mailbox()
        self._peers: dict[int, socket.socket] = {}
        self._send_locks: dict[int, threading.Lock] = {}
        self._readers: list[threading.Thread] = []
        self._closing = False

        if self.size == 1:
            if listener is not None:
                listener.close()
            return
        own_listener = listener
        if own_listener is None:
            own_listener = socket.create_server(tuple(addresses[rank]))
        own_listener.settimeout(30.0)
        try:
            # connect downward, accept from above; handshake byte = rank
            pending = {r for r in range(rank + 1, self.size)}
            for peer in range(rank):
                sock = _connect_with_retry(tuple(addresses[peer]))
                sock.sendall(struct.pack("<I", rank))
                self._register(peer, sock)
            while pending:
                try:
                    sock, _ = own_listener.accept()
                except socket.timeout as exc:
                    raise TransportFailure(
                        f"rank {rank}: peers never connected: {sorted(pending)}"
                    ) from exc
                raw = _recv_exact(sock, 4)
                peer = struct.unpack("<I", raw)[0]
                pending.discard(peer)
                self._register(peer, sock)
        finally:
            own_listener.close()

    def _register(self, peer: int, sock: socket.socket):
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._peers[peer] = sock
        self._send_locks[peer] = threading.Lock()
        t = threading.Thread(target=self._reader, args=(peer, sock), daemon=True)
        t.start()
        self._readers.append(t)

    def _reader(self, peer: int, sock: socket.socket):
        try:
            while True:
                head = _recv_exact(sock, HEADER.size)
                magic, tag, nbytes = HEADER.unpack(head)
                if magic != MAGIC:
                    raise TransportFailure(
                        f"malformed frame from rank {peer}: bad magic {magic!r}")
                data = _recv_exact(sock, nbytes)
                payload = np.frombuffer(data, dtype="<f8").astype(np.float64)
                src = unpack_tag(tag)[2]
                self._mailbox.put(src, tag, payload)
        except (OSError, TransportFailure):
            if not self._closing:
                # leave a poisoned queue; pending recvs will time out
                pass

    def send(self, dest: int, tag: int, payload: np.ndarray):
        frame = encode_frame(tag, payload)
        sock = self._peers.get(dest)
        if sock is None:
            raise TransportFailure(f"rank {self.rank} has no route to {dest}")
        try:
            with self._send_locks[dest]:
                sock.sendall(frame)
        except OSError as exc:
            raise TransportFailure(f"send to rank {dest} failed: {exc}") from exc

    def recv(self, source: int, tag: int) -> np.ndarray:
        return self._mailbox.get(source, tag, self.timeout)

    def close(self):
        self._closing = True
        for sock in self._peers.values():
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            sock.close()


class NullTransport:
    """Single-worker stand-in; collective calls degenerate to identities."""

    rank = 0
    size = 1

    def send(self, dest, tag, payload):  # pragma: no cover - never routed
        raise TransportFailure("single worker has no peers")

    def recv(self, source, tag):  # pragma: no cover - never routed
        raise TransportFailure("single worker has no peers")

    def close(self):
        pass


def _connect_with_retry(address, attempts: int = 200, delay: float = 0.05):
    last = None
    for _ in range(attempts):
        try:
            return socket.create_connection(address, timeout=30.0)
        except OSError as exc:
            last = exc
            time.sleep(delay)
    raise TransportFailure(f"could not connect to {address}: {last}")


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise TransportFailure("peer closed connection mid-frame")
        buf.extend(chunk)
    return bytes(buf)


# ---------------------------------------------------------------------------
# collectives
# ---------------------------------------------------------------------------

def allreduce(transport, value: float, kind: str, profiler=None) -> float:
    """Combine a scalar across all ranks; identical result everywhere.

    ``max`` is exact under any order; ``sum`` uses the fixed rank-ascending
    binomial tree (lower rank is always the left operand) so results are
    reproducible run to run for a fixed worker count.
    """
    if kind not in ("max", "sum"):
        raise ValueError(f"unknown reduction kind {kind!r}")
    t0 = time.perf_counter()
    try:
        size, rank = transport.size, transport.rank
        if size == 1:
            return float(value)
        partial = float(value)
        tag_of = lambda src: pack_tag(_REDUCE_FIELD, 0, src)
        mask = 1
        while mask < size:
            if rank & mask:
                transport.send(rank - mask, tag_of(rank),
                               np.array([partial]))
                break
            partner = rank + mask
            if partner < size:
                other = float(transport.recv(partner, tag_of(partner))[0])
                partial = max(partial, other) if kind == "max" else partial + other
            mask <<= 1
        return _broadcast_scalar(transport, partial)
    finally:
        if profiler is not None:
            profiler.add_comm(time.perf_counter() - t0)


def _broadcast_scalar(transport, value: float) -> float:
    size, rank = transport.size, transport.rank
    tag = pack_tag(_BCAST_FIELD, 0, 0)
    if rank == 0:
        buf = np.array([value])
        for dest in range(1, size):
            transport.send(dest, pack_tag(_BCAST_FIELD, 0, 0), buf)
        return float(value)
    return float(transport.recv(0, tag)[0])


def gather_arrays(transport, payload: np.ndarray, profiler=None):
    """Collect one flat array per rank on rank 0 (rank-ascending order)."""
    t0 = time.perf_counter()
    try:
        size, rank = transport.size, transport.rank
        if size == 1:
            return [np.asarray(payload, dtype=np.float64).ravel()]
        tag = pack_tag(_GATHER_FIELD, 0, rank)
        if rank != 0:
            transport.send(0, tag, np.asarray(payload, dtype=np.float64).ravel())
            return None
        out = [np.asarray(payload, dtype=np.float64).ravel()]
        for src in range(1, size):
            out.append(transport.recv(src, pack_tag(_GATHER_FIELD, 0, src)))
        return out
    finally:
        if profiler is not None:
            profiler.add_comm(time.perf_counter() - t0)


def broadcast_array(transport, payload, profiler=None) -> np.ndarray:
    t0 = time.perf_counter()
    try:
        size, rank = transport.size, transport.rank
        if rank == 0:
            arr = np.asarray(payload, dtype=np.float64).ravel()
            for dest in range(1, size):
                transport.send(dest, pack_tag(_BCAST_FIELD, 1, 0), arr)
            return arr
        return transport.recv(0, pack_tag(_BCAST_FIELD, 1, 0))
    finally:
        if profiler is not None:
            profiler.add_comm(time.perf_counter() - t0)


def exact_mean(transport, block: np.ndarray, n_global: int, profiler=None) -> float:
    """Partition-invariant global mean via quantised integer summation.

    Values are rounded to a shared power-of-two grid chosen so every partial
    and the total stay below 2**52; integer-valued doubles then add exactly
    in any order, so the result is bit-identical for every decomposition of
    the same global data.  The quantisation error (relative ~2**-31) is
    irrelevant for its use, removing near-zero means for Poisson
    compatibility.
    """
    local_max = float(np.max(np.abs(block))) if block.size else 0.0
    gmax = allreduce(transport, local_max, "max", profiler)
    if gmax == 0.0:
        return 0.0
    budget = 52 - math.ceil(math.log2(n_global + 1))
    scale_exp = budget - 1 - math.floor(math.log2(gmax))
    scale = math.ldexp(1.0, scale_exp)
    partial = float(np.sum(np.rint(block * scale)))
    total = allreduce(transport, partial, "sum", profiler)
    return total / (scale * n_global)


# ---------------------------------------------------------------------------
# halo exchange
# ---------------------------------------------------------------------------

def _slab_bounds(shape, g, nl, axis):
    """Perpendicular index ranges for one exchange pass.

    Axes already exchanged (index < axis) are covered ghost-to-ghost so
    corner data propagates; later axes stay interior-only, which keeps the
    x-face payload at exactly ghost_width * n_j * n_k cells.
    """
    lo = [0, 0, 0]
    hi = list(shape)
    for b in range(3):
        if b == axis:
            continue
        if b > axis:
            lo[b] = g
            hi[b] = g + nl[b]
    return lo, hi


def exchange_axis(transport, sub, a: np.ndarray, axis: int, field_id: int,
                  profiler=None, ghost_width: int | None = None):
    """Swap ghost layers with both neighbours along one axis.

    ``ghost_width`` defaults to the decomposition's; multigrid levels pass
    their own (their arrays are smaller and carry a single ghost layer).
    """
    g = ghost_width if ghost_width is not None else sub.ghost_width
    nl = tuple(n - 2 * g for n in a.shape)
    lo, hi = _slab_bounds(a.shape, g, nl, axis)

    def take(start):
        idx = [slice(lo[b], hi[b]) for b in range(3)]
        idx[axis] = slice(start, start + g)
        return a[tuple(idx)]

    def put(start, payload):
        idx = [slice(lo[b], hi[b]) for b in range(3)]
        idx[axis] = slice(start, start + g)
        view = a[tuple(idx)]
        view[...] = payload.reshape(view.shape, order="F")

    n_lo = sub.neighbors[face_index(axis, LOW)]
    n_hi = sub.neighbors[face_index(axis, HIGH)]

    # interior slabs: bottom g layers go to the low neighbour's high ghosts
    send_low = slice(g, 2 * g)
    send_high = slice(g + nl[axis] - g, g + nl[axis])
    ghost_low = 0
    ghost_high = g + nl[axis]

    if n_lo == sub.rank and n_hi == sub.rank:
        # periodic self-wrap: plain local copies
        lo_block = take(send_low.start).copy()
        hi_block = take(send_high.start).copy()
        put(ghost_low, hi_block.ravel(order="F"))
        put(ghost_high, lo_block.ravel(order="F"))
        return

    t0 = time.perf_counter()
    rank = sub.rank
    if n_lo is not None:
        transport.send(n_lo, pack_tag(field_id, face_index(axis, LOW), rank),
                       take(send_low.start).flatten(order="F"))
    if n_hi is not None:
        transport.send(n_hi, pack_tag(field_id, face_index(axis, HIGH), rank),
                       take(send_high.start).flatten(order="F"))
    if n_lo is not None:
        # low neighbour sent across its high face
        payload = transport.recv(n_lo, pack_tag(field_id, face_index(axis, HIGH), n_lo))
        put(ghost_low, payload)
    if n_hi is not None:
        payload = transport.recv(n_hi, pack_tag(field_id, face_index(axis, LOW), n_hi))
        put(ghost_high, payload)
    if profiler is not None:
        profiler.add_comm(time.perf_counter() - t0)


def exchange_halos(transport, sub, a: np.ndarray, field_name: str,
                   profiler=None, ghost_width: int | None = None):
    """Fill all neighbour-adjacent ghosts of one component (x, then y, z)."""
    fid = FIELD_IDS[field_name]
    for axis in (0, 1, 2):
        exchange_axis(transport, sub, a, axis, fid, profiler, ghost_width)

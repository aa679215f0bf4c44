"""Desk-scale vehicle-in-virtual-environment state-sync link.

Vehicle states are exchanged as fixed-size little-endian UDP datagrams and
mapped between real-world and virtual coordinates by a rigid planar frame
transform.  A localhost loopback harness injects deterministic latency and
loss for measuring link quality.  The wire format is this repository's own
versioned definition (magic VVE1).
"""

from __future__ import annotations

from dataclasses import dataclass
import math
import os
import socket
import struct
import threading
import time

import numpy as np

MAGIC = b"VVE1"
MESSAGE_SIZE = 64  # 4 magic + 4 seq + 7 float64 payload fields
_WIRE = struct.Struct("<4sI7d")
_SENTINEL_SEQ = 0xFFFFFFFF
DEFAULT_PORT = 47001


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class StateMessage:
    seq: int
    t: float
    x: float
    y: float
    psi: float
    V: float
    beta: float = 0.0
    r: float = 0.0

    def __post_init__(self):
        if not (0 <= self.seq < _SENTINEL_SEQ):
            raise ValueError("seq out of range")
        for v in (self.t, self.x, self.y, self.psi, self.V, self.beta, self.r):
            if not math.isfinite(v):
                raise ValueError("state fields must be finite")


@dataclass(frozen=True)
class FrameAnchor:
    """Source-frame origin and rotation of the target frame."""

    x0: float = 0.0
    y0: float = 0.0
    rotation: float = 0.0


def encode_state(msg: StateMessage):
    return _WIRE.pack(MAGIC, msg.seq, msg.t, msg.x, msg.y, msg.psi,
                      msg.V, msg.beta, msg.r)


def decode_state(data):
    if len(data) != MESSAGE_SIZE:
        raise ProtocolError(f"expected {MESSAGE_SIZE}-byte datagram, got {len(data)}")
    magic, seq, t, x, y, psi, V, beta, r = _WIRE.unpack(data)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    return StateMessage(seq, t, x, y, psi, V, beta, r)


def _wrap(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def frame_transform(pose, anchor: FrameAnchor):
    """Rigid planar map of (x, y, psi) into the anchored target frame."""
    x, y, psi = pose
    c, s = math.cos(anchor.rotation), math.sin(anchor.rotation)
    return (anchor.x0 + c * x - s * y,
            anchor.y0 + s * x + c * y,
            _wrap(psi + anchor.rotation))


def invert_anchor(anchor: FrameAnchor):
    c, s = math.cos(anchor.rotation), math.sin(anchor.rotation)
    return FrameAnchor(-(c * anchor.x0 + s * anchor.y0),
                       -(-s * anchor.x0 + c * anchor.y0),
                       _wrap(-anchor.rotation))


@dataclass
class LoopbackStats:
    sent: int
    dropped: int
    delivered: int
    reorder_count: int
    mean_latency: float
    dropped_seqs: list
    received_seqs: list

    @property
    def delivered_ratio(self):
        return self.delivered / self.sent if self.sent else 0.0


def default_port():
    return int(os.environ.get("VVE_PORT", DEFAULT_PORT))


def loopback_session(messages, latency=0.0, loss=0.0, seed=0, port=None,
                     anchor=None):
    """Send a message stream over localhost UDP with seeded loss/latency.

    Returns (received list of (StateMessage, transformed_pose), stats).
    Loss is decided deterministically on the sender side; latency is a fixed
    sender-side hold per datagram.
    """
    if latency < 0.0:
        raise ValueError("latency must be non-negative")
    if not (0.0 <= loss < 1.0):
        raise ValueError("loss must lie in [0, 1)")
    if port is None:
        port = default_port()
    anchor = anchor or FrameAnchor()
    rng = np.random.default_rng(seed)

    rx = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    rx.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 8 * 1024 * 1024)
    rx.bind(("127.0.0.1", port))
    rx.settimeout(5.0)
    bound_port = rx.getsockname()[1]

    received = []
    recv_times = []
    reorder = 0

    def receiver():
        nonlocal reorder
        last_seq = -1
        while True:
            try:
                data, _ = rx.recvfrom(MESSAGE_SIZE)
            except socket.timeout:
                break
            if struct.unpack_from("<I", data, 4)[0] == _SENTINEL_SEQ:
                break
            msg = decode_state(data)
            recv_times.append(time.monotonic())
            if msg.seq < last_seq:
                reorder += 1
            last_seq = max(last_seq, msg.seq)
            received.append((msg, frame_transform((msg.x, msg.y, msg.psi), anchor)))

    thread = threading.Thread(target=receiver)
    thread.start()

    tx = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    dropped_seqs = []
    send_times = {}
    drop_draws = rng.random(len(messages))
    try:
        for k, msg in enumerate(messages):
            if drop_draws[k] < loss:
                dropped_seqs.append(msg.seq)
                continue
            if latency > 0.0:
                time.sleep(latency)
            send_times[msg.seq] = time.monotonic()
            tx.sendto(encode_state(msg), ("127.0.0.1", bound_port))
            if k % 200 == 199:
                # Pace the burst so the kernel socket buffer never overflows.
                time.sleep(0.001)
        time.sleep(0.05)
        sentinel = MAGIC + struct.pack("<I", _SENTINEL_SEQ) + bytes(56)
        for _ in range(5):
            tx.sendto(sentinel, ("127.0.0.1", bound_port))
            time.sleep(0.01)
        thread.join()
    finally:
        tx.close()
        rx.close()

    latencies = [rt - send_times[msg.seq]
                 for (msg, _), rt in zip(received, recv_times)
                 if msg.seq in send_times]
    stats = LoopbackStats(
        sent=len(messages), dropped=len(dropped_seqs), delivered=len(received),
        reorder_count=reorder,
        mean_latency=float(np.mean(latencies)) if latencies else 0.0,
        dropped_seqs=dropped_seqs,
        received_seqs=[msg.seq for msg, _ in received])
    return received, stats

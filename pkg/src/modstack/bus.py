"""Deterministic discrete-event message bus with per-link loss and latency.

Models the wireless network between nodes: every directed pair of node
ids has a link condition (connectivity windows, latency, jitter, drop
probability). Loss is applied at send time: a message sent while the
link is down, or unlucky against drop_rate, never existed for the
receiver. Messages already in flight survive a later disconnection;
latency is transit, loss is access.

publish() never blocks and subscribers only ever receive via callbacks
during advance() (simulated time) or pump() (wall time), so a silent
peer can stall nothing. Identical seed and publish sequence give a
byte-identical delivery log.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import math
import random
import time
from collections import deque
from dataclasses import dataclass, field

__all__ = [
    "Envelope",
    "LinkCondition",
    "VirtualClock",
    "MessageBus",
    "encode_payload",
    "decode_payload",
]


def encode_payload(obj) -> bytes:
    if isinstance(obj, bytes):
        return obj
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def decode_payload(envelope: "Envelope"):
    return json.loads(envelope.payload.decode())


@dataclass(frozen=True)
class Envelope:
    topic: str
    payload: bytes
    src: str
    dst: str
    send_time: float
    deliver_time: float | None  # None when dropped
    seq: int = 0

    @property
    def dropped(self) -> bool:
        return self.deliver_time is None

    def data(self):
        return decode_payload(self)


@dataclass(frozen=True)
class LinkCondition:
    """Connectivity trace and quality of one (directed) link.

    connected_intervals is a sorted tuple of [start, end) windows during
    which the link is up; None means always connected. end may be
    math.inf (serialized as null).
    """

    connected_intervals: tuple | None = None
    latency: float = 0.0
    jitter: float = 0.0
    jitter_seed: int = 0
    drop_rate: float = 0.0

    def __post_init__(self):
        if self.latency < 0 or self.jitter < 0:
            raise ValueError("latency and jitter must be non-negative")
        if not 0.0 <= self.drop_rate <= 1.0:
            raise ValueError("drop_rate must be in [0, 1]")
        if self.connected_intervals is not None:
            ivs = tuple((float(a), math.inf if b is None else float(b)) for a, b in self.connected_intervals)
            prev_end = -math.inf
            for a, b in ivs:
                if b < a:
                    raise ValueError(f"interval [{a}, {b}) is reversed")
                if a < prev_end:
                    raise ValueError("connected intervals must be disjoint and sorted")
                prev_end = b
            object.__setattr__(self, "connected_intervals", ivs)

    def connected_at(self, t: float) -> bool:
        if self.connected_intervals is None:
            return True
        return any(a <= t < b for a, b in self.connected_intervals)

    @classmethod
    def with_outages(cls, outages, horizon=math.inf, **kwargs) -> "LinkCondition":
        """Build a condition that is up everywhere except the given windows."""
        ivs = []
        cursor = 0.0
        for a, b in sorted(outages):
            if a > cursor:
                ivs.append((cursor, a))
            cursor = max(cursor, b)
        ivs.append((cursor, horizon))
        return cls(connected_intervals=tuple(ivs), **kwargs)


@dataclass
class VirtualClock:
    now: float = 0.0
    mode: str = "simulated"  # or "wall"
    _wall_origin: float = field(default=0.0, repr=False)

    def __post_init__(self):
        if self.mode == "wall":
            self._wall_origin = time.monotonic() - self.now

    def read(self) -> float:
        if self.mode == "wall":
            self.now = max(self.now, time.monotonic() - self._wall_origin)
        return self.now


_PERFECT = LinkCondition()


class MessageBus:
    """Topic pub/sub over simulated links, serialized on a virtual clock."""

    def __init__(self, seed: int = 0, mode: str = "simulated", start_time: float = 0.0):
        self.seed = seed
        self.clock = VirtualClock(now=start_time, mode=mode)
        self._subs: dict[str, list] = {}
        self._taps: dict[str, list] = {}
        self._links: dict[tuple, LinkCondition] = {}
        self._pending: list = []
        self._seq = 0
        self._log: list[dict] = []
        self._link_stats: dict[tuple, deque] = {}
        self._rngs: dict[tuple, random.Random] = {}

    # -- wiring ------------------------------------------------------------

    def subscribe(self, topic: str, node_id: str, callback) -> None:
        self._subs.setdefault(topic, []).append((node_id, callback))

    def tap(self, topic: str, callback) -> None:
        """Lossless synchronous observer: callback(topic, payload, src, t) on
        every publish. Instrumentation only; taps are not network traffic and
        never appear in the delivery log."""
        self._taps.setdefault(topic, []).append(callback)

    def set_link(self, a: str, b: str, cond: LinkCondition, direction: str = "both") -> None:
        """Set the link condition; symmetric unless direction is 'ab'/'ba'.
        Last write wins."""
        if direction in ("both", "ab"):
            self._links[(a, b)] = cond
            self._rngs.pop((a, b), None)
        if direction in ("both", "ba"):
            self._links[(b, a)] = cond
            self._rngs.pop((b, a), None)

    def link(self, src: str, dst: str) -> LinkCondition:
        return self._links.get((src, dst), _PERFECT)

    def _rng(self, src: str, dst: str, cond: LinkCondition) -> random.Random:
        key = (src, dst)
        rng = self._rngs.get(key)
        if rng is None:
            digest = hashlib.sha256(f"{self.seed}|{src}|{dst}|{cond.jitter_seed}".encode()).digest()
            rng = random.Random(int.from_bytes(digest[:8], "big"))
            self._rngs[key] = rng
        return rng

    # -- traffic -----------------------------------------------------------

    def publish(self, topic: str, payload, src: str) -> None:
        """Fan one message out to every subscriber of the topic.

        Non-blocking; unknown topics are created on first use. One
        envelope is produced per subscriber, each judged against its own
        link at send time.
        """
        raw = encode_payload(payload)
        t = self.clock.read()
        for tap in self._taps.get(topic, ()):
            tap(topic, payload, src, t)
        for dst, callback in self._subs.get(topic, ()):
            cond = self.link(src, dst)
            self._seq += 1
            deliver_time = None
            if cond.connected_at(t):
                ok = True
                if cond.drop_rate > 0.0:
                    ok = self._rng(src, dst, cond).random() >= cond.drop_rate
                if ok:
                    extra = 0.0
                    if cond.jitter > 0.0:
                        extra = self._rng(src, dst, cond).uniform(0.0, cond.jitter)
                    deliver_time = t + cond.latency + extra
            env = Envelope(topic=topic, payload=raw, src=src, dst=dst,
                           send_time=t, deliver_time=deliver_time, seq=self._seq)
            self._record(env)
            if deliver_time is not None:
                heapq.heappush(self._pending, (deliver_time, self._seq, callback, env))

    def _record(self, env: Envelope) -> None:
        self._log.append({
            "t_send": round(env.send_time, 9),
            "t_deliver": None if env.deliver_time is None else round(env.deliver_time, 9),
            "topic": env.topic,
            "src": env.src,
            "dst": env.dst,
            "dropped": env.dropped,
        })
        stats = self._link_stats.setdefault((env.src, env.dst), deque())
        stats.append((env.send_time, not env.dropped))

    # -- time --------------------------------------------------------------

    def advance(self, dt: float) -> list[Envelope]:
        """Advance simulated time by dt, delivering everything due, in
        (deliver_time, sequence) order. Returns the delivered envelopes."""
        if self.clock.mode != "simulated":
            raise RuntimeError("advance() only applies to the simulated clock")
        if dt <= 0:
            raise ValueError("dt must be positive")
        return self._deliver_until(self.clock.now + dt)

    def pump(self) -> list[Envelope]:
        """Wall-clock mode: deliver everything due as of now."""
        if self.clock.mode != "wall":
            raise RuntimeError("pump() only applies to the wall clock")
        return self._deliver_until(self.clock.read())

    def _deliver_until(self, target: float) -> list[Envelope]:
        delivered = []
        while self._pending and self._pending[0][0] <= target:
            deliver_time, _, callback, env = heapq.heappop(self._pending)
            self.clock.now = max(self.clock.now, deliver_time)
            callback(env)
            delivered.append(env)
        self.clock.now = max(self.clock.now, target)
        return delivered

    # -- introspection -----------------------------------------------------

    def link_quality(self, src: str, dst: str, window: float = 2.0) -> float | None:
        """Delivered fraction of traffic sent on (src, dst) over the trailing
        window; None when the link carried nothing."""
        stats = self._link_stats.get((src, dst))
        if not stats:
            return None
        cutoff = self.clock.now - window
        while stats and stats[0][0] < cutoff:
            stats.popleft()
        if not stats:
            return None
        return sum(1 for _, ok in stats if ok) / len(stats)

    @property
    def delivery_log(self) -> list[dict]:
        return self._log

    def export_delivery_log(self) -> str:
        """Line-delimited JSON, one record per envelope ever sent."""
        return "\n".join(json.dumps(row, sort_keys=True) for row in self._log) + ("\n" if self._log else "")

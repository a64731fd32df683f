"""Discrete-event engine: integer clock, (fire_at, seq) ordered queue, seeded RNG.

The generator is xorshift64* seeded through splitmix64::

    x ^= x >> 12;  x ^= x << 25;  x ^= x >> 27   (mod 2**64)
    out = x * 0x2545F4914F6CDD1D                  (mod 2**64)

Named substreams are derived from the engine seed so that independent
processes (legit traffic per host, spoofing per bot, PPM) keep identical
draws when unrelated parts of a scenario change.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .errors import EngineFinished

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for b in text.encode("utf-8"):
        h ^= b
        h = (h * 0x100000001B3) & MASK64
    return h


class Rng:
    """xorshift64* generator. Same seed gives the same sequence everywhere."""

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        state = splitmix64(self.seed)
        self._state = state or 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self._state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self._state = x
        return (x * 0x2545F4914F6CDD1D) & MASK64

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("n must be positive")
        limit = ((1 << 64) // n) * n
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def bernoulli(self, p: float) -> bool:
        if p >= 1.0:
            return True
        if p <= 0.0:
            return False
        return self.random() < p

    def choice(self, seq):
        return seq[self.randbelow(len(seq))]

    def poisson(self, lam: float) -> int:
        # Knuth's product method, split into chunks so exp(-lam) never underflows.
        if lam <= 0:
            return 0
        total = 0
        while lam > 0:
            chunk = min(lam, 16.0)
            lam -= chunk
            limit = math.exp(-chunk)
            k, p = 0, self.random()
            while p > limit:
                k += 1
                p *= self.random()
            total += k
        return total

    def spawn(self, name: str) -> "Rng":
        return Rng(splitmix64(self.seed ^ fnv1a64(name)))


@dataclass
class PacketArrival:
    packet: Any
    via_link: Optional[int] = None
    kind: str = "packet"


@dataclass
class TimerFire:
    name: str
    action: Callable[[], None]
    kind: str = "timer"


@dataclass
class ControlMessage:
    kind: str
    body: Any = None
    sender: Optional[str] = None


@dataclass(order=True)
class Event:
    fire_at: int
    seq: int
    target: str = field(compare=False)
    payload: Any = field(compare=False)


@dataclass
class RunSummary:
    events_dispatched: int
    final_time: int


class Engine:
    """Single-threaded event loop.

    Handlers are registered per payload kind; ``TimerFire`` payloads run
    their own action. Every dispatch is appended to ``trace`` when tracing
    is on, which is what determinism checks compare.
    """

    def __init__(self, seed: int = 0, horizon: Optional[int] = None, record_trace: bool = False):
        self.now = 0
        self.seed = seed
        self.horizon = horizon
        self.rng = Rng(seed)
        self._streams: dict[str, Rng] = {}
        self._queue: list[tuple[int, int, Event]] = []
        self._seq = 0
        self._handlers: dict[str, Callable[[Event], None]] = {}
        self.finished = False
        self.scheduled = 0
        self.dispatched = 0
        self.record_trace = record_trace
        self.trace: list[tuple] = []

    def stream(self, name: str) -> Rng:
        """Named RNG substream derived from the engine seed."""
        rng = self._streams.get(name)
        if rng is None:
            rng = self._streams[name] = self.rng.spawn(name)
        return rng

    def on(self, kind: str, handler: Callable[[Event], None]) -> None:
        self._handlers[kind] = handler

    def schedule(self, delay: int, target: str, payload: Any) -> int:
        if self.finished:
            raise EngineFinished("engine already finished")
        if delay < 0:
            raise ValueError(f"negative delay {delay}")
        self._seq += 1
        at = self.now + delay
        heapq.heappush(self._queue, (at, self._seq, Event(at, self._seq, target, payload)))
        self.scheduled += 1
        return self._seq

    def at(self, when: int, target: str, payload: Any) -> int:
        return self.schedule(max(0, when - self.now), target, payload)

    def call_at(self, when: int, action: Callable[[], None], name: str = "timer", target: str = "") -> int:
        return self.at(when, target, TimerFire(name, action))

    def call_later(self, delay: int, action: Callable[[], None], name: str = "timer", target: str = "") -> int:
        return self.schedule(delay, target, TimerFire(name, action))

    @property
    def pending(self) -> int:
        return len(self._queue)

    def count_pending(self, payload_type: type) -> int:
        return sum(1 for _, _, ev in self._queue if isinstance(ev.payload, payload_type))

    def pending_events(self) -> list[Event]:
        return [ev for _, _, ev in sorted(self._queue)]

    def run(self, until: int) -> RunSummary:
        if until < self.now:
            raise ValueError(f"until={until} is before the clock ({self.now})")
        if self.horizon is not None:
            until = min(until, self.horizon)
        count = 0
        queue = self._queue
        while queue and queue[0][0] <= until:
            ev = heapq.heappop(queue)[2]
            self.now = ev.fire_at
            self._dispatch(ev)
            count += 1
        self.now = until
        self.dispatched += count
        return RunSummary(count, self.now)

    def finish(self) -> None:
        self.finished = True

    def _dispatch(self, ev: Event) -> None:
        payload = ev.payload
        if self.record_trace:
            self.trace.append((ev.fire_at, ev.seq, ev.target, payload.kind))
        if isinstance(payload, TimerFire):
            payload.action()
            return
        handler = self._handlers.get(payload.kind)
        if handler is None:
            raise KeyError(f"no handler for event kind {payload.kind!r}")
        handler(ev)

"""Deterministic discrete-event core: virtual clock, event queue, named RNG streams.

Events are totally ordered by (fire_time, seq), where seq is the global
insertion counter. Ties in fire_time therefore resolve in scheduling order,
which keeps runs reproducible regardless of payload type.
"""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass
from typing import Callable

import numpy as np


class PastTimeError(ValueError):
    """Raised when an event is scheduled before the current clock."""


@dataclass
class RunStats:
    events_processed: int
    clock: float


class RngStream:
    """A named, reproducible random stream derived from the master seed.

    Two streams with distinct names are statistically independent; the same
    (master seed, name) pair always reproduces the same sequence from the
    start. Hold on to the handle: requesting the same name again returns a
    fresh stream rewound to the beginning.
    """

    def __init__(self, name: str, master_seed: int):
        self.name = name
        self.seed = master_seed
        digest = hashlib.sha256(name.encode("utf-8")).digest()
        spawn_key = tuple(int.from_bytes(digest[i : i + 4], "big") for i in range(0, 16, 4))
        seq = np.random.SeedSequence(entropy=master_seed, spawn_key=spawn_key)
        self.gen = np.random.Generator(np.random.PCG64(seq))

    def random(self, size=None):
        return self.gen.random(size)

    def uniform(self, low: float, high: float, size=None):
        return self.gen.uniform(low, high, size)

    def normal(self, loc: float, scale: float, size=None):
        return self.gen.normal(loc, scale, size)

    def exponential(self, scale: float, size=None):
        return self.gen.exponential(scale, size)

    def integers(self, low: int, high: int, size=None):
        return self.gen.integers(low, high, size=size)


class SimKernel:
    """Single-threaded virtual-time engine.

    One kernel instance owns the clock and the queue; independent instances
    (e.g. sweep members) share nothing and may run in parallel processes.
    """

    def __init__(self, master_seed: int = 0):
        self.master_seed = master_seed
        self.clock = 0.0
        self._heap: list[tuple[float, int, int]] = []
        self._seq = 0
        self._next_id = 0
        self._pending: dict[int, tuple[str, Callable[[], None]]] = {}
        self.events_processed = 0

    def rng(self, stream_name: str) -> RngStream:
        return RngStream(stream_name, self.master_seed)

    def schedule(self, fire_time: float, action: Callable[[], None], label: str = "") -> int:
        if fire_time < self.clock:
            raise PastTimeError(f"cannot schedule {label!r} at {fire_time} (clock {self.clock})")
        event_id = self._next_id
        self._next_id += 1
        heapq.heappush(self._heap, (fire_time, self._seq, event_id))
        self._seq += 1
        self._pending[event_id] = (label, action)
        return event_id

    def cancel(self, event_id: int) -> bool:
        # Lazy deletion: the heap entry stays and is skipped when popped.
        return self._pending.pop(event_id, None) is not None

    def every(self, period: float, action: Callable[[], None], label: str = "", start: float | None = None) -> int:
        """Schedule a self-rescheduling periodic event; returns the first id."""

        def tick():
            action()
            self.schedule(self.clock + period, tick, label)

        first = self.clock + period if start is None else start
        return self.schedule(first, tick, label)

    def run_until(self, t_end: float) -> RunStats:
        if t_end < self.clock:
            raise PastTimeError(f"run_until({t_end}) is before clock {self.clock}")
        processed = 0
        heap = self._heap
        pending = self._pending
        while heap and heap[0][0] <= t_end:
            fire_time, _seq, event_id = heapq.heappop(heap)
            entry = pending.pop(event_id, None)
            if entry is None:
                continue  # cancelled
            self.clock = fire_time
            entry[1]()
            processed += 1
        self.clock = t_end
        self.events_processed += processed
        return RunStats(events_processed=processed, clock=self.clock)

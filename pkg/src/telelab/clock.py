"""Monotonic clocks and delayed-callback schedulers.

All platform components take time as microseconds since platform start so
that tests can substitute a virtual clock and drive delays, watchdog windows
and session expiry deterministically without sleeping.
"""

from __future__ import annotations

import heapq
import itertools
import threading
import time
from typing import Callable, Protocol


class Clock(Protocol):
    def now_us(self) -> int: ...


class Scheduler(Protocol):
    def call_at(self, due_us: int, fn: Callable[[], None]) -> None: ...


class WallClock:
    """Microseconds since construction, monotonic."""

    def __init__(self) -> None:
        self._t0 = time.monotonic()

    def now_us(self) -> int:
        return int((time.monotonic() - self._t0) * 1_000_000)


class ThreadScheduler:
    """Runs callbacks at wall-clock deadlines on a single worker thread.

    Callbacks with equal deadlines run in submission order.
    """

    def __init__(self, clock: WallClock) -> None:
        self._clock = clock
        self._heap: list[tuple[int, int, Callable[[], None]]] = []
        self._seq = itertools.count()
        self._cv = threading.Condition()
        self._closed = False
        self._thread = threading.Thread(target=self._run, name="scheduler", daemon=True)
        self._thread.start()

    def call_at(self, due_us: int, fn: Callable[[], None]) -> None:
        with self._cv:
            heapq.heappush(self._heap, (due_us, next(self._seq), fn))
            self._cv.notify()

    def close(self) -> None:
        with self._cv:
            self._closed = True
            self._cv.notify()
        self._thread.join(timeout=2.0)

    def _run(self) -> None:
        while True:
            with self._cv:
                while not self._closed and (
                    not self._heap or self._heap[0][0] > self._clock.now_us()
                ):
                    if self._heap:
                        wait_s = (self._heap[0][0] - self._clock.now_us()) / 1e6
                        self._cv.wait(timeout=max(wait_s, 0.0))
                    else:
                        self._cv.wait()
                if self._closed:
                    return
                _, _, fn = heapq.heappop(self._heap)
            try:
                fn()
            except Exception:  # a callback failure must not kill the scheduler
                pass


class VirtualClock:
    """Manually advanced clock; due callbacks fire during advance().

    Deterministic: callbacks run in (deadline, submission) order, and the
    clock reads exactly the callback's deadline while it runs.
    """

    def __init__(self, start_us: int = 0) -> None:
        self._now = start_us
        self._heap: list[tuple[int, int, Callable[[], None]]] = []
        self._seq = itertools.count()
        self._lock = threading.RLock()

    def now_us(self) -> int:
        with self._lock:
            return self._now

    def call_at(self, due_us: int, fn: Callable[[], None]) -> None:
        with self._lock:
            if due_us <= self._now:
                due_us = self._now
            heapq.heappush(self._heap, (due_us, next(self._seq), fn))

    def advance_to(self, target_us: int) -> None:
        while True:
            with self._lock:
                if not self._heap or self._heap[0][0] > target_us:
                    self._now = max(self._now, target_us)
                    return
                due, _, fn = heapq.heappop(self._heap)
                self._now = max(self._now, due)
            fn()

    def advance(self, delta_us: int) -> None:
        self.advance_to(self.now_us() + delta_us)

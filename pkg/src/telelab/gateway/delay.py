"""Order-preserving delayed delivery.

Jittered delays can reorder messages; making each topic's due time monotone
keeps per-topic FIFO while the sampled delays still hit the configured mean.
"""

from __future__ import annotations

import threading
from typing import Callable

from telelab.clock import Clock, Scheduler


class DelayLine:
    def __init__(self, clock: Clock, scheduler: Scheduler) -> None:
        self._clock = clock
        self._scheduler = scheduler
        self._last_due: dict[str, int] = {}
        self._lock = threading.Lock()

    def send(self, topic: str, delay_us: int, fn: Callable[[], None]) -> int:
        """Run fn after delay_us, never before an earlier send on the same topic.

        Returns the scheduled due time. Zero-delay sends with no pending
        predecessor run synchronously.
        """
        with self._lock:
            now = self._clock.now_us()
            due = max(now + max(int(delay_us), 0), self._last_due.get(topic, 0))
            self._last_due[topic] = due
            immediate = due <= now
        if immediate:
            fn()
        else:
            self._scheduler.call_at(due, fn)
        return due

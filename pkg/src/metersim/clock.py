"""Clock abstraction so every component can run on wall or simulated time."""

from __future__ import annotations

import time
from abc import ABC, abstractmethod


class Clock(ABC):
    """Source of the current time in seconds since an arbitrary epoch."""

    @abstractmethod
    def now(self) -> float:
        """Current time in seconds."""

    def now_ms(self) -> int:
        """Current time in whole milliseconds."""
        return round(self.now() * 1000.0)

    @abstractmethod
    def sleep(self, duration: float) -> None:
        """Block for ``duration`` seconds (no-op under simulation)."""


class SystemClock(Clock):
    """Wall-clock time (Unix epoch)."""

    def now(self) -> float:
        return time.time()

    def sleep(self, duration: float) -> None:
        if duration > 0:
            time.sleep(duration)


class SimulatedClock(Clock):
    """Manually advanced clock for deterministic accelerated runs."""

    def __init__(self, start: float = 0.0):
        if start < 0:
            raise ValueError("simulated clock must start at a non-negative time")
        self._now = float(start)

    def now(self) -> float:
        return self._now

    def advance(self, duration: float) -> float:
        """Move time forward by ``duration`` seconds and return the new time."""
        if duration < 0:
            raise ValueError("cannot advance a clock backwards")
        self._now += duration
        return self._now

    def sleep(self, duration: float) -> None:
        # Sleeping under simulation advances time instead of blocking.
        if duration < 0:
            raise ValueError("cannot sleep for a negative duration")
        self._now += duration

"""Injectable time sources.

Every interval in the fleet derives from one clock, so a scaled clock
compresses a simulated hour into seconds while keeping all schedules
consistent. ``now()`` is in simulated seconds; ``real_delay()`` converts a
simulated duration into the wall-clock seconds a runner should actually
wait.
"""

from __future__ import annotations

import time
from typing import Protocol


class Clock(Protocol):
    def now(self) -> float: ...

    def real_delay(self, sim_seconds: float) -> float: ...


class SystemClock:
    """Wall-clock time, starting at zero."""

    def __init__(self):
        self._t0 = time.monotonic()

    def now(self) -> float:
        return time.monotonic() - self._t0

    def real_delay(self, sim_seconds: float) -> float:
        return max(sim_seconds, 0.0)


class ScaledClock:
    """Simulated time running ``scale`` times faster than the wall clock."""

    def __init__(self, scale: float = 1.0):
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.scale = scale
        self._t0 = time.monotonic()

    def now(self) -> float:
        return (time.monotonic() - self._t0) * self.scale

    def real_delay(self, sim_seconds: float) -> float:
        return max(sim_seconds / self.scale, 0.0)


class ManualClock:
    """Explicitly stepped time for deterministic unit tests."""

    def __init__(self, start: float = 0.0):
        self._now = start

    def now(self) -> float:
        return self._now

    def advance(self, sim_seconds: float) -> float:
        self._now += sim_seconds
        return self._now

    def set(self, sim_time: float) -> None:
        if sim_time < self._now:
            raise ValueError("manual clock cannot move backwards")
        self._now = sim_time

    def real_delay(self, sim_seconds: float) -> float:
        return 0.0

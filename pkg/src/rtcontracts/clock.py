"""Monotonic time sources for the cycle executor.

All kernel timing runs on integer nanoseconds.  The real clock wraps
time.monotonic_ns with a sleep-then-spin wait so cycle boundaries land
within tens of microseconds; the virtual clock is fully manual, which
makes real-time behavior (periods, slack, deadlines) deterministic in
tests and fault drills.
"""

from __future__ import annotations

import time

# plain sleep overshoots by ~100us; spin the final stretch instead
_SPIN_NS = 200_000


class MonotonicClock:
    def now(self) -> int:
        return time.monotonic_ns()

    def sleep_until(self, deadline_ns: int) -> int:
        while True:
            now = time.monotonic_ns()
            remaining = deadline_ns - now
            if remaining <= 0:
                return now
            if remaining > _SPIN_NS:
                time.sleep((remaining - _SPIN_NS) / 1e9)
            # otherwise spin down the residual

    def advance(self, ns: int) -> None:
        """Burn wall time; lets fault drills run on the real clock too."""
        deadline = time.monotonic_ns() + ns
        self.sleep_until(deadline)


class VirtualClock:
    """Manually advanced clock; sleeping jumps straight to the deadline."""

    def __init__(self, start_ns: int = 0):
        self._now = start_ns

    def now(self) -> int:
        return self._now

    def sleep_until(self, deadline_ns: int) -> int:
        if deadline_ns > self._now:
            self._now = deadline_ns
        return self._now

    def advance(self, ns: int) -> None:
        if ns < 0:
            raise ValueError("clock cannot move backwards")
        self._now += ns

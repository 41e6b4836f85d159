"""Wall-clock accounting of fit/predict stages."""

from __future__ import annotations

import time
from contextlib import contextmanager
from typing import Callable


class Stopwatch:
    """Accumulates monotonic wall time over any number of ``with`` blocks."""

    def __init__(self):
        self.ns = 0

    @contextmanager
    def running(self):
        t0 = time.perf_counter_ns()
        try:
            yield self
        finally:
            self.ns += time.perf_counter_ns() - t0

    @property
    def ms(self) -> float:
        return self.ns / 1e6


def measure_epsilon(action: Callable[[], object]) -> float:
    """Milliseconds spent running ``action``."""
    sw = Stopwatch()
    with sw.running():
        action()
    return sw.ms

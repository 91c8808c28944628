"""Wall-clock instrumentation of the step phases.

Sections nest strictly (LIFO, asserted); communication time is accumulated
separately by the exchange layer through ``add_comm`` and therefore also
lands inside whichever phase is open, mirroring how the totals in the
timing report treat it.
"""

from __future__ import annotations

import time
from contextlib import contextmanager

PHASE_KEYS = ("total", "ls", "cd", "p", "up")


class Profiler:
    def __init__(self):
        self.sections: dict[str, float] = {}
        self.comm_time = 0.0
        self._stack: list[tuple[str, float]] = []

    def reset(self):
        self.sections = {}
        self.comm_time = 0.0
        if self._stack:
            raise RuntimeError("profiler reset inside an open section")

    @contextmanager
    def section(self, name: str):
        self._stack.append((name, time.perf_counter()))
        try:
            yield
        finally:
            top, t0 = self._stack.pop()
            if top != name:
                raise RuntimeError(
                    f"profiler sections closed out of order: {top} != {name}")
            self.sections[name] = self.sections.get(name, 0.0) \
                + time.perf_counter() - t0

    def add_comm(self, dt: float):
        self.comm_time += dt

    def snapshot(self) -> dict:
        out = {key: self.sections.get(key, 0.0) for key in PHASE_KEYS}
        out["comm"] = self.comm_time
        return out


class NullProfiler:
    """Timer stand-in for non-master ranks; keeps call sites branch-free."""

    @contextmanager
    def section(self, name):
        yield

    def add_comm(self, dt):
        pass

    def reset(self):
        pass

    def snapshot(self):
        return {key: 0.0 for key in PHASE_KEYS} | {"comm": 0.0}

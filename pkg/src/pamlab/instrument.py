"""Counters for native floating point arithmetic.

Every native multiply, divide, square root (and exp/log) that the package
performs on data goes through :mod:`pamlab.native`, which calls
:func:`record`. Piecewise affine code paths never call it, so a run that
is truly multiplication-free reports zero ops outside the setup phase.

Counters live in thread-local storage; :func:`merged` adds up all threads.
"""
from __future__ import annotations

import threading
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass

# Phases whose ops are allowed in a multiplication-free run: parameter
# initialisation and host-side learning-rate schedules happen before/outside
# the training arithmetic; "reference" is verification code computing the
# exact function a PA op approximates.
SETUP = "setup"
SCHEDULE = "schedule"
REFERENCE = "reference"
TRAIN = "train"
EXEMPT_PHASES = frozenset({SETUP, SCHEDULE, REFERENCE})

_local = threading.local()
_registry: list[Counter] = []
_registry_lock = threading.Lock()


def _counter() -> Counter:
    c = getattr(_local, "counter", None)
    if c is None:
        c = Counter()
        _local.counter = c
        with _registry_lock:
            _registry.append(c)
    return c


def current_phase() -> str:
    return getattr(_local, "phase", TRAIN)


def record(kind: str, n: int = 1) -> None:
    _counter()[(current_phase(), kind)] += int(n)


@contextmanager
def phase(name: str):
    """Attribute native ops recorded inside the block to ``name``."""
    prev = current_phase()
    _local.phase = name
    try:
        yield
    finally:
        _local.phase = prev


@dataclass
class OpReport:
    counts: Counter

    def total(self, include_exempt: bool = False) -> int:
        return sum(n for (ph, _), n in self.counts.items()
                   if include_exempt or ph not in EXEMPT_PHASES)

    def by_phase(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for (ph, _), n in self.counts.items():
            out[ph] = out.get(ph, 0) + n
        return out

    def by_kind(self, phase_name: str | None = None) -> dict[str, int]:
        out: dict[str, int] = {}
        for (ph, kind), n in self.counts.items():
            if phase_name is None or ph == phase_name:
                out[kind] = out.get(kind, 0) + n
        return out


def snapshot() -> Counter:
    return Counter(_counter())


def since(before: Counter) -> OpReport:
    """Ops this thread recorded after ``before`` was taken with :func:`snapshot`."""
    after = snapshot()
    after.subtract(before)
    return OpReport(Counter({k: v for k, v in after.items() if v}))


def merged() -> OpReport:
    """Sum of the counters of every thread that has recorded something."""
    total: Counter = Counter()
    with _registry_lock:
        for c in _registry:
            total.update(c)
    return OpReport(total)


@contextmanager
def counting():
    """Collect the native ops this thread performs inside the block.

    >>> with counting() as rep:
    ...     pass
    >>> rep.total()
    0
    """
    before = snapshot()
    rep = OpReport(Counter())
    try:
        yield rep
    finally:
        rep.counts.update(since(before).counts)

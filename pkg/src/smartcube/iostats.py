"""Process-wide I/O counters used for instrumentation and metrics.

Counters are global and lock-protected.  In addition, a per-task meter can be
bound through a context variable so the executor can attribute bytes to the
task that read them, even when several tasks run on different threads.
"""

from __future__ import annotations

import contextlib
import contextvars
import threading
from collections import Counter
from collections.abc import Iterator

_lock = threading.Lock()
_totals: Counter[str] = Counter()
_meter: contextvars.ContextVar[Counter[str] | None] = contextvars.ContextVar(
    "smartcube_meter", default=None
)

ASSET_BYTES = "asset_bytes_read"
CHUNKS_MATERIALIZED = "chunks_materialized"
CHUNK_READS = "chunk_reads"
CHUNK_WRITES = "chunk_writes"


def record(name: str, amount: int = 1) -> None:
    with _lock:
        _totals[name] += amount
    meter = _meter.get()
    if meter is not None:
        meter[name] += amount


def snapshot() -> dict[str, int]:
    with _lock:
        return dict(_totals)


def delta(before: dict[str, int], name: str) -> int:
    return snapshot().get(name, 0) - before.get(name, 0)


@contextlib.contextmanager
def metered() -> Iterator[Counter[str]]:
    """Collect counters recorded by the current context into a fresh Counter."""
    meter: Counter[str] = Counter()
    token = _meter.set(meter)
    try:
        yield meter
    finally:
        _meter.reset(token)

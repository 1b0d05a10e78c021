"""Content-addressed task graphs and a deterministic worker-pool executor.

Task ids are SHA-256 over the canonical JSON encoding of
``{"op": op_kind, "params": params, "deps": sorted(dep_ids)}`` (keys sorted,
no whitespace, UTF-8).  Identical specs therefore collapse to one node, and a
dependency must exist before a dependent can be added, so cycles cannot form.

Registered operations are pure functions ``fn(params, deps)`` where ``deps``
maps dependency id to that dependency's result.
"""

from __future__ import annotations

import contextvars
import hashlib
import json
import logging
import threading
import time
from collections.abc import Callable, Iterable, Mapping
from concurrent.futures import FIRST_COMPLETED, Future, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Any

from . import iostats
from .errors import ConfigError, TaskError

log = logging.getLogger(__name__)

OpFn = Callable[[Mapping[str, Any], Mapping[str, Any]], Any]

_REGISTRY: dict[str, OpFn] = {}


def register(name: str) -> Callable[[OpFn], OpFn]:
    """Decorator registering a pure task operation under ``name``."""

    def deco(fn: OpFn) -> OpFn:
        if name in _REGISTRY and _REGISTRY[name] is not fn:
            raise ConfigError(f"operation {name!r} already registered")
        _REGISTRY[name] = fn
        return fn

    return deco


def registered(name: str) -> bool:
    return name in _REGISTRY


def canonical_json(value: Any) -> bytes:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False).encode()


def task_id(op_kind: str, params: Mapping[str, Any], deps: Iterable[str]) -> str:
    doc = {"op": op_kind, "params": params, "deps": sorted(deps)}
    return hashlib.sha256(canonical_json(doc)).hexdigest()


@dataclass(frozen=True)
class TaskSpec:
    op_kind: str
    params: Mapping[str, Any]
    deps: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "deps", tuple(sorted(set(self.deps))))
        # canonicalize now so id computation and later mutation of the caller's dict can't diverge
        object.__setattr__(self, "params", json.loads(canonical_json(dict(self.params))))

    @property
    def id(self) -> str:
        return task_id(self.op_kind, self.params, self.deps)


@dataclass
class TaskGraph:
    nodes: dict[str, TaskSpec] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, tid: object) -> bool:
        return tid in self.nodes

    def add(self, op_kind: str, params: Mapping[str, Any], deps: Iterable[str] = ()) -> str:
        return add_task(self, TaskSpec(op_kind, params, tuple(deps)))

    def ids_by_op(self, op_kind: str) -> list[str]:
        return sorted(tid for tid, spec in self.nodes.items() if spec.op_kind == op_kind)

    def dependents(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {tid: [] for tid in self.nodes}
        for tid, spec in self.nodes.items():
            for dep in spec.deps:
                out[dep].append(tid)
        return out


def add_task(graph: TaskGraph, spec: TaskSpec) -> str:
    """Insert ``spec``; returns its id.  Re-adding an identical spec is a no-op."""
    if spec.op_kind not in _REGISTRY:
        raise ConfigError(f"unregistered operation {spec.op_kind!r}")
    missing = [d for d in spec.deps if d not in graph.nodes]
    if missing:
        raise ConfigError(f"unknown dependency id(s): {', '.join(m[:16] for m in missing)}")
    tid = spec.id
    graph.nodes.setdefault(tid, spec)
    return tid


def schedule(graph: TaskGraph) -> list[list[str]]:
    """Topological layers; each task sits one layer after its deepest dependency."""
    indegree = {tid: len(spec.deps) for tid, spec in graph.nodes.items()}
    children = graph.dependents()
    depth = {tid: 0 for tid, n in indegree.items() if n == 0}
    frontier = list(depth)
    while frontier:
        tid = frontier.pop()
        for child in children[tid]:
            depth[child] = max(depth.get(child, 0), depth[tid] + 1)
            indegree[child] -= 1
            if indegree[child] == 0:
                frontier.append(child)
    if len(depth) != len(graph.nodes) or any(indegree.values()):  # unreachable through add_task
        raise ConfigError("task graph is not acyclic")
    layers: list[list[str]] = [[] for _ in range(max(depth.values(), default=-1) + 1)]
    for tid, d in depth.items():
        layers[d].append(tid)
    for layer in layers:
        layer.sort()
    return layers


@dataclass
class ExecReport:
    status: dict[str, str] = field(default_factory=dict)  # ok | failed | skipped
    duration: dict[str, float] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)
    exceptions: dict[str, BaseException] = field(default_factory=dict, repr=False, compare=False)
    attempts: dict[str, int] = field(default_factory=dict)
    workers: int = 0
    tasks_completed: int = 0
    tasks_failed: int = 0
    bytes_read: int = 0

    @property
    def tasks_skipped(self) -> int:
        return sum(1 for s in self.status.values() if s == "skipped")

    @property
    def ok(self) -> bool:
        return self.tasks_failed == 0 and self.tasks_skipped == 0

    def merge(self, other: ExecReport) -> ExecReport:
        return ExecReport(
            status={**self.status, **other.status},
            duration={**self.duration, **other.duration},
            errors={**self.errors, **other.errors},
            exceptions={**self.exceptions, **other.exceptions},
            attempts={**self.attempts, **other.attempts},
            workers=max(self.workers, other.workers),
            tasks_completed=self.tasks_completed + other.tasks_completed,
            tasks_failed=self.tasks_failed + other.tasks_failed,
            bytes_read=self.bytes_read + other.bytes_read,
        )

    def raise_for_failure(self) -> None:
        """Raise the first failure (lowest task id) as a TaskError chained to the op's error."""
        for tid in sorted(self.errors):
            cause = self.exceptions.get(tid) or RuntimeError(self.errors[tid])
            raise TaskError(tid, cause) from cause


def _run_task(fn: OpFn, spec: TaskSpec, deps: Mapping[str, Any], retries: int) -> tuple[Any, int, int, float]:
    start = time.perf_counter()
    attempts = 0
    with iostats.metered() as meter:
        while True:
            attempts += 1
            try:
                result = fn(spec.params, deps)
                break
            except Exception:
                if attempts > retries:
                    raise
    return result, attempts, meter[iostats.ASSET_BYTES], time.perf_counter() - start


def execute(
    graph: TaskGraph,
    workers: int = 1,
    retries: int = 0,
    progress: Callable[[int, int], None] | None = None,
) -> tuple[dict[str, Any], ExecReport]:
    """Run every task; returns ``(results, report)``.

    Tasks are dispatched layer by layer in ascending id order and run on up to
    ``workers`` threads.  A failing task marks all of its transitive dependents
    as skipped; independent branches still complete.  Results never depend on
    ``workers``, given pure operations.
    """
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    if retries < 0:
        raise ConfigError(f"retries must be >= 0, got {retries}")
    missing = sorted({spec.op_kind for spec in graph.nodes.values()} - _REGISTRY.keys())
    if missing:
        raise ConfigError(f"unregistered operation(s): {', '.join(missing)}")

    report = ExecReport(workers=workers)
    results: dict[str, Any] = {}
    lock = threading.Lock()
    layers = schedule(graph)

    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="smartcube") as pool:
        for li, layer in enumerate(layers):
            futures: dict[Future, str] = {}
            for tid in layer:
                spec = graph.nodes[tid]
                if any(report.status.get(d) != "ok" for d in spec.deps):
                    report.status[tid] = "skipped"
                    report.duration[tid] = 0.0
                    report.attempts[tid] = 0
                    continue
                deps = {d: results[d] for d in spec.deps}
                ctx = contextvars.copy_context()
                fut = pool.submit(ctx.run, _run_task, _REGISTRY[spec.op_kind], spec, deps, retries)
                futures[fut] = tid
            pending = set(futures)
            while pending:
                done, pending = wait(pending, return_when=FIRST_COMPLETED)
                for fut in done:
                    tid = futures[fut]
                    try:
                        result, attempts, nbytes, elapsed = fut.result()
                    except Exception as exc:  # noqa: BLE001 - surfaced in the report
                        with lock:
                            report.status[tid] = "failed"
                            report.errors[tid] = f"{type(exc).__name__}: {exc}"
                            report.exceptions[tid] = exc
                            report.attempts[tid] = retries + 1
                            report.duration[tid] = 0.0
                            report.tasks_failed += 1
                        log.warning("task %s (%s) failed: %s", tid[:16], graph.nodes[tid].op_kind, exc)
                        continue
                    with lock:
                        results[tid] = result
                        report.status[tid] = "ok"
                        report.attempts[tid] = attempts
                        report.duration[tid] = elapsed
                        report.tasks_completed += 1
                        report.bytes_read += nbytes
            if progress is not None:
                progress(li + 1, len(layers))
    return results, report


_METRICS = (
    ("smartcube_tasks_completed_total", "counter", "Tasks that finished successfully.", "tasks_completed"),
    ("smartcube_tasks_failed_total", "counter", "Tasks that raised after all retries.", "tasks_failed"),
    ("smartcube_bytes_read_total", "counter", "Asset payload bytes read by tasks.", "bytes_read"),
    ("smartcube_workers", "gauge", "Worker lanes used by the executor.", "workers"),
)


def metrics_text(report: ExecReport | None = None) -> str:
    """Render ``report`` counters in Prometheus text exposition format 0.0.4."""
    report = report if report is not None else ExecReport()
    lines = []
    for name, kind, help_text, attr in _METRICS:
        lines.append(f"# HELP {name} {help_text}")
        lines.append(f"# TYPE {name} {kind}")
        lines.append(f"{name} {int(getattr(report, attr))}")
    return "\n".join(lines) + "\n"

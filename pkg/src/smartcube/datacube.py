"""Lazy 4-D (time, band, y, x) datacubes planned from STAC search results.

Planning records where every frame/band comes from and emits a task graph;
pixels are only read when tasks run or a window is requested.  One cube frame
corresponds to one item, ordered by (datetime, id).

Quality masks are u8 bitfields: bit 0 marks invalid/artifact pixels, bit 1
marks cloud.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

from . import iostats
from .errors import (
    AllFramesFilteredError,
    ConfigError,
    DataError,
    NoFramesError,
)
from .geo import GridSpec, numpy_dtype, read_sgr, resample_window
from .graph import ExecReport, TaskGraph, execute, register
from .stac import StacItem
from .store import (
    CubeSchema,
    CubeStore,
    finalize_store,
    open_store,
    prepare_store,
    write_chunk,
)

log = logging.getLogger(__name__)

INVALID_BIT = 0b01
CLOUD_BIT = 0b10
DEFAULT_MAX_CLOUD = 0.5
DEFAULT_MIN_VALID = 0.25
DEFAULT_NODATA = {"u8": 255.0, "u16": 0.0, "f32": -9999.0}

__all__ = [
    "FrameQuality",
    "LazyCube",
    "plan_cube",
    "build_graph",
    "read_window",
    "quality_plan",
    "frame_quality",
    "filter_frames",
    "write_store",
    "open_store",
]


@dataclass(frozen=True)
class FrameQuality:
    valid_fraction: float
    cloud_fraction: float

    @classmethod
    def from_counts(cls, total: int, valid: int, cloudy: int) -> FrameQuality:
        vf = valid / total if total else 0.0
        cf = cloudy / valid if valid else 0.0
        return cls(vf, cf)


@dataclass(frozen=True)
class LazyCube:
    """Deferred cube: schema plus, per frame, where each band and its quality mask live."""

    schema: CubeSchema
    sources: tuple[Mapping[str, tuple[str, str]], ...]  # band -> (asset locator, method)
    quality_sources: tuple[str | None, ...]
    mask_quality: bool = True
    dropped: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        n = len(self.schema.frames)
        if len(self.sources) != n or len(self.quality_sources) != n:
            raise ConfigError("sources must align with frames")
        for (_, item_id), src in zip(self.schema.frames, self.sources):
            missing = set(self.schema.bands) - set(src)
            if missing:
                raise ConfigError(f"frame {item_id} lacks bands {sorted(missing)}")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.schema.shape

    def select(self, keep: Sequence[int]) -> LazyCube:
        return LazyCube(
            schema=self.schema.with_frames([self.schema.frames[i] for i in keep]),
            sources=tuple(self.sources[i] for i in keep),
            quality_sources=tuple(self.quality_sources[i] for i in keep),
            mask_quality=self.mask_quality,
            dropped=self.dropped,
        )


def _spatial_windows(schema: CubeSchema) -> list[tuple[int, int, tuple[int, int, int, int]]]:
    _, _, cy, cx = schema.chunk
    ny, nx = schema.chunk_counts[2:]
    out = []
    for yi in range(ny):
        for xi in range(nx):
            r0, c0 = yi * cy, xi * cx
            out.append((yi, xi, (r0, min(r0 + cy, schema.grid.height), c0, min(c0 + cx, schema.grid.width))))
    return out


def _to_cube_dtype(values: np.ndarray, ok: np.ndarray, dtype: str, nodata: float) -> np.ndarray:
    dt = numpy_dtype(dtype)
    if dt.kind == "u" and values.dtype.kind == "f":
        info = np.iinfo(dt)
        values = np.clip(np.rint(np.where(ok, values, 0.0)), info.min, info.max)
    out = values.astype(dt)
    out[~ok] = dt.type(nodata)
    return out


def _read_mask_window(href: str, grid: GridSpec, window: tuple[int, int, int, int]) -> tuple[np.ndarray, np.ndarray]:
    raster = read_sgr(href)
    if raster.dtype != "u8":
        raise DataError(f"{href}: quality mask must be u8, got {raster.dtype}")
    values, ok = resample_window(raster, grid, "nearest", window)
    return values[0], ok[0]


def load_resampled(params: Mapping[str, Any]) -> np.ndarray:
    """Load one asset and resample it onto a window of the cube grid, in cube dtype."""
    grid = GridSpec.from_dict(params["grid"])
    window = tuple(params["window"])
    raster = read_sgr(params["href"])
    values, ok = resample_window(raster, grid, params["method"], window)  # type: ignore[arg-type]
    values, ok = values[0], ok[0]
    if params.get("quality"):
        qv, qok = _read_mask_window(params["quality"], grid, window)  # type: ignore[arg-type]
        ok = ok & qok & ((qv & (INVALID_BIT | CLOUD_BIT)) == 0)
    iostats.record(iostats.CHUNKS_MATERIALIZED)
    return _to_cube_dtype(values, ok, params["dtype"], params["nodata"])


@register("load_resample")
def _op_load_resample(params: Mapping[str, Any], deps: Mapping[str, Any]) -> tuple[int, int, np.ndarray]:
    return params["t"], params["b"], load_resampled(params)


@register("write_chunk")
def _op_write_chunk(params: Mapping[str, Any], deps: Mapping[str, Any]) -> dict[str, Any]:
    t0, b0 = params["origin"]
    block = np.empty(params["shape"], dtype=numpy_dtype(params["dtype"]))
    filled = np.zeros(block.shape[:2], dtype=bool)
    for t, b, values in deps.values():
        block[t - t0, b - b0] = values
        filled[t - t0, b - b0] = True
    if not filled.all():
        raise DataError(f"chunk {params['chunk']} assembled from incomplete inputs")
    written = write_chunk(params["path"], tuple(params["chunk"]), block)  # type: ignore[arg-type]
    return {"chunk": params["chunk"], "written": written}


def plan_cube(
    items: Sequence[StacItem],
    grid: GridSpec,
    bands: Sequence[str],
    chunk: Sequence[int],
    out: str | None = None,
    *,
    method: str = "nearest",
    dtype: str | None = None,
    nodata: float | None = None,
    mask_quality: bool = True,
) -> tuple[LazyCube, TaskGraph]:
    """Plan a lazy cube over ``items`` on ``grid``; no pixels are read.

    Items lacking any requested band are dropped (ids kept in
    ``cube.dropped``).  The returned graph holds one ``load_resample`` task per
    (frame, band, spatial chunk) and one ``write_chunk`` task per chunk of the
    store at ``out``; without ``out`` the graph is empty.
    """
    if not items:
        raise NoFramesError("no items to plan a cube from")
    bands = tuple(bands)
    if not bands:
        raise ConfigError("at least one band is required")
    if method not in ("nearest", "bilinear"):
        raise ConfigError(f"unknown resampling method {method!r}")
    if dtype is None:
        dtype = "u16" if method == "nearest" else "f32"
    if method == "bilinear" and dtype != "f32":
        raise ConfigError("bilinear resampling requires an f32 cube")
    if nodata is None:
        nodata = DEFAULT_NODATA[dtype]
    for band in bands:
        if not any(band in item.data_bands for item in items):
            raise NoFramesError(f"band {band!r} is missing from every item")

    ordered = sorted(items, key=lambda it: (it.datetime, it.id))
    kept = [it for it in ordered if set(bands) <= it.data_bands]
    dropped = tuple(it.id for it in ordered if not set(bands) <= it.data_bands)
    if dropped:
        log.info("dropping %d item(s) lacking requested bands: %s", len(dropped), ", ".join(dropped))
    if not kept:
        raise NoFramesError("no item carries every requested band")

    schema = CubeSchema(
        frames=tuple((it.datetime, it.id) for it in kept),
        bands=bands,
        grid=grid,
        dtype=dtype,
        nodata=nodata,
        chunk=tuple(chunk),
    )
    cube = LazyCube(
        schema=schema,
        sources=tuple({b: (it.locate(b), method) for b in bands} for it in kept),
        quality_sources=tuple(
            it.locate(it.quality_asset.key) if it.quality_asset is not None else None for it in kept
        ),
        mask_quality=mask_quality,
        dropped=dropped,
    )
    graph = build_graph(cube, out) if out is not None else TaskGraph()
    return cube, graph


def _load_params(cube: LazyCube, t: int, b: int, window: tuple[int, int, int, int]) -> dict[str, Any]:
    schema = cube.schema
    href, method = cube.sources[t][schema.bands[b]]
    return {
        "href": href,
        "method": method,
        "quality": cube.quality_sources[t] if cube.mask_quality else None,
        "grid": schema.grid.to_dict(),
        "window": list(window),
        "t": t,
        "b": b,
        "dtype": schema.dtype,
        "nodata": schema.nodata,
    }


def build_graph(cube: LazyCube, out: str) -> TaskGraph:
    """Load/resample and write tasks materializing ``cube`` into the store at ``out``."""
    schema = cube.schema
    graph = TaskGraph()
    load_ids: dict[tuple[int, int, int, int], str] = {}
    for yi, xi, window in _spatial_windows(schema):
        for t in range(len(schema.frames)):
            for b in range(len(schema.bands)):
                load_ids[t, b, yi, xi] = graph.add("load_resample", _load_params(cube, t, b, window))
    for idx in schema.chunk_indices():
        (t0, t1), (b0, b1), _, _ = schema.chunk_bounds(idx)
        ti, bi, yi, xi = idx
        deps = [load_ids[t, b, yi, xi] for t in range(t0, t1) for b in range(b0, b1)]
        params = {
            "path": out,
            "chunk": list(idx),
            "origin": [t0, b0],
            "shape": list(schema.chunk_shape(idx)),
            "dtype": schema.dtype,
        }
        graph.add("write_chunk", params, deps)
    return graph


def _check_range(name: str, rng: Sequence[int], size: int) -> tuple[int, int]:
    lo, hi = int(rng[0]), int(rng[1])
    if lo >= hi:
        raise ConfigError(f"empty {name} range [{lo}, {hi})")
    if lo < 0 or hi > size:
        raise ConfigError(f"{name} range [{lo}, {hi}) outside [0, {size})")
    return lo, hi


def read_window(
    cube: LazyCube | CubeStore,
    t_range: Sequence[int],
    bands: Sequence[str] | None,
    y_range: Sequence[int],
    x_range: Sequence[int],
) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(values, valid)`` for a (time, band, y, x) window.

    Ranges are half-open ``(start, stop)``.  Only chunks intersecting the window
    are materialized.  ``valid`` is false where values equal the cube nodata.
    """
    schema = cube.schema
    nt, _, ny, nx = schema.shape
    t0, t1 = _check_range("time", t_range, nt)
    y0, y1 = _check_range("y", y_range, ny)
    x0, x1 = _check_range("x", x_range, nx)
    names = list(schema.bands) if bands is None else list(bands)
    if not names:
        raise ConfigError("empty band selection")
    bidx = [schema.band_index(n) for n in names]

    out = np.empty((t1 - t0, len(bidx), y1 - y0, x1 - x0), dtype=schema.np_dtype)
    if isinstance(cube, LazyCube):
        _, _, cy, cx = schema.chunk
        for yi in range(y0 // cy, (y1 - 1) // cy + 1):
            for xi in range(x0 // cx, (x1 - 1) // cx + 1):
                r0, r1 = yi * cy, min((yi + 1) * cy, ny)
                c0, c1 = xi * cx, min((xi + 1) * cx, nx)
                ys, ye = max(r0, y0), min(r1, y1)
                xs, xe = max(c0, x0), min(c1, x1)
                for t in range(t0, t1):
                    for j, b in enumerate(bidx):
                        block = load_resampled(_load_params(cube, t, b, (r0, r1, c0, c1)))
                        out[t - t0, j, ys - y0 : ye - y0, xs - x0 : xe - x0] = block[ys - r0 : ye - r0, xs - c0 : xe - c0]
    else:
        for pos, b in enumerate(bidx):
            for idx in schema.overlapping([(t0, t1), (b, b + 1), (y0, y1), (x0, x1)]):
                (ct0, ct1), (cb0, _), (cy0, cy1), (cx0, cx1) = schema.chunk_bounds(idx)
                block = cube.read_chunk(idx)
                ts, te = max(ct0, t0), min(ct1, t1)
                ys, ye = max(cy0, y0), min(cy1, y1)
                xs, xe = max(cx0, x0), min(cx1, x1)
                out[ts - t0 : te - t0, pos, ys - y0 : ye - y0, xs - x0 : xe - x0] = block[
                    ts - ct0 : te - ct0, b - cb0, ys - cy0 : ye - cy0, xs - cx0 : xe - cx0
                ]
    return out, _valid(out, schema.nodata)


def _valid(values: np.ndarray, nodata: float) -> np.ndarray:
    if math.isnan(nodata):
        return ~np.isnan(values)
    ok = values != values.dtype.type(nodata)
    if values.dtype.kind == "f":
        ok &= ~np.isnan(values)
    return ok


@register("quality_counts")
def _op_quality_counts(params: Mapping[str, Any], deps: Mapping[str, Any]) -> list[int]:
    grid = GridSpec.from_dict(params["grid"])
    qv, qok = _read_mask_window(params["href"], grid, tuple(params["window"]))  # type: ignore[arg-type]
    valid = qok & ((qv & INVALID_BIT) == 0)
    cloudy = valid & ((qv & CLOUD_BIT) != 0)
    return [int(qv.size), int(valid.sum()), int(cloudy.sum())]


@register("quality_reduce")
def _op_quality_reduce(params: Mapping[str, Any], deps: Mapping[str, Any]) -> dict[str, Any]:
    total = valid = cloudy = 0
    for t_, v_, c_ in deps.values():
        total += t_
        valid += v_
        cloudy += c_
    return {"frame": params["frame"], "total": total, "valid": valid, "cloudy": cloudy}


def quality_plan(cube: LazyCube) -> tuple[TaskGraph, list[str]]:
    """Map (per spatial chunk counts) and reduce (per frame sum) tasks; returns reduce ids by frame."""
    schema = cube.schema
    graph = TaskGraph()
    reduce_ids = []
    windows = _spatial_windows(schema)
    for t, (dt, item_id) in enumerate(schema.frames):
        href = cube.quality_sources[t]
        if href is None:
            raise DataError(f"frame {item_id} has no quality asset")
        maps = [
            graph.add("quality_counts", {"href": href, "grid": schema.grid.to_dict(), "window": list(w)})
            for _, _, w in windows
        ]
        reduce_ids.append(graph.add("quality_reduce", {"frame": t, "item": item_id}, maps))
    return graph, reduce_ids


def frame_quality(cube: LazyCube, workers: int = 1, *, report: list[ExecReport] | None = None) -> list[FrameQuality]:
    """Per-frame valid and cloud fractions computed with map/reduce tasks.

    If ``report`` is given, the execution report is appended to it.
    """
    graph, reduce_ids = quality_plan(cube)
    results, rep = execute(graph, workers=workers)
    if report is not None:
        report.append(rep)
    rep.raise_for_failure()
    out = []
    for rid in reduce_ids:
        r = results[rid]
        out.append(FrameQuality.from_counts(r["total"], r["valid"], r["cloudy"]))
    return out


def filter_frames(
    cube: LazyCube,
    qualities: Sequence[FrameQuality],
    max_cloud: float = DEFAULT_MAX_CLOUD,
    min_valid: float = DEFAULT_MIN_VALID,
) -> LazyCube:
    """Keep frames with cloud_fraction <= max_cloud and valid_fraction >= min_valid."""
    if len(qualities) != len(cube.schema.frames):
        raise ConfigError(f"{len(qualities)} qualities for {len(cube.schema.frames)} frames")
    keep = [i for i, q in enumerate(qualities) if q.cloud_fraction <= max_cloud and q.valid_fraction >= min_valid]
    if not keep:
        raise AllFramesFilteredError(
            f"all {len(qualities)} frames removed by quality filter (max_cloud={max_cloud}, min_valid={min_valid})"
        )
    if len(keep) == len(qualities):
        return cube
    return cube.select(keep)


def write_store(
    source: np.ndarray | LazyCube,
    path: str,
    schema: CubeSchema | None = None,
    *,
    workers: int = 1,
    report: list[ExecReport] | None = None,
) -> CubeStore:
    """Persist an in-memory array (with ``schema``) or a lazy cube to ``path``.

    A lazy cube is built through its task graph on ``workers`` lanes.  Chunk
    files are written only when their bytes change; metadata is written last.
    """
    if isinstance(source, LazyCube):
        schema = source.schema
        prepare_store(path, schema)
        results, rep = execute(build_graph(source, path), workers=workers)
        if report is not None:
            report.append(rep)
        rep.raise_for_failure()
        return finalize_store(path, schema)
    if schema is None:
        raise ConfigError("writing an array requires a schema")
    data = np.asarray(source)
    if data.shape != schema.shape:
        raise ConfigError(f"array shape {data.shape} does not match schema {schema.shape}")
    if data.dtype != schema.np_dtype:
        raise ConfigError(f"array dtype {data.dtype} does not match schema dtype {schema.dtype}")
    prepare_store(path, schema)
    for idx in schema.chunk_indices():
        sl = tuple(slice(lo, hi) for lo, hi in schema.chunk_bounds(idx))
        write_chunk(path, idx, data[sl])
    return finalize_store(path, schema)

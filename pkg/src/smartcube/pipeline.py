"""End-to-end ETL: search, grid, plan, quality filter, build, metrics."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any

from . import datacube, geo, stac
from .config import RunConfig
from .errors import ConfigError, EmptySearchError
from .graph import ExecReport, execute, metrics_text
from .store import CubeStore, finalize_store, prepare_store, store_hash

log = logging.getLogger(__name__)

QUALITY_SIDECAR = "quality.json"


@dataclass
class PipelineResult:
    store: CubeStore
    report: ExecReport
    metrics_path: str
    summary: dict[str, Any] = field(default_factory=dict)


def metrics_path_for(out: str) -> str:
    return os.path.join(os.path.dirname(os.path.abspath(out)), "metrics.prom")


def query_from_config(config: RunConfig, with_bands: bool = False) -> stac.SearchQuery:
    time_range = None
    if config.start is not None or config.end is not None:
        if config.start is None or config.end is None:
            raise ConfigError("--start and --end must be given together")
        time_range = (config.start, config.end)
    return stac.SearchQuery(
        bbox=config.bbox,
        time_range=time_range,
        required_bands=frozenset(config.bands) if with_bands and config.bands else None,
    )


def run_pipeline(config: RunConfig) -> PipelineResult:
    """search -> common_grid -> plan_cube -> frame_quality -> filter_frames -> execute -> store -> metrics.

    Re-running an identical config over an existing store rewrites no chunk.
    """
    config.require("catalog", "bands", "resolution", "out")
    assert config.catalog and config.bands and config.resolution and config.out
    out = os.path.abspath(config.out)

    catalog = stac.load_catalog(config.catalog)
    items = stac.search(catalog, query_from_config(config))
    if not items:
        raise EmptySearchError(f"empty search: no item in {config.catalog} matches the query")
    bbox = config.bbox
    if bbox is None:
        bbox = (
            min(i.bbox[0] for i in items),
            min(i.bbox[1] for i in items),
            max(i.bbox[2] for i in items),
            max(i.bbox[3] for i in items),
        )
    grid = geo.common_grid(items, bbox, config.resolution)
    log.info("grid %dx%d at %g (EPSG:%d)", grid.height, grid.width, grid.pixel_width, grid.epsg)

    cube, planned = datacube.plan_cube(
        items, grid, config.bands, config.chunk, out, method=config.resampling
    )
    log.info("planned %d frames, %d tasks", len(cube.schema.frames), len(planned))

    reports: list[ExecReport] = []
    qualities = datacube.frame_quality(cube, workers=config.workers, report=reports)
    kept = datacube.filter_frames(cube, qualities, config.max_cloud, config.min_valid)
    kept_ids = {item_id for _, item_id in kept.schema.frames}

    graph = datacube.build_graph(kept, out)
    prepare_store(out, kept.schema)

    def progress(done: int, total: int) -> None:
        log.info("layer %d/%d done", done, total)

    results, build_report = execute(graph, workers=config.workers, progress=progress if config.verbose else None)
    reports.append(build_report)
    report = reports[0]
    for extra in reports[1:]:
        report = report.merge(extra)
    build_report.raise_for_failure()
    store = finalize_store(out, kept.schema)

    quality_doc = {
        item_id: {"valid_fraction": q.valid_fraction, "cloud_fraction": q.cloud_fraction, "kept": item_id in kept_ids}
        for (_, item_id), q in zip(cube.schema.frames, qualities)
    }
    with open(os.path.join(out, QUALITY_SIDECAR), "w", encoding="utf-8") as fh:
        json.dump(quality_doc, fh, indent=1, sort_keys=True)

    metrics_path = metrics_path_for(out)
    with open(metrics_path, "w", encoding="utf-8") as fh:
        fh.write(metrics_text(report))

    written = sum(1 for tid in graph.ids_by_op("write_chunk") if results[tid]["written"])
    summary = {
        "store": out,
        "items_matched": len(items),
        "frames_planned": len(cube.schema.frames),
        "frames_kept": len(kept.schema.frames),
        "dropped_items": list(cube.dropped),
        "tasks": len(graph),
        "chunks_written": written,
        "chunks_total": len(graph.ids_by_op("write_chunk")),
        "store_hash": store_hash(out),
        "metrics": metrics_path,
    }
    return PipelineResult(store=store, report=report, metrics_path=metrics_path, summary=summary)

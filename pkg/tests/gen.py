"""Random inputs shared by the unit and acceptance tests."""

from __future__ import annotations

import os
from datetime import datetime, timedelta, timezone

import numpy as np

from smartcube.geo import GridSpec, Raster, write_sgr
from smartcube.graph import TaskGraph, register
from smartcube.stac import SearchQuery, StacAsset, StacItem, load_catalog
from smartcube.synthetic import item_document, write_catalog

T0 = datetime(2022, 1, 1, tzinfo=timezone.utc)
COLLECTIONS = ("alpha", "beta", "gamma")
BANDS = ("b1", "b2", "b3")
MASK_T0 = datetime(2021, 1, 1, tzinfo=timezone.utc)
AREA = GridSpec(3857, 0.0, 80.0, 10.0, -10.0, 8, 8)


def random_item(rng: np.random.Generator, i: int) -> StacItem:
    x0 = float(rng.uniform(-10, 10))
    y0 = float(rng.uniform(-10, 10))
    w, h = float(rng.uniform(0, 3)), float(rng.uniform(0, 3))
    # coarse time steps so (datetime) ties are common and ids must break them
    when = T0 + timedelta(hours=int(rng.integers(0, 60)) * 12)
    assets = {b: StacAsset(b, f"{b}.json", "application/x-sgr", "data") for b in BANDS if rng.random() < 0.7}
    if rng.random() < 0.5:
        assets["qa"] = StacAsset("qa", "qa.json", "application/x-sgr", "quality")
    return StacItem(
        id=f"it{int(rng.integers(0, 10**6)):06d}-{i}",
        collection=str(rng.choice(COLLECTIONS)),
        bbox=(x0, y0, x0 + w, y0 + h),
        datetime=when,
        epsg=3857,
        transform=(0.0, 10.0, 0.0, -10.0),
        shape=(4, 4),
        assets=assets,
    )


def random_query(rng: np.random.Generator) -> SearchQuery:
    bbox = time_range = collections = bands = None
    if rng.random() < 0.6:
        x0, y0 = (float(v) for v in rng.uniform(-12, 12, 2))
        bbox = (x0, y0, x0 + float(rng.uniform(0, 8)), y0 + float(rng.uniform(0, 8)))
    if rng.random() < 0.6:
        a, b = sorted(int(v) for v in rng.integers(0, 60, 2))
        time_range = (T0 + timedelta(hours=12 * a), T0 + timedelta(hours=12 * b))
    if rng.random() < 0.4:
        collections = frozenset(str(c) for c in rng.choice(COLLECTIONS, size=int(rng.integers(1, 3)), replace=False))
    if rng.random() < 0.4:
        bands = frozenset(str(b) for b in rng.choice(BANDS, size=int(rng.integers(1, 3)), replace=False))
    return SearchQuery(bbox=bbox, time_range=time_range, collections=collections, required_bands=bands)


@register("test.value")
def _op_value(params, deps):
    if params.get("fail"):
        raise RuntimeError(f"deliberate failure {params['n']}")
    return params["n"] + sum(deps.values())


def random_dag(rng: np.random.Generator, n: int) -> tuple[TaskGraph, dict[str, list[str]]]:
    """Random DAG of ``n`` summing tasks; returns the graph and its dependency lists."""
    graph = TaskGraph()
    ids: list[str] = []
    deps_of: dict[str, list[str]] = {}
    for i in range(n):
        k = int(rng.integers(0, min(i, 4) + 1))
        deps = [ids[j] for j in rng.choice(i, size=k, replace=False)] if k else []
        tid = graph.add("test.value", {"n": i}, deps)
        ids.append(tid)
        deps_of[tid] = sorted(set(deps))
    return graph, deps_of


def overfit_sample():
    """8x8, T=3: a bright block appears in frames 1 and 2 and is labeled construction there."""
    from smartcube.model.net import Sample

    frames = np.full((3, 2, 8, 8), 0.2)
    labels = np.zeros((3, 8, 8), dtype=np.int64)
    for t in (1, 2):
        frames[t, :, 2:6, 2:6] = 0.9
        labels[t, 2:6, 2:6] = 1
    return Sample(frames, labels, np.ones((3, 8, 8), dtype=bool))


def mask_catalog(root, masks, mask_dtype="u8", with_quality=True):
    """One item per mask, each exactly covering AREA, with a u16 band 'b1'."""
    os.makedirs(os.path.join(root, "assets"), exist_ok=True)
    docs = []
    for i, mask in enumerate(masks):
        stem = os.path.join(root, "assets", f"m{i}")
        data = np.full((1, 8, 8), 100 + i, dtype=np.uint16)
        write_sgr(stem + "_b1", Raster(AREA, "u16", 0, data))
        assets = {"b1": {"href": f"../assets/m{i}_b1.json", "type": "x", "role": "data"}}
        if with_quality:
            write_sgr(stem + "_qa", Raster(AREA, mask_dtype, 255, mask[None].astype({"u8": "<u1", "u16": "<u2"}[mask_dtype])))
            assets["qa"] = {"href": f"../assets/m{i}_qa.json", "type": "x", "role": "quality"}
        docs.append(item_document(f"m{i:03d}", "c", MASK_T0 + timedelta(days=i), AREA, assets))
    write_catalog(root, docs)
    return list(load_catalog(root).items)

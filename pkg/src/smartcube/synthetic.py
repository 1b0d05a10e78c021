"""Deterministic synthetic STAC catalogs backed by SGR rasters.

Used by the test-suite, the benchmark and to regenerate the bundled fixture
catalog.  Everything is derived from ``seed`` via ``numpy.random.default_rng``.
"""

from __future__ import annotations

import json
import os
from collections.abc import Sequence
from datetime import datetime, timedelta, timezone

import numpy as np

from .geo import GridSpec, Raster, reproject_point, write_sgr
from .stac import format_datetime

EPOCH = datetime(2021, 1, 1, 10, 0, 0, tzinfo=timezone.utc)


def item_document(
    item_id: str,
    collection: str,
    when: datetime,
    grid: GridSpec,
    assets: dict[str, dict],
) -> dict:
    minx, miny, maxx, maxy = grid.bbox
    if grid.epsg == 3857:
        lon0, lat0 = reproject_point(3857, 4326, minx, miny)
        lon1, lat1 = reproject_point(3857, 4326, maxx, maxy)
        bbox = [lon0, lat0, lon1, lat1]
    else:
        bbox = [minx, miny, maxx, maxy]
    return {
        "type": "Feature",
        "stac_version": "1.0.0",
        "id": item_id,
        "collection": collection,
        "bbox": bbox,
        "geometry": None,
        "properties": {
            "datetime": format_datetime(when),
            "epsg": grid.epsg,
            "transform": list(grid.transform),
            "shape": [grid.height, grid.width],
        },
        "assets": assets,
        "links": [],
    }


def write_catalog(root: str, item_docs: Sequence[dict]) -> str:
    """Write ``catalog.json`` plus ``items/<id>.json``; returns the catalog path."""
    os.makedirs(os.path.join(root, "items"), exist_ok=True)
    links = []
    for doc in item_docs:
        rel = f"items/{doc['id']}.json"
        with open(os.path.join(root, rel), "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
        links.append({"rel": "item", "href": rel, "type": "application/json"})
    catalog = {
        "type": "Catalog",
        "stac_version": "1.0.0",
        "id": os.path.basename(os.path.abspath(root)) or "catalog",
        "description": "synthetic catalog",
        "links": links,
    }
    path = os.path.join(root, "catalog.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(catalog, fh, indent=1, sort_keys=True)
    return path


def _cloud_mask(rng: np.random.Generator, shape: tuple[int, int], cloud_cover: float, invalid_cover: float) -> np.ndarray:
    rows, cols = shape
    mask = np.zeros(shape, dtype=np.uint8)
    # clouds as a few soft blobs thresholded to hit roughly the requested cover
    yy, xx = np.mgrid[0:rows, 0:cols]
    field = np.zeros(shape)
    for _ in range(3):
        cy, cx = rng.uniform(0, rows), rng.uniform(0, cols)
        s = rng.uniform(0.2, 0.5) * max(rows, cols)
        field += np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
    field += 0.05 * rng.random(shape)
    if cloud_cover > 0:
        mask[field >= np.quantile(field, 1.0 - cloud_cover)] |= 0b10
    if invalid_cover > 0:
        mask[rng.random(shape) < invalid_cover] |= 0b01
    return mask


def make_catalog(
    root: str,
    n_items: int = 12,
    bands: Sequence[str] = ("b1", "b2"),
    seed: int = 0,
    area: GridSpec | None = None,
    collection: str = "synthetic",
    resolutions: Sequence[float] = (10.0, 5.0, 20.0),
    with_quality: bool = True,
) -> GridSpec:
    """Generate ``n_items`` items over ``area``; returns the area grid.

    Items use EPSG:3857, vary in resolution and offset so they only partly
    cover the area, and carry u16 data bands plus a u8 quality mask.
    """
    rng = np.random.default_rng(seed)
    if area is None:
        area = GridSpec(3857, 100000.0, 200160.0, 10.0, -10.0, 16, 16)
    assets_dir = os.path.join(root, "assets")
    os.makedirs(assets_dir, exist_ok=True)
    x0, y0, x1, y1 = area.bbox
    docs = []
    for i in range(n_items):
        res = float(resolutions[i % len(resolutions)])
        # shift by whole/half cells so items overhang the area on some side
        ox = x0 + res * int(rng.integers(-3, 3)) + (res / 2 if i % 4 == 3 else 0.0)
        oy = y1 + res * int(rng.integers(-2, 4))
        cols = int(np.ceil((x1 - ox) / res)) + int(rng.integers(-2, 3))
        rows = int(np.ceil((oy - y0) / res)) + int(rng.integers(-2, 3))
        grid = GridSpec(3857, ox, oy, res, -res, max(cols, 2), max(rows, 2))
        item_id = f"item-{i:03d}"
        when = EPOCH + timedelta(days=int(i * 5 + rng.integers(0, 3)), hours=int(rng.integers(0, 3)))
        assets: dict[str, dict] = {}
        for band in bands:
            data = rng.integers(1, 60000, size=(1, grid.height, grid.width), dtype=np.uint16)
            data[0, rng.random(grid.shape) < 0.02] = 0  # sprinkle nodata
            stem = os.path.join(assets_dir, f"{item_id}_{band}")
            write_sgr(stem, Raster(grid, "u16", 0, data))
            assets[band] = {"href": f"../assets/{item_id}_{band}.json", "type": "application/x-sgr", "role": "data"}
        if with_quality:
            cover = float(rng.choice([0.0, 0.1, 0.3, 0.6, 0.9]))
            mask = _cloud_mask(rng, grid.shape, cover, float(rng.choice([0.0, 0.05, 0.8], p=[0.6, 0.3, 0.1])))
            stem = os.path.join(assets_dir, f"{item_id}_qa")
            write_sgr(stem, Raster(grid, "u8", 1, mask[None]))
            assets["qa"] = {"href": f"../assets/{item_id}_qa.json", "type": "application/x-sgr", "role": "quality"}
        docs.append(item_document(item_id, collection, when, grid, assets))
    write_catalog(root, docs)
    return area


def area_bbox_4326(area: GridSpec) -> tuple[float, float, float, float]:
    minx, miny, maxx, maxy = area.bbox
    lon0, lat0 = reproject_point(area.epsg, 4326, minx, miny)
    lon1, lat1 = reproject_point(area.epsg, 4326, maxx, maxy)
    return (lon0, lat0, lon1, lat1)

"""Regenerate the bundled fixture catalog and its golden store hash.

The golden hash comes from the eager oracle in ``tests/oracles.py`` (naive
per-pixel resampling, single-pass quality counts, predicate filtering and an
independent store writer), never from the pipeline under test.

    python tests/data/make_fixture.py
"""

from __future__ import annotations

import json
import os
import shutil
import sys
import tempfile

HERE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, os.path.dirname(HERE))

import oracles  # noqa: E402

from smartcube.synthetic import area_bbox_4326, make_catalog  # noqa: E402

CATALOG = os.path.join(HERE, "fixture_catalog")
CONFIG = os.path.join(HERE, "golden.conf")
GOLDEN = os.path.join(HERE, "golden.json")

BANDS = ("b1", "b2")
RESOLUTION = 10.0
CHUNK = (2, 1, 8, 8)
MAX_CLOUD, MIN_VALID = 0.5, 0.25


def oracle_hash(catalog: str, bbox: tuple[float, float, float, float]) -> tuple[str, dict]:
    items = oracles.read_items(catalog)
    items.sort(key=lambda d: (oracles.parse_when(d["properties"]["datetime"]), d["id"]))
    x0, y0 = oracles.to_3857(bbox[0], bbox[1])
    x1, y1 = oracles.to_3857(bbox[2], bbox[3])
    grid = oracles.snapped_grid(items, (x0, y0, x1, y1), RESOLUTION)
    qualities = [oracles.fractions(*oracles.count_quality(*oracles.mask_on_grid(it, grid))) for it in items]
    kept = [items[i] for i in oracles.keep_predicate(qualities, MAX_CLOUD, MIN_VALID)]
    cube = oracles.eager_cube(kept, grid, BANDS)
    doc = {
        "format_version": "smartcube/1",
        "frames": [[it["properties"]["datetime"], it["id"]] for it in kept],
        "bands": list(BANDS),
        "grid": grid,
        "dtype": "u16",
        "nodata": 0.0,
        "chunk": list(CHUNK),
    }
    tmp = tempfile.mkdtemp()
    try:
        oracles.write_store_naive(tmp, cube, doc)
        return oracles.dir_hash(tmp), {"frames": len(items), "kept": len(kept), "grid": grid}
    finally:
        shutil.rmtree(tmp)


def main() -> None:
    if os.path.exists(CATALOG):
        shutil.rmtree(CATALOG)
    area = make_catalog(CATALOG, n_items=8, bands=BANDS, seed=5)
    bbox = area_bbox_4326(area)
    with open(CONFIG, "w", encoding="utf-8") as fh:
        fh.write("# bundled fixture build; pass --catalog and --out as flags\n")
        fh.write(f"bbox = {','.join(repr(v) for v in bbox)}\n")
        fh.write(f"bands = {','.join(BANDS)}\n")
        fh.write(f"resolution = {RESOLUTION}\n")
        fh.write(f"chunk = {','.join(map(str, CHUNK))}\n")
        fh.write(f"max-cloud = {MAX_CLOUD}\nmin-valid = {MIN_VALID}\n")
    digest, info = oracle_hash(CATALOG, bbox)
    with open(GOLDEN, "w", encoding="utf-8") as fh:
        json.dump({"store_hash": digest, **info}, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(digest, info["kept"], "of", info["frames"], "frames kept")


if __name__ == "__main__":
    main()

import math
from datetime import datetime, timezone

import numpy as np
import oracles
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from smartcube.errors import ConfigError, DataError, EmptyIntersectionError
from smartcube.geo import (
    GridSpec,
    Raster,
    common_grid,
    pixel_to_world,
    read_sgr,
    reproject_point,
    resample,
    resample_window,
    world_to_pixel,
    write_sgr,
)
from smartcube.stac import StacItem

G = GridSpec(3857, 0.0, 100.0, 10.0, -10.0, 10, 10)

grids = st.builds(
    GridSpec,
    epsg=st.just(3857),
    origin_x=st.floats(-1e6, 1e6),
    origin_y=st.floats(-1e6, 1e6),
    pixel_width=st.floats(0.1, 100),
    pixel_height=st.floats(-100, -0.1),
    width=st.integers(1, 50),
    height=st.integers(1, 50),
)


def _meta(raster):
    return {
        "shape": [raster.bands, raster.grid.height, raster.grid.width],
        "dtype": raster.dtype,
        "transform": list(raster.grid.transform),
        "nodata": raster.nodata,
        "data": raster.data,
    }


def _item(grid, item_id="i"):
    return StacItem(item_id, "c", (0, 0, 1, 1), datetime(2021, 1, 1, tzinfo=timezone.utc), grid.epsg, grid.transform, grid.shape, {})


# grid -----------------------------------------------------------------------


def test_gridspec_invariants():
    assert G.bbox == (0.0, 0.0, 100.0, 100.0)
    for bad in [dict(pixel_width=0), dict(pixel_height=1.0), dict(width=0), dict(height=-1)]:
        kw = dict(epsg=3857, origin_x=0.0, origin_y=0.0, pixel_width=1.0, pixel_height=-1.0, width=2, height=2)
        kw.update(bad)
        with pytest.raises(ConfigError):
            GridSpec(**kw)
    assert GridSpec.from_dict(G.to_dict()) == G


def test_world_to_pixel_examples():
    assert world_to_pixel(G, 25, 75) == (2, 2)
    assert world_to_pixel(G, 0, 100) == (0, 0)
    assert world_to_pixel(G, -1, 101) == (-1, -1)  # out of bounds is reported, not raised
    assert not G.contains(-1, -1)


def test_pixel_to_world_examples():
    assert pixel_to_world(G, 0, 0) == (5, 95)
    assert pixel_to_world(G, 9, 9) == (95, 5)
    with pytest.raises(ConfigError):
        pixel_to_world(G, 10, 0)


@given(grids, st.data())
def test_pixel_world_round_trip(grid, data):
    row = data.draw(st.integers(0, grid.height - 1))
    col = data.draw(st.integers(0, grid.width - 1))
    assert world_to_pixel(grid, *pixel_to_world(grid, row, col)) == (row, col)


# reprojection ---------------------------------------------------------------


def test_reproject_examples():
    assert reproject_point(4326, 3857, 0, 0) == (0, 0)
    x, y = reproject_point(4326, 3857, 180, 0)
    assert (x, y) == (20037508.342789244, 0)
    assert x == pytest.approx(6378137 * math.pi, rel=0, abs=1e-6)
    assert reproject_point(3857, 3857, 5, 6) == (5, 6)
    with pytest.raises(DataError):
        reproject_point(4326, 32633, 0, 0)
    with pytest.raises(DataError):
        reproject_point(4326, 3857, 0, 90)


@given(st.floats(-180, 180), st.floats(-85, 85))
def test_reproject_round_trip(lon, lat):
    back = reproject_point(3857, 4326, *reproject_point(4326, 3857, lon, lat))
    assert abs(back[0] - lon) < 1e-6 and abs(back[1] - lat) < 1e-6
    assert reproject_point(4326, 3857, lon, lat) == pytest.approx(oracles.to_3857(lon, lat), abs=1e-6)


# common grid ----------------------------------------------------------------


def test_common_grid_single_item_is_item_grid():
    g = GridSpec(3857, 1000.0, 2000.0, 10.0, -10.0, 6, 4)
    got = common_grid([_item(g)], g.bbox, 10.0, bbox_epsg=3857)
    assert got == g
    odd = GridSpec(3857, 1000.0, 2000.0, 10.0, -10.0, 5, 3)
    got = common_grid([_item(odd)], odd.bbox, 10.0, bbox_epsg=3857)
    assert (got.origin_x, got.origin_y, got.width, got.height) == (1000.0, 2000.0, 6, 4)


def test_common_grid_two_half_overlapping_items():
    # two 2x2-cell items offset by one cell; bbox spans both, slightly off the cell lines
    a = GridSpec(3857, 0.0, 20.0, 10.0, -10.0, 2, 2)
    b = GridSpec(3857, 10.0, 30.0, 10.0, -10.0, 2, 2)
    got = common_grid([_item(a, "a"), _item(b, "b")], (-5.0, 2.0, 25.0, 40.0), 10.0, bbox_epsg=3857)
    # union of clipped footprints: x 0..30, y 2..30 -> snapped y 0..30 -> 3x3 -> padded to 4x4
    assert (got.origin_x, got.origin_y, got.width, got.height) == (0.0, 30.0, 4, 4)
    assert got.pixel_width == 10.0 and got.pixel_height == -10.0


def test_common_grid_errors():
    a = GridSpec(3857, 0.0, 20.0, 10.0, -10.0, 2, 2)
    with pytest.raises(EmptyIntersectionError):
        common_grid([_item(a)], (100.0, 100.0, 200.0, 200.0), 10.0, bbox_epsg=3857)
    b = GridSpec(4326, 0.0, 20.0, 10.0, -10.0, 2, 2)
    with pytest.raises(DataError):
        common_grid([_item(a, "a"), _item(b, "b")], (0, 0, 1, 1), 10.0)
    with pytest.raises(ConfigError):
        common_grid([_item(a)], a.bbox, 0.0, bbox_epsg=3857)


@given(st.lists(grids, min_size=1, max_size=4), st.floats(0.5, 50), st.data())
def test_common_grid_properties(gs, res, data):
    gs = [GridSpec(3857, g.origin_x, g.origin_y, g.pixel_width, g.pixel_height, g.width, g.height) for g in gs]
    g0 = gs[0]
    bx0, by0, bx1, by1 = g0.bbox
    items = [_item(g, f"i{k}") for k, g in enumerate(gs)]
    out = common_grid(items, (bx0, by0, bx1, by1), res, bbox_epsg=3857)
    assert out.width % 2 == 0 and out.height % 2 == 0
    assert out.pixel_width == res and out.pixel_height == -res
    assert abs(out.origin_x / res - round(out.origin_x / res)) < 1e-6
    ref = oracles.snapped_grid(
        [{"properties": {"transform": list(g.transform), "shape": list(g.shape)}} for g in gs], (bx0, by0, bx1, by1), res
    )
    assert out.to_dict() == ref
    # the output covers g0's footprint (which lies inside the bbox)
    ox0, oy0, ox1, oy1 = out.bbox
    tol = 1e-6 * res + 1e-12 * max(abs(ox0), abs(oy1), abs(ox1), abs(oy0))
    assert ox0 <= bx0 + tol and oy0 <= by0 + tol
    assert ox1 >= bx1 - tol and oy1 >= by1 - tol


# resampling -----------------------------------------------------------------


def _random_raster(rng, grid, dtype="u16", nodata=0, nodata_frac=0.1):
    data = rng.integers(1, 1000, size=(1, grid.height, grid.width)).astype({"u16": "<u2", "u8": "<u1", "f32": "<f4"}[dtype])
    data[0, rng.random(grid.shape) < nodata_frac] = nodata
    return Raster(grid, dtype, nodata, data)


def test_nearest_identity():
    rng = np.random.default_rng(0)
    for dtype in ("u8", "u16", "f32"):
        r = _random_raster(rng, G, dtype)
        out = resample(r, G, "nearest")
        assert out.dtype == dtype and out.data.tobytes() == r.data.tobytes()


def test_bilinear_constant():
    src = Raster(G, "u16", 0, np.full((1, 10, 10), 7, dtype=np.uint16))
    dst = GridSpec(3857, 3.0, 97.0, 3.3, -2.7, 25, 30)
    out = resample(src, dst, "bilinear")
    assert out.dtype == "f32" and np.all(out.data == 7.0)


def test_bilinear_ramp_downsample_matches_brute_force():
    src_grid = GridSpec(3857, 0.0, 40.0, 10.0, -10.0, 4, 4)
    ramp = (np.arange(16, dtype=np.float32).reshape(1, 4, 4) * 3 + 1).astype(np.float32)
    src = Raster(src_grid, "f32", -9999.0, ramp)
    dst = GridSpec(3857, 0.0, 40.0, 20.0, -20.0, 2, 2)
    out = resample(src, dst, "bilinear")
    ref, ok = oracles.brute_bilinear(_meta(src), dst.to_dict())
    assert ok.all()
    np.testing.assert_allclose(out.data[0], ref, rtol=0, atol=1e-5)
    # ramp value at the centre of each 2x2 block is the mean of its four cells
    blocks = ramp[0].reshape(2, 2, 2, 2).mean(axis=(1, 3))
    np.testing.assert_allclose(out.data[0], blocks, atol=1e-5)


@given(st.integers(0, 2**32 - 1))
def test_resample_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    src_grid = GridSpec(3857, float(rng.uniform(-50, 50)), float(rng.uniform(-50, 50)), float(rng.uniform(2, 12)), -float(rng.uniform(2, 12)), int(rng.integers(1, 9)), int(rng.integers(1, 9)))
    dst = GridSpec(3857, float(rng.uniform(-60, 40)), float(rng.uniform(-40, 60)), float(rng.uniform(2, 15)), -float(rng.uniform(2, 15)), int(rng.integers(1, 10)), int(rng.integers(1, 10)))
    src = _random_raster(rng, src_grid)
    near = resample(src, dst, "nearest")
    ref, ok = oracles.brute_nearest(_meta(src), dst.to_dict())
    assert near.data[0].tobytes() == ref.tobytes()
    bil, bok = resample_window(src, dst, "bilinear")
    ref, rok = oracles.brute_bilinear(_meta(src), dst.to_dict())
    np.testing.assert_array_equal(bok[0], rok)
    np.testing.assert_allclose(bil[0][rok], ref[rok], rtol=1e-6)
    assert np.all(bil[0][~rok] == 0)


@given(st.integers(0, 2**32 - 1))
def test_bilinear_convexity(seed):
    rng = np.random.default_rng(seed)
    src = _random_raster(rng, GridSpec(3857, 0.0, 80.0, 10.0, -10.0, 8, 8), "f32", nodata=-1.0, nodata_frac=0.2)
    dst = GridSpec(3857, float(rng.uniform(-10, 10)), float(rng.uniform(70, 90)), float(rng.uniform(1, 9)), -float(rng.uniform(1, 9)), 12, 12)
    vals, ok = resample_window(src, dst, "bilinear")
    good = src.data[src.data != -1.0]
    assume(ok.any())
    assert vals[ok].min() >= good.min() and vals[ok].max() <= good.max()


@given(st.integers(0, 2**32 - 1), st.sampled_from(["nearest", "bilinear"]))
def test_windowed_equals_full(seed, method):
    rng = np.random.default_rng(seed)
    src = _random_raster(rng, GridSpec(3857, 0.0, 80.0, 10.0, -10.0, 8, 8))
    dst = GridSpec(3857, -7.0, 83.0, 3.0, -3.0, 30, 30)
    full, fok = resample_window(src, dst, method)
    r0, c0 = (int(v) for v in rng.integers(0, 29, 2))
    r1, c1 = r0 + int(rng.integers(1, 30 - r0)), c0 + int(rng.integers(1, 30 - c0))
    part, pok = resample_window(src, dst, method, (r0, r1, c0, c1))
    assert part.tobytes() == full[:, r0:r1, c0:c1].tobytes()
    assert np.array_equal(pok, fok[:, r0:r1, c0:c1])


def test_resample_errors():
    src = Raster(G, "u16", 0, np.ones((1, 10, 10), dtype=np.uint16))
    with pytest.raises(DataError):
        resample(src, GridSpec(4326, 0, 0, 1, -1, 2, 2), "nearest")
    with pytest.raises(ConfigError):
        resample(src, G, "cubic")


def test_raster_invariants():
    with pytest.raises(ConfigError):
        Raster(G, "u16", 0, np.ones((1, 9, 10), dtype=np.uint16))
    with pytest.raises(ConfigError):
        Raster(G, "u8", 300, np.ones((1, 10, 10), dtype=np.uint8))


def test_sgr_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    for dtype in ("u8", "u16", "f32"):
        r = _random_raster(rng, GridSpec(3857, 1.5, 2.5, 0.5, -0.25, 7, 3), dtype)
        meta, binp = write_sgr(str(tmp_path / dtype), r)
        back = read_sgr(meta)
        assert back.grid == r.grid and back.dtype == dtype and back.nodata == r.nodata
        assert back.data.tobytes() == r.data.tobytes()
        with open(binp, "rb") as fh:
            assert fh.read() == r.data.astype(r.data.dtype.newbyteorder("<")).tobytes()
        assert oracles.read_raster(meta)["data"].tobytes() == r.data.tobytes()


def test_sgr_truncated_payload(tmp_path):
    r = _random_raster(np.random.default_rng(0), G)
    _, binp = write_sgr(str(tmp_path / "r"), r)
    with open(binp, "r+b") as fh:
        fh.truncate(10)
    with pytest.raises(DataError, match="expected"):
        read_sgr(str(tmp_path / "r"))

"""Target grids, coordinate conversion, point reprojection and resampling.

Grids are axis-aligned and north-up: a 4-term geotransform
``(origin_x, pixel_width, origin_y, pixel_height)`` with ``pixel_height < 0``.
Rasters on disk use the SGR format: ``<name>.json`` sidecar plus a raw
little-endian ``<name>.bin`` payload in (band, row, col) order.
"""

from __future__ import annotations

import json
import math
import os
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from . import iostats, kernels
from .errors import ConfigError, DataError, EmptyIntersectionError
from .stac import StacItem, fetch_document, resolve_href

EARTH_RADIUS = 6378137.0

DTYPES: dict[str, np.dtype] = {
    "u8": np.dtype("<u1"),
    "u16": np.dtype("<u2"),
    "f32": np.dtype("<f4"),
}


def numpy_dtype(name: str) -> np.dtype:
    try:
        return DTYPES[name]
    except KeyError:
        raise ConfigError(f"unsupported dtype {name!r}; expected one of {sorted(DTYPES)}") from None


def check_nodata(dtype: str, nodata: float) -> None:
    dt = numpy_dtype(dtype)
    if dt.kind == "u":
        info = np.iinfo(dt)
        if nodata != int(nodata) or not info.min <= nodata <= info.max:
            raise ConfigError(f"nodata {nodata!r} not representable as {dtype}")
    elif not math.isnan(nodata) and float(np.float32(nodata)) != nodata:
        raise ConfigError(f"nodata {nodata!r} not exactly representable as {dtype}")


@dataclass(frozen=True)
class GridSpec:
    epsg: int
    origin_x: float
    origin_y: float
    pixel_width: float
    pixel_height: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.epsg <= 0:
            raise ConfigError(f"epsg must be positive, got {self.epsg}")
        if not self.pixel_width > 0:
            raise ConfigError(f"pixel_width must be > 0, got {self.pixel_width}")
        if not self.pixel_height < 0:
            raise ConfigError(f"pixel_height must be < 0, got {self.pixel_height}")
        if self.width <= 0 or self.height <= 0:
            raise ConfigError(f"grid dimensions must be positive, got {self.height}x{self.width}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        return (
            self.origin_x,
            self.origin_y + self.height * self.pixel_height,
            self.origin_x + self.width * self.pixel_width,
            self.origin_y,
        )

    @property
    def transform(self) -> tuple[float, float, float, float]:
        return (self.origin_x, self.pixel_width, self.origin_y, self.pixel_height)

    def contains(self, row: int, col: int) -> bool:
        return 0 <= row < self.height and 0 <= col < self.width

    def to_dict(self) -> dict:
        return {
            "epsg": self.epsg,
            "origin_x": self.origin_x,
            "origin_y": self.origin_y,
            "pixel_width": self.pixel_width,
            "pixel_height": self.pixel_height,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> GridSpec:
        return cls(
            epsg=int(doc["epsg"]),
            origin_x=float(doc["origin_x"]),
            origin_y=float(doc["origin_y"]),
            pixel_width=float(doc["pixel_width"]),
            pixel_height=float(doc["pixel_height"]),
            width=int(doc["width"]),
            height=int(doc["height"]),
        )

    @classmethod
    def from_transform(cls, epsg: int, transform: Sequence[float], shape: Sequence[int]) -> GridSpec:
        ox, pw, oy, ph = transform
        return cls(epsg, float(ox), float(oy), float(pw), float(ph), int(shape[1]), int(shape[0]))

    @classmethod
    def of_item(cls, item: StacItem) -> GridSpec:
        return cls.from_transform(item.epsg, item.transform, item.shape)


@dataclass(frozen=True, eq=False)
class Raster:
    grid: GridSpec
    dtype: str
    nodata: float
    data: np.ndarray  # (bands, rows, cols)

    def __post_init__(self) -> None:
        check_nodata(self.dtype, self.nodata)
        if self.data.ndim != 3 or self.data.shape[1:] != self.grid.shape:
            raise ConfigError(f"raster data shape {self.data.shape} does not match grid {self.grid.shape}")
        if self.data.dtype != numpy_dtype(self.dtype):
            raise ConfigError(f"raster data is {self.data.dtype}, declared {self.dtype}")

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    def valid(self) -> np.ndarray:
        if math.isnan(self.nodata):
            return ~np.isnan(self.data)
        ok = self.data != self.data.dtype.type(self.nodata)
        if self.data.dtype.kind == "f":
            ok &= ~np.isnan(self.data)
        return ok


def world_to_pixel(grid: GridSpec, x: float, y: float) -> tuple[int, int]:
    """Cell containing world point (x, y).  May fall outside the grid; see ``grid.contains``."""
    col = math.floor((x - grid.origin_x) / grid.pixel_width)
    row = math.floor((y - grid.origin_y) / grid.pixel_height)
    return row, col


def pixel_to_world(grid: GridSpec, row: int, col: int) -> tuple[float, float]:
    """World coordinates of the center of cell (row, col)."""
    if not grid.contains(row, col):
        raise ConfigError(f"cell ({row}, {col}) outside grid {grid.height}x{grid.width}")
    x = grid.origin_x + (col + 0.5) * grid.pixel_width
    y = grid.origin_y + (row + 0.5) * grid.pixel_height
    return x, y


def reproject_point(from_epsg: int, to_epsg: int, x: float, y: float) -> tuple[float, float]:
    """Identity or closed-form spherical Mercator between EPSG:4326 and EPSG:3857."""
    if from_epsg == to_epsg:
        return x, y
    if (from_epsg, to_epsg) == (4326, 3857):
        if abs(y) >= 90:
            raise DataError(f"latitude {y} out of range for Web Mercator")
        return (
            EARTH_RADIUS * math.radians(x),
            # asinh(tan(phi)) == ln(tan(pi/4 + phi/2)), but exact at the equator
            EARTH_RADIUS * math.asinh(math.tan(math.radians(y))),
        )
    if (from_epsg, to_epsg) == (3857, 4326):
        lon = math.degrees(x / EARTH_RADIUS)
        lat = math.degrees(math.atan(math.sinh(y / EARTH_RADIUS)))
        return lon, lat
    raise DataError(f"unsupported CRS pair EPSG:{from_epsg} -> EPSG:{to_epsg}")


def _snap_down(v: float, res: float) -> float:
    # tolerance keeps exact multiples (up to rounding noise) from snapping a full cell
    return math.floor(v / res + 1e-9) * res


def _snap_up(v: float, res: float) -> float:
    return math.ceil(v / res - 1e-9) * res


def common_grid(
    items: Sequence[StacItem],
    query_bbox: Sequence[float],
    resolution: float,
    bbox_epsg: int = 4326,
) -> GridSpec:
    """Grid covering ``query_bbox`` intersected with the items' footprints.

    The bbox is given in ``bbox_epsg`` and converted to the items' CRS.  The
    extent is snapped outward to multiples of ``resolution`` and both
    dimensions are rounded up to even counts (extending right and down).
    """
    if not items:
        raise EmptyIntersectionError("no items to build a grid from")
    if not resolution > 0:
        raise ConfigError(f"resolution must be > 0, got {resolution}")
    epsgs = sorted({item.epsg for item in items})
    if len(epsgs) > 1:
        raise DataError(f"items use mixed projections {epsgs}")
    epsg = epsgs[0]
    minx, miny, maxx, maxy = (float(v) for v in query_bbox)
    if bbox_epsg != epsg:
        x0, y0 = reproject_point(bbox_epsg, epsg, minx, miny)
        x1, y1 = reproject_point(bbox_epsg, epsg, maxx, maxy)
        minx, miny, maxx, maxy = min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1)

    parts = []
    for item in items:
        fx0, fy0, fx1, fy1 = item.footprint()
        ix0, iy0, ix1, iy1 = max(minx, fx0), max(miny, fy0), min(maxx, fx1), min(maxy, fy1)
        if ix0 < ix1 and iy0 < iy1:
            parts.append((ix0, iy0, ix1, iy1))
    if not parts:
        raise EmptyIntersectionError(f"query bbox {tuple(query_bbox)} does not intersect any item footprint")
    ux0 = _snap_down(min(p[0] for p in parts), resolution)
    uy0 = _snap_down(min(p[1] for p in parts), resolution)
    ux1 = _snap_up(max(p[2] for p in parts), resolution)
    uy1 = _snap_up(max(p[3] for p in parts), resolution)
    width = max(1, round((ux1 - ux0) / resolution))
    height = max(1, round((uy1 - uy0) / resolution))
    width += width % 2
    height += height % 2
    return GridSpec(epsg, ux0, uy1, resolution, -resolution, width, height)


def _dst_centers(dst: GridSpec, window: tuple[int, int, int, int]) -> tuple[np.ndarray, np.ndarray]:
    r0, r1, c0, c1 = window
    xs = dst.origin_x + (np.arange(c0, c1) + 0.5) * dst.pixel_width
    ys = dst.origin_y + (np.arange(r0, r1) + 0.5) * dst.pixel_height
    return ys, xs


def resample_window(
    src: Raster,
    dst: GridSpec,
    method: str,
    window: tuple[int, int, int, int] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Resample ``src`` onto rows ``r0:r1`` and cols ``c0:c1`` of ``dst``.

    Returns ``(values, ok)``: values in the source dtype for nearest and
    float32 for bilinear, with nodata written where ``ok`` is false.  Windowed
    output is identical to slicing a full-grid resample.
    """
    if src.grid.epsg != dst.epsg:
        raise DataError(f"cannot resample EPSG:{src.grid.epsg} onto EPSG:{dst.epsg}")
    if window is None:
        window = (0, dst.height, 0, dst.width)
    g = src.grid
    ys, xs = _dst_centers(dst, window)
    fr = (ys - g.origin_y) / g.pixel_height
    fc = (xs - g.origin_x) / g.pixel_width
    row_in = (fr >= 0) & (fr < g.height)
    col_in = (fc >= 0) & (fc < g.width)
    valid = src.valid()

    if method == "nearest":
        rows = np.where(row_in, np.floor(np.where(row_in, fr, 0)), 0).astype(np.intp)
        cols = np.where(col_in, np.floor(np.where(col_in, fc, 0)), 0).astype(np.intp)
        out = src.data[:, rows[:, None], cols[None, :]]
        ok = valid[:, rows[:, None], cols[None, :]] & (row_in[:, None] & col_in[None, :])[None]
        out = np.where(ok, out, out.dtype.type(src.nodata))
        return out, ok
    if method == "bilinear":
        rows = np.where(row_in, np.clip(fr - 0.5, 0.0, g.height - 1), np.nan)
        cols = np.where(col_in, np.clip(fc - 0.5, 0.0, g.width - 1), np.nan)
        vals, ok = kernels.bilinear_sample(src.data.astype(np.float64), valid, rows, cols)
        out = np.where(ok, vals, src.nodata).astype(np.float32)
        return out, ok
    raise ConfigError(f"unknown resampling method {method!r}")


def resample(src: Raster, dst: GridSpec, method: str) -> Raster:
    """Resample ``src`` onto ``dst``; nearest keeps the dtype, bilinear yields f32."""
    data, _ = resample_window(src, dst, method)
    dtype = src.dtype if method == "nearest" else "f32"
    return Raster(dst, dtype, src.nodata, np.ascontiguousarray(data))


def read_sgr(locator: str) -> Raster:
    """Read an SGR raster.  ``locator`` may name the ``.json`` sidecar, or the stem."""
    meta_href = locator if locator.endswith(".json") else locator + ".json"
    try:
        meta = json.loads(fetch_document(meta_href))
        bands, rows, cols = (int(v) for v in meta["shape"])
        dtype = str(meta["dtype"])
        grid = GridSpec.from_transform(int(meta["epsg"]), meta["transform"], (rows, cols))
        nodata = float(meta["nodata"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{meta_href}: invalid SGR metadata: {exc}") from None
    bin_href = resolve_href(meta_href, os.path.basename(meta_href)[: -len(".json")] + ".bin")
    dt = numpy_dtype(dtype)
    payload = fetch_document(bin_href)
    iostats.record(iostats.ASSET_BYTES, len(payload))
    expected = bands * rows * cols * dt.itemsize
    if len(payload) != expected:
        raise DataError(f"{bin_href}: payload is {len(payload)} bytes, expected {expected}")
    data = np.frombuffer(payload, dtype=dt).reshape(bands, rows, cols)
    return Raster(grid, dtype, nodata, data)


def write_sgr(stem: str, raster: Raster) -> tuple[str, str]:
    """Write ``<stem>.json`` and ``<stem>.bin``; returns both paths."""
    meta = {
        "shape": [raster.bands, raster.grid.height, raster.grid.width],
        "dtype": raster.dtype,
        "epsg": raster.grid.epsg,
        "transform": list(raster.grid.transform),
        "nodata": raster.nodata,
    }
    meta_path, bin_path = stem + ".json", stem + ".bin"
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1)
    with open(bin_path, "wb") as fh:
        fh.write(np.ascontiguousarray(raster.data, dtype=numpy_dtype(raster.dtype)).tobytes())
    return meta_path, bin_path

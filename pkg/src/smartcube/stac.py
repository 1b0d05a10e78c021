"""Static STAC-style catalogs: fetching, loading, validation and search.

Only static catalogs are supported: a root ``catalog.json`` whose ``links``
point (possibly through ``child`` catalogs) at item documents.  Items carry
STAC core fields plus flattened projection fields (``epsg``, ``transform``,
``shape``) under ``properties``.
"""

from __future__ import annotations

import json
import os
import re
import urllib.error
import urllib.parse
import urllib.request
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any

from .errors import CatalogError, ConfigError, FetchError, NotFoundError, SizeLimitError

DEFAULT_MAX_BYTES = 64 * 1024 * 1024
MAX_REDIRECTS = 3

_RFC3339_Z = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})(?:\.(\d{1,6}))?Z$"
)


def parse_datetime(text: str) -> datetime:
    """Parse an RFC 3339 UTC timestamp.  Only the ``Z`` offset is accepted."""
    m = _RFC3339_Z.match(text) if isinstance(text, str) else None
    if m is None:
        raise ValueError(f"not an RFC 3339 UTC ('Z') timestamp: {text!r}")
    y, mo, d, h, mi, s, frac = m.groups()
    micro = int(frac.ljust(6, "0")) if frac else 0
    return datetime(int(y), int(mo), int(d), int(h), int(mi), int(s), micro, tzinfo=timezone.utc)


def format_datetime(value: datetime) -> str:
    value = value.astimezone(timezone.utc)
    text = value.strftime("%Y-%m-%dT%H:%M:%S")
    if value.microsecond:
        text += f".{value.microsecond:06d}".rstrip("0")
    return text + "Z"


def is_url(locator: str) -> bool:
    return urllib.parse.urlsplit(locator).scheme in ("http", "https")


def resolve_href(base: str, href: str) -> str:
    """Resolve ``href`` relative to the document located at ``base``."""
    if is_url(href) or os.path.isabs(href):
        return href
    if is_url(base):
        return urllib.parse.urljoin(base, href)
    return os.path.normpath(os.path.join(os.path.dirname(base), href))


class _LimitedRedirects(urllib.request.HTTPRedirectHandler):
    max_redirections = MAX_REDIRECTS


_opener = urllib.request.build_opener(_LimitedRedirects)


def fetch_document(href: str, max_bytes: int = DEFAULT_MAX_BYTES, timeout: float = 30.0) -> bytes:
    """Return the raw bytes behind a local path or an http(s) URL.

    Raises NotFoundError, SizeLimitError or FetchError, each naming ``href``.
    """
    if is_url(href):
        try:
            with _opener.open(href, timeout=timeout) as resp:
                data = resp.read(max_bytes + 1)
        except urllib.error.HTTPError as exc:
            if exc.code == 404:
                raise NotFoundError(href, "not found (HTTP 404)") from exc
            raise FetchError(href, f"HTTP {exc.code}") from exc
        except (urllib.error.URLError, OSError) as exc:
            raise FetchError(href, f"network failure: {exc}") from exc
    else:
        path = href[7:] if href.startswith("file://") else href
        try:
            with open(path, "rb") as fh:
                data = fh.read(max_bytes + 1)
        except FileNotFoundError as exc:
            raise NotFoundError(href, "not found") from exc
        except OSError as exc:
            raise FetchError(href, str(exc)) from exc
    if len(data) > max_bytes:
        raise SizeLimitError(href, f"document exceeds {max_bytes} bytes")
    return data


@dataclass(frozen=True)
class StacAsset:
    key: str
    href: str
    media_type: str
    role: str  # "data" | "quality"


@dataclass(frozen=True)
class StacItem:
    id: str
    collection: str
    bbox: tuple[float, float, float, float]
    datetime: datetime
    epsg: int
    transform: tuple[float, float, float, float]  # origin_x, pixel_width, origin_y, pixel_height
    shape: tuple[int, int]  # rows, cols
    assets: Mapping[str, StacAsset]
    # location of the item document; relative asset hrefs resolve against it
    self_href: str = field(default="", compare=False)

    @property
    def data_bands(self) -> frozenset[str]:
        return frozenset(k for k, a in self.assets.items() if a.role == "data")

    @property
    def quality_asset(self) -> StacAsset | None:
        for key in sorted(self.assets):
            if self.assets[key].role == "quality":
                return self.assets[key]
        return None

    def locate(self, key: str) -> str:
        return resolve_href(self.self_href, self.assets[key].href)

    def footprint(self) -> tuple[float, float, float, float]:
        """Extent of the pixel grid in the item's own CRS."""
        ox, pw, oy, ph = self.transform
        rows, cols = self.shape
        return (ox, oy + rows * ph, ox + cols * pw, oy)


@dataclass(frozen=True)
class Catalog:
    root: str
    items: tuple[StacItem, ...]
    collections: frozenset[str]

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class SearchQuery:
    bbox: tuple[float, float, float, float] | None = None
    time_range: tuple[datetime, datetime] | None = None
    collections: frozenset[str] | None = None
    required_bands: frozenset[str] | None = None

    def __post_init__(self) -> None:
        if self.bbox is not None:
            minx, miny, maxx, maxy = self.bbox
            if minx > maxx or miny > maxy:
                raise ConfigError(f"inverted bbox {self.bbox}")
        if self.time_range is not None:
            start, end = self.time_range
            if start > end:
                raise ConfigError(f"start {format_datetime(start)} is after end {format_datetime(end)}")


def _require(doc: Mapping[str, Any], key: str, path: str, kind: type | tuple[type, ...]) -> Any:
    if key not in doc:
        raise CatalogError(path, key, "missing")
    value = doc[key]
    if not isinstance(value, kind) or isinstance(value, bool):
        raise CatalogError(path, key, f"expected {kind}, got {type(value).__name__}")
    return value


def _numbers(value: Any, n: int, path: str, name: str) -> tuple[float, ...]:
    if (
        not isinstance(value, list)
        or len(value) != n
        or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
    ):
        raise CatalogError(path, name, f"expected {n} numbers")
    return tuple(float(v) for v in value)


def parse_item(doc: Any, path: str) -> StacItem:
    """Validate an item document and build a :class:`StacItem`."""
    if not isinstance(doc, dict):
        raise CatalogError(path, None, "item document is not an object")
    item_id = _require(doc, "id", path, str)
    if not item_id:
        raise CatalogError(path, "id", "empty")
    collection = _require(doc, "collection", path, str)
    bbox = _numbers(doc.get("bbox"), 4, path, "bbox")
    if bbox[0] > bbox[2] or bbox[1] > bbox[3]:
        raise CatalogError(path, "bbox", "inverted")
    props = _require(doc, "properties", path, dict)
    try:
        when = parse_datetime(props.get("datetime"))
    except ValueError as exc:
        raise CatalogError(path, "properties.datetime", str(exc)) from None
    epsg = props.get("epsg")
    if not isinstance(epsg, int) or isinstance(epsg, bool) or epsg <= 0:
        raise CatalogError(path, "properties.epsg", "expected a positive integer")
    transform = _numbers(props.get("transform"), 4, path, "properties.transform")
    if transform[1] <= 0:
        raise CatalogError(path, "properties.transform", "pixel_width must be > 0")
    if transform[3] >= 0:
        raise CatalogError(path, "properties.transform", "pixel_height must be < 0")
    shape = props.get("shape")
    if (
        not isinstance(shape, list)
        or len(shape) != 2
        or not all(isinstance(v, int) and not isinstance(v, bool) and v > 0 for v in shape)
    ):
        raise CatalogError(path, "properties.shape", "expected 2 positive integers")
    raw_assets = _require(doc, "assets", path, dict)
    assets: dict[str, StacAsset] = {}
    for key, raw in raw_assets.items():
        where = f"assets.{key}"
        if not isinstance(raw, dict):
            raise CatalogError(path, where, "asset is not an object")
        href = raw.get("href")
        if not isinstance(href, str) or not href:
            raise CatalogError(path, f"{where}.href", "must be a non-empty string")
        role = raw.get("role")
        if role not in ("data", "quality"):
            raise CatalogError(path, f"{where}.role", f"expected 'data' or 'quality', got {role!r}")
        assets[key] = StacAsset(key=key, href=href, media_type=str(raw.get("type", "")), role=role)
    return StacItem(
        id=item_id,
        collection=collection,
        bbox=bbox,  # type: ignore[arg-type]
        datetime=when,
        epsg=epsg,
        transform=transform,  # type: ignore[arg-type]
        shape=(shape[0], shape[1]),
        assets=assets,
        self_href=path,
    )


def _load_json(href: str, max_bytes: int) -> Any:
    raw = fetch_document(href, max_bytes)
    try:
        return json.loads(raw)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CatalogError(href, None, f"malformed JSON: {exc}") from None


def load_catalog(root: str, max_bytes: int = DEFAULT_MAX_BYTES) -> Catalog:
    """Load every item reachable from ``root`` through item/child links."""
    if not is_url(root) and os.path.isdir(root):
        root = os.path.join(root, "catalog.json")
    items: list[StacItem] = []
    seen_ids: dict[str, str] = {}
    visited: set[str] = set()
    pending = [root]
    while pending:
        href = pending.pop(0)
        if href in visited:
            continue
        visited.add(href)
        doc = _load_json(href, max_bytes)
        links = doc.get("links", []) if isinstance(doc, dict) else None
        if not isinstance(links, list):
            raise CatalogError(href, "links", "expected an array")
        for i, link in enumerate(links):
            if not isinstance(link, dict) or not isinstance(link.get("href"), str):
                raise CatalogError(href, f"links[{i}]", "expected an object with an href")
            target = resolve_href(href, link["href"])
            if link.get("rel") == "item":
                item = parse_item(_load_json(target, max_bytes), target)
                if item.id in seen_ids:
                    raise CatalogError(target, "id", f"duplicate item id {item.id!r} (also in {seen_ids[item.id]})")
                seen_ids[item.id] = target
                items.append(item)
            elif link.get("rel") == "child":
                pending.append(target)
    return Catalog(root=root, items=tuple(items), collections=frozenset(i.collection for i in items))


def _bbox_intersects(a: Iterable[float], b: Iterable[float]) -> bool:
    aminx, aminy, amaxx, amaxy = a
    bminx, bminy, bmaxx, bmaxy = b
    return aminx <= bmaxx and bminx <= amaxx and aminy <= bmaxy and bminy <= amaxy


def matches(item: StacItem, query: SearchQuery) -> bool:
    if query.bbox is not None and not _bbox_intersects(item.bbox, query.bbox):
        return False
    if query.time_range is not None:
        start, end = query.time_range
        if not start <= item.datetime <= end:
            return False
    if query.collections is not None and item.collection not in query.collections:
        return False
    if query.required_bands is not None and not query.required_bands <= item.data_bands:
        return False
    return True


def search(catalog: Catalog, query: SearchQuery) -> list[StacItem]:
    """Items matching every predicate of ``query``, sorted by (datetime, id).

    Touches metadata only; no asset is fetched.
    """
    hits = [item for item in catalog.items if matches(item, query)]
    hits.sort(key=lambda item: (item.datetime, item.id))
    return hits

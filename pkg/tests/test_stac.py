import http.server
import json
import os
import threading
from datetime import datetime, timezone

import numpy as np
import oracles
import pytest
from gen import random_item, random_query
from hypothesis import given
from hypothesis import strategies as st

from smartcube.errors import CatalogError, ConfigError, NotFoundError, SizeLimitError
from smartcube.geo import GridSpec
from smartcube.stac import (
    Catalog,
    SearchQuery,
    fetch_document,
    format_datetime,
    load_catalog,
    parse_datetime,
    search,
)
from smartcube.synthetic import item_document, write_catalog


def _doc(item_id, when="2021-03-01T00:00:00Z", bbox=(0, 0, 1, 1), **props):
    base = {
        "id": item_id,
        "collection": "c",
        "bbox": list(bbox),
        "properties": {"datetime": when, "epsg": 3857, "transform": [0, 10, 0, -10], "shape": [4, 4]},
        "assets": {"b1": {"href": "b1.json", "type": "application/x-sgr", "role": "data"}},
        "links": [],
    }
    base["properties"].update(props)
    return base


# datetimes ------------------------------------------------------------------


def test_parse_datetime_z_only():
    assert parse_datetime("2021-05-06T07:08:09Z") == datetime(2021, 5, 6, 7, 8, 9, tzinfo=timezone.utc)
    assert parse_datetime("2021-05-06T07:08:09.25Z").microsecond == 250000
    for bad in ("2021-05-06T07:08:09+00:00", "2021-05-06 07:08:09Z", "2021-05-06", "2021-05-06T07:08:09"):
        with pytest.raises(ValueError):
            parse_datetime(bad)


@given(st.datetimes(min_value=datetime(1970, 1, 1), max_value=datetime(2200, 1, 1), timezones=st.just(timezone.utc)))
def test_datetime_round_trip(value):
    assert parse_datetime(format_datetime(value)) == value


# fetch ----------------------------------------------------------------------


def test_fetch_local_and_missing(tmp_path):
    p = tmp_path / "doc.bin"
    p.write_bytes(b"\x00payload\xff")
    assert fetch_document(str(p)) == b"\x00payload\xff"
    assert fetch_document("file://" + str(p)) == b"\x00payload\xff"
    with pytest.raises(NotFoundError) as err:
        fetch_document(str(tmp_path / "nope.json"))
    assert "nope.json" in str(err.value)


def test_fetch_size_limit(tmp_path):
    p = tmp_path / "big.bin"
    p.write_bytes(b"x" * 101)
    assert len(fetch_document(str(p), max_bytes=101)) == 101
    with pytest.raises(SizeLimitError) as err:
        fetch_document(str(p), max_bytes=100)
    assert str(p) in str(err.value)


@pytest.fixture
def http_root(tmp_path):
    """Serve ``tmp_path`` over loopback HTTP with a redirect chain under /hop/<n>."""

    class Handler(http.server.SimpleHTTPRequestHandler):
        def __init__(self, *a, **kw):
            super().__init__(*a, directory=str(tmp_path), **kw)

        def do_GET(self):
            if self.path.startswith("/hop/"):
                n = int(self.path.split("/")[2])
                self.send_response(302)
                self.send_header("Location", f"/hop/{n - 1}" if n > 1 else "/doc.bin")
                self.end_headers()
                return
            super().do_GET()

        def log_message(self, *args):
            pass

    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield tmp_path, f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    server.server_close()


def test_http_fetch_byte_identical(http_root):
    root, url = http_root
    payload = bytes(np.random.default_rng(3).integers(0, 256, 5000, dtype=np.uint8))
    (root / "doc.bin").write_bytes(payload)
    assert fetch_document(url + "/doc.bin") == fetch_document(str(root / "doc.bin")) == payload
    with pytest.raises(NotFoundError):
        fetch_document(url + "/missing.bin")


def test_http_redirect_limit(http_root):
    root, url = http_root
    (root / "doc.bin").write_bytes(b"ok")
    assert fetch_document(url + "/hop/3") == b"ok"
    with pytest.raises(Exception) as err:
        fetch_document(url + "/hop/4")
    assert "hop/4" in str(err.value)


def test_catalog_over_http(http_root):
    root, url = http_root
    write_catalog(str(root), [_doc("a"), _doc("b")])
    cat = load_catalog(url + "/catalog.json")
    assert sorted(i.id for i in cat.items) == ["a", "b"]
    assert cat.items[0].locate("b1").startswith(url + "/items/")


# load -----------------------------------------------------------------------


def test_empty_catalog(tmp_path):
    write_catalog(str(tmp_path), [])
    cat = load_catalog(str(tmp_path))
    assert len(cat) == 0 and cat.collections == frozenset()


def test_three_items_match_minimal_parser(tmp_path):
    docs = [_doc("x1", "2021-01-02T00:00:00Z"), _doc("x2", "2021-01-01T00:00:00Z"), _doc("x3", bbox=(5, 5, 6, 7))]
    write_catalog(str(tmp_path), docs)
    cat = load_catalog(str(tmp_path / "catalog.json"))
    ref = {d["id"]: d for d in oracles.read_items(str(tmp_path))}
    assert [i.id for i in cat.items] == ["x1", "x2", "x3"]
    for item in cat.items:
        d = ref[item.id]
        assert list(item.bbox) == d["bbox"]
        assert item.datetime == oracles.parse_when(d["properties"]["datetime"])
        assert list(item.transform) == d["properties"]["transform"]
        assert list(item.shape) == d["properties"]["shape"]
        assert {k: a.href for k, a in item.assets.items()} == {k: a["href"] for k, a in d["assets"].items()}


def test_duplicate_id_rejected(tmp_path):
    write_catalog(str(tmp_path), [_doc("same")])
    os.rename(tmp_path / "items" / "same.json", tmp_path / "items" / "one.json")
    write_catalog(str(tmp_path / "sub"), [_doc("same")])
    with open(tmp_path / "catalog.json") as fh:
        root = json.load(fh)
    root["links"] = [{"rel": "item", "href": "items/one.json"}, {"rel": "child", "href": "sub/catalog.json"}]
    (tmp_path / "catalog.json").write_text(json.dumps(root))
    with pytest.raises(CatalogError, match="duplicate"):
        load_catalog(str(tmp_path))


def test_child_links_followed(tmp_path):
    write_catalog(str(tmp_path / "child"), [_doc("deep")])
    (tmp_path / "catalog.json").write_text(json.dumps({"links": [{"rel": "child", "href": "child/catalog.json"}]}))
    assert [i.id for i in load_catalog(str(tmp_path)).items] == ["deep"]


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda d: d.update(id=5), "id"),
        (lambda d: d.update(bbox=[1, 0, 0, 1]), "bbox"),
        (lambda d: d["properties"].update(datetime="2021-01-01T00:00:00+01:00"), "properties.datetime"),
        (lambda d: d["properties"].update(epsg=-1), "properties.epsg"),
        (lambda d: d["properties"].update(transform=[0, 10, 0, 10]), "properties.transform"),
        (lambda d: d["properties"].update(shape=[0, 4]), "properties.shape"),
        (lambda d: d["assets"]["b1"].update(role="thumbnail"), "assets.b1.role"),
        (lambda d: d["assets"]["b1"].update(href=""), "assets.b1.href"),
    ],
)
def test_invalid_item_diagnostics(tmp_path, mutate, field):
    doc = _doc("bad")
    mutate(doc)
    write_catalog(str(tmp_path), [])
    (tmp_path / "items" / "bad.json").write_text(json.dumps(doc))
    (tmp_path / "catalog.json").write_text(json.dumps({"links": [{"rel": "item", "href": "items/bad.json"}]}))
    with pytest.raises(CatalogError) as err:
        load_catalog(str(tmp_path))
    assert err.value.field == field
    assert err.value.path.endswith("bad.json")


def test_malformed_json(tmp_path):
    (tmp_path / "catalog.json").write_text("{not json")
    with pytest.raises(CatalogError, match="malformed"):
        load_catalog(str(tmp_path))


def test_write_then_load_is_identity(tmp_path):
    grid = GridSpec(3857, 1000.0, 2000.0, 10.0, -10.0, 7, 5)
    when = datetime(2021, 6, 1, 12, 30, tzinfo=timezone.utc)
    assets = {
        "b1": {"href": "../assets/b1.json", "type": "application/x-sgr", "role": "data"},
        "qa": {"href": "../assets/qa.json", "type": "application/x-sgr", "role": "quality"},
    }
    doc = item_document("it", "col", when, grid, assets)
    write_catalog(str(tmp_path), [doc])
    (item,) = load_catalog(str(tmp_path)).items
    assert (item.id, item.collection, item.datetime, item.epsg) == ("it", "col", when, 3857)
    assert item.transform == grid.transform and item.shape == grid.shape
    assert item.data_bands == {"b1"} and item.quality_asset.key == "qa"
    assert item.locate("b1") == os.path.normpath(str(tmp_path / "assets" / "b1.json"))


# search ---------------------------------------------------------------------


def _catalog(items):
    return Catalog("mem", tuple(items), frozenset(i.collection for i in items))


def test_empty_query_returns_everything_sorted():
    rng = np.random.default_rng(0)
    items = [random_item(rng, i) for i in range(50)]
    got = search(_catalog(items), SearchQuery())
    assert len(got) == 50
    keys = [(i.datetime, i.id) for i in got]
    assert keys == sorted(keys) and len(set(keys)) == len(keys)


def test_disjoint_bbox_is_empty():
    rng = np.random.default_rng(1)
    items = [random_item(rng, i) for i in range(30)]
    assert search(_catalog(items), SearchQuery(bbox=(100, 50, 101, 51))) == []


def test_touching_bbox_edges_intersect():
    item = random_item(np.random.default_rng(2), 0)
    minx, miny, maxx, maxy = item.bbox
    assert search(_catalog([item]), SearchQuery(bbox=(maxx, maxy, maxx + 1, maxy + 1))) == [item]
    assert search(_catalog([item]), SearchQuery(bbox=(maxx + 1e-9, miny, maxx + 1, maxy))) == []


def test_query_invariants():
    with pytest.raises(ConfigError):
        SearchQuery(bbox=(1, 0, 0, 1))
    t = datetime(2021, 1, 1, tzinfo=timezone.utc)
    with pytest.raises(ConfigError):
        SearchQuery(time_range=(t.replace(day=2), t))


@given(st.integers(0, 2**32 - 1))
def test_search_matches_linear_scan(seed):
    rng = np.random.default_rng(seed)
    items = [random_item(rng, i) for i in range(60)]
    q = random_query(rng)
    got = search(_catalog(items), q)
    assert [i.id for i in got] == oracles.linear_search(items, q.bbox, q.time_range, q.collections, q.required_bands)


@given(st.integers(0, 2**32 - 1))
def test_adding_predicates_narrows(seed):
    rng = np.random.default_rng(seed)
    items = [random_item(rng, i) for i in range(40)]
    cat = _catalog(items)
    q1, extra = random_query(rng), random_query(rng)
    q2 = SearchQuery(
        bbox=q1.bbox or extra.bbox,
        time_range=q1.time_range or extra.time_range,
        collections=q1.collections or extra.collections,
        required_bands=q1.required_bands or extra.required_bands,
    )
    wide = {i.id for i in search(cat, q1)}
    assert {i.id for i in search(cat, q2)} <= wide
    assert search(cat, q1) == search(cat, q1)

"""On-disk chunked cube store (``smartcube/1``).

Layout: a directory holding ``cube.json`` and one raw little-endian file per
chunk, ``c.<ti>.<bi>.<yi>.<xi>.bin``, row-major in (t, band, y, x) order.
Edge chunks are truncated to the cube extent, never padded.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import os
import tempfile
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from datetime import datetime

import numpy as np

from . import iostats
from .errors import ConfigError, MissingChunkError, StoreError, VersionMismatchError
from .geo import GridSpec, check_nodata, numpy_dtype
from .stac import format_datetime, parse_datetime

FORMAT_VERSION = "smartcube/1"
METADATA = "cube.json"

ChunkIndex = tuple[int, int, int, int]


def chunk_name(idx: ChunkIndex) -> str:
    return "c.{}.{}.{}.{}.bin".format(*idx)


@dataclass(frozen=True)
class CubeSchema:
    frames: tuple[tuple[datetime, str], ...]
    bands: tuple[str, ...]
    grid: GridSpec
    dtype: str
    nodata: float
    chunk: tuple[int, int, int, int]

    def __post_init__(self) -> None:
        object.__setattr__(self, "frames", tuple((dt, str(i)) for dt, i in self.frames))
        object.__setattr__(self, "bands", tuple(self.bands))
        object.__setattr__(self, "chunk", tuple(int(c) for c in self.chunk))
        for a, b in zip(self.frames, self.frames[1:]):
            if not a < b:
                raise ConfigError(f"frames not strictly ascending by (datetime, id): {a[1]} then {b[1]}")
        if not self.bands:
            raise ConfigError("a cube needs at least one band")
        if len(set(self.bands)) != len(self.bands):
            raise ConfigError(f"duplicate band names in {self.bands}")
        if len(self.chunk) != 4 or any(c <= 0 for c in self.chunk):
            raise ConfigError(f"chunk dims must be 4 positive integers, got {self.chunk}")
        if self.dtype not in ("u8", "u16", "f32"):
            raise ConfigError(f"cube dtype must be u8, u16 or f32, got {self.dtype!r}")
        check_nodata(self.dtype, self.nodata)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (len(self.frames), len(self.bands), self.grid.height, self.grid.width)

    @property
    def np_dtype(self) -> np.dtype:
        return numpy_dtype(self.dtype)

    @property
    def chunk_counts(self) -> tuple[int, int, int, int]:
        return tuple(math.ceil(n / c) for n, c in zip(self.shape, self.chunk))  # type: ignore[return-value]

    def chunk_indices(self) -> Iterator[ChunkIndex]:
        yield from itertools.product(*(range(n) for n in self.chunk_counts))

    def chunk_bounds(self, idx: ChunkIndex) -> tuple[tuple[int, int], ...]:
        """Half-open index ranges covered by chunk ``idx``, clipped at the edges."""
        return tuple((i * c, min((i + 1) * c, n)) for i, c, n in zip(idx, self.chunk, self.shape))

    def chunk_shape(self, idx: ChunkIndex) -> tuple[int, ...]:
        return tuple(hi - lo for lo, hi in self.chunk_bounds(idx))

    def overlapping(self, ranges: Sequence[tuple[int, int]]) -> Iterator[ChunkIndex]:
        """Chunk indices whose extent intersects every half-open range in ``ranges``."""
        per_dim = [range(lo // c, (hi - 1) // c + 1) for (lo, hi), c in zip(ranges, self.chunk)]
        yield from itertools.product(*per_dim)

    def band_index(self, name: str) -> int:
        try:
            return self.bands.index(name)
        except ValueError:
            raise ConfigError(f"unknown band {name!r}; cube has {list(self.bands)}") from None

    def with_frames(self, frames: Sequence[tuple[datetime, str]]) -> CubeSchema:
        return CubeSchema(tuple(frames), self.bands, self.grid, self.dtype, self.nodata, self.chunk)

    def to_doc(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "frames": [[format_datetime(dt), item_id] for dt, item_id in self.frames],
            "bands": list(self.bands),
            "grid": self.grid.to_dict(),
            "dtype": self.dtype,
            "nodata": self.nodata,
            "chunk": list(self.chunk),
        }

    @classmethod
    def from_doc(cls, doc: dict, where: str = METADATA) -> CubeSchema:
        version = doc.get("format_version") if isinstance(doc, dict) else None
        if version != FORMAT_VERSION:
            raise VersionMismatchError(f"{where}: format_version {version!r}, expected {FORMAT_VERSION!r}")
        try:
            return cls(
                frames=tuple((parse_datetime(dt), str(i)) for dt, i in doc["frames"]),
                bands=tuple(doc["bands"]),
                grid=GridSpec.from_dict(doc["grid"]),
                dtype=str(doc["dtype"]),
                nodata=float(doc["nodata"]),
                chunk=tuple(doc["chunk"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise StoreError(f"{where}: invalid cube metadata: {exc}") from None


def metadata_bytes(schema: CubeSchema) -> bytes:
    return (json.dumps(schema.to_doc(), indent=1, sort_keys=True) + "\n").encode()


def _atomic_write(path: str, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path), prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_if_changed(path: str, data: bytes) -> bool:
    """Write ``data`` unless ``path`` already holds identical bytes.  Returns True on write."""
    try:
        with open(path, "rb") as fh:
            existing = hashlib.sha256(fh.read()).digest()
        if existing == hashlib.sha256(data).digest():
            return False
    except FileNotFoundError:
        pass
    _atomic_write(path, data)
    return True


def write_chunk(path: str, idx: ChunkIndex, block: np.ndarray) -> bool:
    """Write one chunk file (little-endian, C order) unless identical bytes exist."""
    data = np.ascontiguousarray(block, dtype=block.dtype.newbyteorder("<")).tobytes()
    written = write_if_changed(os.path.join(path, chunk_name(idx)), data)
    if written:
        iostats.record(iostats.CHUNK_WRITES)
    return written


def read_metadata(path: str) -> CubeSchema:
    meta = os.path.join(path, METADATA)
    try:
        with open(meta, "rb") as fh:
            doc = json.loads(fh.read())
    except FileNotFoundError:
        raise StoreError(f"{path}: no {METADATA} (not a cube store)") from None
    except (OSError, ValueError) as exc:
        raise StoreError(f"{meta}: unreadable metadata: {exc}") from None
    return CubeSchema.from_doc(doc, meta)


def prepare_store(path: str, schema: CubeSchema) -> None:
    """Create ``path`` for writing ``schema``; an existing store must match it exactly."""
    if os.path.exists(os.path.join(path, METADATA)):
        existing = read_metadata(path)
        if existing != schema:
            raise StoreError(f"{path}: existing store has a different schema")
    os.makedirs(path, exist_ok=True)


def finalize_store(path: str, schema: CubeSchema) -> CubeStore:
    """Check every chunk file exists, then write metadata (last)."""
    for idx in schema.chunk_indices():
        if not os.path.exists(os.path.join(path, chunk_name(idx))):
            raise MissingChunkError(path, idx)
    write_if_changed(os.path.join(path, METADATA), metadata_bytes(schema))
    return CubeStore(path, schema)


@dataclass(frozen=True)
class CubeStore:
    path: str
    schema: CubeSchema
    format_version: str = FORMAT_VERSION

    def read_chunk(self, idx: ChunkIndex) -> np.ndarray:
        fname = os.path.join(self.path, chunk_name(idx))
        try:
            with open(fname, "rb") as fh:
                raw = fh.read()
        except FileNotFoundError:
            raise MissingChunkError(self.path, idx) from None
        iostats.record(iostats.CHUNK_READS)
        shape = self.schema.chunk_shape(idx)
        expected = int(np.prod(shape)) * self.schema.np_dtype.itemsize
        if len(raw) != expected:
            raise StoreError(f"{fname}: {len(raw)} bytes, expected {expected}")
        return np.frombuffer(raw, dtype=self.schema.np_dtype).reshape(shape)


def open_store(path: str) -> CubeStore:
    """Open and verify a store: metadata parses and every chunk file exists."""
    if not os.path.isdir(path):
        raise StoreError(f"{path}: no such store")
    schema = read_metadata(path)
    for idx in schema.chunk_indices():
        if not os.path.exists(os.path.join(path, chunk_name(idx))):
            raise MissingChunkError(path, idx)
    return CubeStore(path, schema)


def store_hash(path: str) -> str:
    """SHA-256 over ``cube.json`` and every chunk file (name and bytes), in sorted order."""
    h = hashlib.sha256()
    names = sorted(n for n in os.listdir(path) if n == METADATA or (n.startswith("c.") and n.endswith(".bin")))
    for name in names:
        with open(os.path.join(path, name), "rb") as fh:
            data = fh.read()
        h.update(name.encode() + b"\0" + len(data).to_bytes(8, "little") + data)
    return h.hexdigest()

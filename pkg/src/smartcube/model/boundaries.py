"""Construction-site outlines from per-frame probability maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels


@dataclass(frozen=True)
class Component:
    label: int
    area: int
    pixels: frozenset[tuple[int, int]]
    boundary: frozenset[tuple[int, int]]

    @property
    def bbox(self) -> tuple[int, int, int, int]:
        rows = [r for r, _ in self.pixels]
        cols = [c for _, c in self.pixels]
        return (min(rows), min(cols), max(rows) + 1, max(cols) + 1)


def boundary_mask(labels: np.ndarray) -> np.ndarray:
    """Pixels with at least one 4-neighbour outside their own component (border counts as outside)."""
    padded = np.pad(labels, 1, constant_values=0)
    core = padded[1:-1, 1:-1]
    edge = np.zeros(labels.shape, dtype=bool)
    for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        edge |= padded[1 + dr : padded.shape[0] - 1 + dr, 1 + dc : padded.shape[1] - 1 + dc] != core
    return edge & (labels > 0)


def extract_boundaries(prob: np.ndarray, threshold: float = 0.5, min_area: int = 4) -> list[Component]:
    """4-connected components of ``prob >= threshold`` with at least ``min_area`` pixels.

    Components are returned in raster order of their first pixel.
    """
    prob = np.asarray(prob)
    if prob.ndim != 2:
        raise ValueError(f"expected a 2-D probability frame, got shape {prob.shape}")
    labels, count = kernels.label_components(prob >= threshold)
    edge = boundary_mask(labels)
    out = []
    for lab in range(1, count + 1):
        rows, cols = np.nonzero(labels == lab)
        if rows.size < min_area:
            continue
        on_edge = edge[rows, cols]
        out.append(
            Component(
                label=lab,
                area=int(rows.size),
                pixels=frozenset(zip(rows.tolist(), cols.tolist())),
                boundary=frozenset(zip(rows[on_edge].tolist(), cols[on_edge].tolist())),
            )
        )
    return out


def write_pgm(path: str, prob: np.ndarray, components: list[Component] | None = None) -> None:
    """Binary PGM (P5, maxval 255) preview; boundary pixels burned to 255."""
    img = np.clip(np.rint(np.asarray(prob, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    for comp in components or ():
        for r, c in comp.boundary:
            img[r, c] = 255
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())

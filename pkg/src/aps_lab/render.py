"""Per-level grayscale PGM (P5) heatmaps of loss fields and assignments.

Loss maps: every cell covered by at least one instance takes that
instance's loss (where instances overlap, the one with the smallest
``cls + reg`` at the cell, ties to the smaller id).  Covered values map
linearly from ``[min, max]`` of the map onto ``[0, 255]`` via
``floor(255 * (v - min) / (max - min) + 0.5)``; a constant map renders
covered cells at 255.  Uncovered cells are 0.  Assignment maps are 255 at
positives and 0 elsewhere.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .geometry import PointId, PyramidGrid
from .losses import LossField

WHATS = ("cls", "reg", "gap", "assignment")


def loss_maps(grid: PyramidGrid, fields: Mapping[int, LossField], what: str) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Per level: (values, covered mask), both ``(grid_h, grid_w)``."""
    out = {}
    for lv in grid.levels:
        values = np.zeros((lv.grid_h, lv.grid_w))
        best = np.full((lv.grid_h, lv.grid_w), np.inf)
        covered = np.zeros((lv.grid_h, lv.grid_w), dtype=bool)
        for iid in sorted(fields):
            ll = fields[iid].levels.get(lv.level_index)
            if ll is None or len(ll) == 0:
                continue
            xs, ys = ll.cells[:, 0], ll.cells[:, 1]
            total = ll.total
            # strict < keeps the smaller id on ties (ids visited ascending)
            win = total < best[ys, xs]
            if what == "cls":
                v = ll.cls
            elif what == "reg":
                v = ll.reg
            elif what == "gap":
                v = np.abs(ll.cls - ll.reg)
            else:
                raise ValueError(f"unknown loss map {what!r}")
            values[ys[win], xs[win]] = v[win]
            best[ys[win], xs[win]] = total[win]
            covered[ys, xs] = True
        out[lv.level_index] = (values, covered)
    return out


def to_gray(values: np.ndarray, covered: np.ndarray) -> np.ndarray:
    img = np.zeros(values.shape, dtype=np.uint8)
    if not covered.any():
        return img
    v = values[covered]
    lo, hi = v.min(), v.max()
    if hi > lo:
        img[covered] = np.floor(255.0 * (v - lo) / (hi - lo) + 0.5).astype(np.uint8)
    else:
        img[covered] = 255
    return img


def assignment_map(grid: PyramidGrid, positives: Mapping[int, Sequence[PointId]]) -> dict[int, np.ndarray]:
    maps = {lv.level_index: np.zeros((lv.grid_h, lv.grid_w), dtype=np.uint8) for lv in grid.levels}
    for pts in positives.values():
        for p in pts:
            maps[p.level][p.cell_y, p.cell_x] = 255
    return maps


def encode_pgm(img: np.ndarray) -> bytes:
    img = np.ascontiguousarray(img, dtype=np.uint8)
    h, w = img.shape
    return b"P5\n%d %d\n255\n" % (w, h) + img.tobytes()


def decode_pgm(data: bytes) -> np.ndarray:
    """Inverse of :func:`encode_pgm` (single-space/newline headers only)."""
    parts = data.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5" or parts[2] != b"255":
        raise ValueError("not an 8-bit P5 image")
    w, h = (int(t) for t in parts[1].split())
    pix = np.frombuffer(parts[3], dtype=np.uint8)
    if pix.size != w * h:
        raise ValueError(f"expected {w * h} pixels, got {pix.size}")
    return pix.reshape(h, w)


def write_pgm(path: str | Path, img: np.ndarray) -> None:
    Path(path).write_bytes(encode_pgm(img))

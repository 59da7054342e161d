"""Feature-pyramid point grids, boxes and point-in-box membership.

Anchor points sit at half-stride offsets: cell ``(cx, cy)`` of a level with
stride ``s`` is centred at ``(s * (cx + 0.5), s * (cy + 0.5))``.  A point is
inside a box only when its centre lies strictly inside (boundary excluded).
Every ordered point list produced here is row-major: ``cell_y`` first, then
``cell_x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np


class GeometryError(ValueError):
    """Invalid box, level or point."""


@dataclass(frozen=True)
class Box:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise GeometryError(f"non-finite box coordinates {coords}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise GeometryError(f"degenerate box {coords}")

    @classmethod
    def from_seq(cls, seq: Sequence[float]) -> "Box":
        if len(seq) != 4:
            raise GeometryError(f"box needs 4 coordinates, got {len(seq)}")
        return cls(*(float(v) for v in seq))

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))

    def contains(self, x: float, y: float, strict: bool = True) -> bool:
        if strict:
            return self.x_min < x < self.x_max and self.y_min < y < self.y_max
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=np.float64)


@dataclass(frozen=True)
class LevelSpec:
    level_index: int
    stride: float
    grid_w: int
    grid_h: int

    def __post_init__(self):
        if self.level_index < 0:
            raise GeometryError(f"negative level index {self.level_index}")
        if not self.stride >= 1:
            raise GeometryError(f"stride must be >= 1, got {self.stride}")
        if self.grid_w < 1 or self.grid_h < 1:
            raise GeometryError(f"empty grid {self.grid_w}x{self.grid_h}")

    @property
    def num_cells(self) -> int:
        return self.grid_w * self.grid_h


class PointId(NamedTuple):
    level: int
    cell_x: int
    cell_y: int

    def order_key(self) -> tuple[int, int, int]:
        """Global tie-break key: row-major cell position, then level."""
        return (self.cell_y, self.cell_x, self.level)


@dataclass(frozen=True)
class PyramidGrid:
    levels: tuple[LevelSpec, ...]
    image_w: int
    image_h: int

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        if not self.levels:
            raise GeometryError("pyramid needs at least one level")
        if self.image_w < 1 or self.image_h < 1:
            raise GeometryError(f"bad image size {self.image_w}x{self.image_h}")
        for prev, cur in zip(self.levels, self.levels[1:]):
            if cur.level_index <= prev.level_index:
                raise GeometryError("level indices must be strictly increasing")
            if cur.stride <= prev.stride:
                raise GeometryError("strides must be strictly increasing")
        for lv in self.levels:
            # grid may stop short of the image by less than one stride
            if (lv.grid_w + 1) * lv.stride < self.image_w or (lv.grid_h + 1) * lv.stride < self.image_h:
                raise GeometryError(
                    f"level {lv.level_index} grid {lv.grid_w}x{lv.grid_h} at stride "
                    f"{lv.stride} does not cover image {self.image_w}x{self.image_h}"
                )

    @classmethod
    def from_strides(cls, image_w: int, image_h: int, strides: Iterable[float]) -> "PyramidGrid":
        levels = tuple(
            LevelSpec(i, float(s), max(1, math.ceil(image_w / s)), max(1, math.ceil(image_h / s)))
            for i, s in enumerate(strides)
        )
        return cls(levels, image_w, image_h)

    @property
    def level_indices(self) -> tuple[int, ...]:
        return tuple(lv.level_index for lv in self.levels)

    def level(self, level_index: int) -> LevelSpec:
        for lv in self.levels:
            if lv.level_index == level_index:
                return lv
        raise GeometryError(f"no level {level_index} in grid")

    def validate_point(self, p: PointId) -> LevelSpec:
        lv = self.level(p.level)
        if not (0 <= p.cell_x < lv.grid_w and 0 <= p.cell_y < lv.grid_h):
            raise GeometryError(f"{p} outside {lv.grid_w}x{lv.grid_h} grid")
        return lv

    def all_points(self, level_index: int) -> list[PointId]:
        lv = self.level(level_index)
        return [PointId(level_index, x, y) for y in range(lv.grid_h) for x in range(lv.grid_w)]


def point_center(grid: PyramidGrid, p: PointId) -> tuple[float, float]:
    lv = grid.validate_point(p)
    return (lv.stride * (p.cell_x + 0.5), lv.stride * (p.cell_y + 0.5))


def cells_in_box(lv: LevelSpec, box: Box) -> np.ndarray:
    """Integer ``(n, 2)`` array of ``(cell_x, cell_y)`` strictly inside ``box``, row-major."""
    s = lv.stride
    # smallest/largest index whose centre clears the boundary
    x0 = max(0, math.floor(box.x_min / s - 0.5) + 1)
    x1 = min(lv.grid_w - 1, math.ceil(box.x_max / s - 0.5) - 1)
    y0 = max(0, math.floor(box.y_min / s - 0.5) + 1)
    y1 = min(lv.grid_h - 1, math.ceil(box.y_max / s - 0.5) - 1)
    if x1 < x0 or y1 < y0:
        return np.empty((0, 2), dtype=np.int64)
    xs = np.arange(x0, x1 + 1, dtype=np.int64)
    ys = np.arange(y0, y1 + 1, dtype=np.int64)
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    cells = np.stack([gx.ravel(), gy.ravel()], axis=1)
    # float rounding at the boundary: recheck with the exact centre formula
    cx = s * (cells[:, 0] + 0.5)
    cy = s * (cells[:, 1] + 0.5)
    keep = (cx > box.x_min) & (cx < box.x_max) & (cy > box.y_min) & (cy < box.y_max)
    return cells[keep]


def cell_centers(lv: LevelSpec, cells: np.ndarray) -> np.ndarray:
    return lv.stride * (np.asarray(cells, dtype=np.float64) + 0.5)


def points_in_box(grid: PyramidGrid, level: int, box: Box) -> list[PointId]:
    lv = grid.level(level)
    return [PointId(level, int(x), int(y)) for x, y in cells_in_box(lv, box)]


def iou(a: Box, b: Box) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    inter = max(iw, 0.0) * max(ih, 0.0)
    return inter / (a.area + b.area - inter)


def giou(a: Box, b: Box) -> float:
    """Generalized IoU, in (-1, 1]."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    inter = max(iw, 0.0) * max(ih, 0.0)
    union = a.area + b.area - inter
    enclose = (max(a.x_max, b.x_max) - min(a.x_min, b.x_min)) * (
        max(a.y_max, b.y_max) - min(a.y_min, b.y_min)
    )
    return inter / union - (enclose - union) / enclose

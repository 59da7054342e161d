"""Center-region reference assigners used for comparison."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .geometry import Box, PointId, PyramidGrid, cell_centers, cells_in_box

FCOS_RANGES = ((0.0, 64.0), (64.0, 128.0), (128.0, 256.0), (256.0, 512.0), (512.0, math.inf))


@dataclass(frozen=True)
class CenterBaselineConfig:
    radius_in_strides: float = 1.5
    scale_ranges: tuple[tuple[float, float], ...] = FCOS_RANGES

    def __post_init__(self):
        if not self.radius_in_strides > 0:
            raise ValueError("radius must be positive")
        rngs = self.scale_ranges
        if not rngs or rngs[0][0] != 0.0 or rngs[-1][1] != math.inf:
            raise ValueError("scale ranges must span (0, inf)")
        for lo, hi in rngs:
            if not lo < hi:
                raise ValueError(f"empty scale range ({lo}, {hi})")
        for (_, hi), (lo, _) in zip(rngs, rngs[1:]):
            if hi != lo:
                raise ValueError("scale ranges must be contiguous")

    @classmethod
    def for_levels(cls, n_levels: int, radius_in_strides: float = 1.5) -> "CenterBaselineConfig":
        """FCOS partition for 5 levels, otherwise doubling bands from 64 px."""
        if n_levels == len(FCOS_RANGES):
            return cls(radius_in_strides, FCOS_RANGES)
        edges = [0.0] + [64.0 * 2**i for i in range(n_levels - 1)] + [math.inf]
        return cls(radius_in_strides, tuple(zip(edges[:-1], edges[1:])))


class CenterSamplingWarning(UserWarning):
    pass


def owning_level(box: Box, grid: PyramidGrid, cfg: CenterBaselineConfig) -> int | None:
    """Level whose (lo, hi] band holds the box's longer side."""
    if len(cfg.scale_ranges) != len(grid.levels):
        raise ValueError(f"{len(cfg.scale_ranges)} scale ranges for {len(grid.levels)} levels")
    size = max(box.width, box.height)
    for lv, (lo, hi) in zip(grid.levels, cfg.scale_ranges):
        if lo < size <= hi:
            return lv.level_index
    return None


def center_sampling_assign(box: Box, grid: PyramidGrid, cfg: CenterBaselineConfig | None = None) -> list[PointId]:
    cfg = cfg or CenterBaselineConfig.for_levels(len(grid.levels))
    level = owning_level(box, grid, cfg)
    if level is None:
        warnings.warn(f"box size {max(box.width, box.height)} outside all scale ranges", CenterSamplingWarning)
        return []
    lv = grid.level(level)
    cells = cells_in_box(lv, box)
    centers = cell_centers(lv, cells)
    cx, cy = box.center
    r = cfg.radius_in_strides * lv.stride
    keep = (abs(centers[:, 0] - cx) < r) & (abs(centers[:, 1] - cy) < r)
    return [PointId(level, int(x), int(y)) for x, y in cells[keep]]


def all_in_box_assign(box: Box, grid: PyramidGrid) -> list[PointId]:
    return [
        PointId(lv.level_index, int(x), int(y))
        for lv in grid.levels
        for x, y in cells_in_box(lv, box)
    ]

"""Forward focal/GIoU losses and synthetic per-point loss fields.

A synthetic instance has a classification hotspot and a regression hotspot
inside its box.  For every in-box anchor point at distance ``d_c`` from the
classification hotspot the predicted foreground probability is

    p = P_MAX * exp(-d_c**2 / (2 * spread_cls**2))        clamped to (EPS, 1 - EPS)

and the predicted box is the ground-truth box shifted along its own
diagonal by ``SHIFT_GAIN * d_r / spread_reg`` of its width and height, with
``d_r`` the distance to the regression hotspot.  Each loss is thus a
monotone function of the distance to its own hotspot, and both span a
comparable range (roughly 0 to 1.5) across a box.  Losses are the focal loss
of ``p`` and the GIoU loss of the predicted box.  ``noise`` perturbs the
logit of ``p`` and the predicted box corners with seeded Gaussian draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import _kernels
from .geometry import Box, LevelSpec, PointId, PyramidGrid, cell_centers, cells_in_box, giou

FOCAL_ALPHA = 0.25
FOCAL_GAMMA = 2.0
P_MAX = 0.95
EPS = 1e-6
SHIFT_GAIN = 0.25
BOX_NOISE_GAIN = 0.1


class ScenarioError(ValueError):
    """Inconsistent scenario configuration."""


def focal_loss(p, y, alpha: float = FOCAL_ALPHA, gamma: float = FOCAL_GAMMA):
    """Binary focal loss for probability ``p`` of the positive class.

    Works on scalars or arrays; ``p`` must lie strictly inside (0, 1).
    """
    p_arr = np.asarray(p, dtype=np.float64)
    if not np.all((p_arr > 0.0) & (p_arr < 1.0)):
        raise ValueError("focal_loss needs 0 < p < 1")
    y_arr = np.asarray(y)
    pos = -alpha * (1.0 - p_arr) ** gamma * np.log(p_arr)
    neg = -(1.0 - alpha) * p_arr**gamma * np.log1p(-p_arr)
    out = np.where(y_arr == 1, pos, neg)
    return float(out) if out.ndim == 0 else out


def giou_loss(pred: Box, gt: Box) -> float:
    return 1.0 - giou(pred, gt)


def giou_loss_batch(pred: np.ndarray, gt: Box) -> np.ndarray:
    pred = np.ascontiguousarray(pred, dtype=np.float64)
    if pred.size and not np.all((pred[:, 2] > pred[:, 0]) & (pred[:, 3] > pred[:, 1])):
        raise ValueError("degenerate predicted box")
    return 1.0 - _kernels.giou_batch(pred, gt.as_array())


@dataclass(frozen=True)
class InstanceSpec:
    id: int
    class_id: int
    box: Box
    cls_hotspot: tuple[float, float]
    reg_hotspot: tuple[float, float]
    spread_cls: float
    spread_reg: float
    noise: float = 0.0

    def __post_init__(self):
        if self.id < 0:
            raise ScenarioError(f"instance id must be non-negative, got {self.id}")
        for name, (hx, hy) in (("cls", self.cls_hotspot), ("reg", self.reg_hotspot)):
            if not self.box.contains(hx, hy, strict=False):
                raise ScenarioError(f"instance {self.id}: {name} hotspot ({hx}, {hy}) outside box")
        if not (self.spread_cls > 0 and self.spread_reg > 0):
            raise ScenarioError(f"instance {self.id}: spreads must be positive")
        if not self.noise >= 0:
            raise ScenarioError(f"instance {self.id}: noise must be non-negative")


@dataclass(frozen=True)
class ScenarioConfig:
    grid: PyramidGrid
    instances: tuple[InstanceSpec, ...]
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        ids = [inst.id for inst in self.instances]
        if len(set(ids)) != len(ids):
            raise ScenarioError(f"duplicate instance ids {ids}")

    def instance(self, instance_id: int) -> InstanceSpec:
        for inst in self.instances:
            if inst.id == instance_id:
                return inst
        raise ScenarioError(f"no instance {instance_id}")


@dataclass(frozen=True)
class LevelLosses:
    """In-box points of one level with their loss pairs, row-major ordered."""

    level: int
    cells: np.ndarray  # (n, 2) int64 rows of (cell_x, cell_y)
    cls: np.ndarray
    reg: np.ndarray

    def __len__(self) -> int:
        return self.cells.shape[0]

    @property
    def total(self) -> np.ndarray:
        return self.cls + self.reg

    def point_ids(self) -> list[PointId]:
        return [PointId(self.level, int(x), int(y)) for x, y in self.cells]

    def take(self, idx) -> "LevelLosses":
        idx = np.asarray(idx, dtype=np.int64)
        return LevelLosses(self.level, self.cells[idx], self.cls[idx], self.reg[idx])

    @classmethod
    def from_pairs(cls, level: int, cells, cls_loss, reg_loss) -> "LevelLosses":
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
        c = np.asarray(cls_loss, dtype=np.float64).ravel()
        r = np.asarray(reg_loss, dtype=np.float64).ravel()
        if not (len(cells) == len(c) == len(r)):
            raise ValueError("cells and loss vectors differ in length")
        if np.any(~np.isfinite(c)) or np.any(~np.isfinite(r)) or np.any(c < 0) or np.any(r < 0):
            raise ValueError("losses must be finite and non-negative")
        return cls(level, cells, c, r)


@dataclass(frozen=True)
class LossField:
    instance_id: int
    levels: dict[int, LevelLosses] = field(default_factory=dict)

    def __iter__(self) -> Iterator[LevelLosses]:
        return iter(self.levels[k] for k in sorted(self.levels))

    @property
    def num_points(self) -> int:
        return sum(len(lv) for lv in self.levels.values())

    def lookup(self, p: PointId) -> tuple[float, float]:
        lv = self.levels[p.level]
        hit = np.flatnonzero((lv.cells[:, 0] == p.cell_x) & (lv.cells[:, 1] == p.cell_y))
        if hit.size == 0:
            raise KeyError(p)
        i = int(hit[0])
        return float(lv.cls[i]), float(lv.reg[i])

    def pairs(self, points: Sequence[PointId]) -> np.ndarray:
        """``(n, 2)`` array of (cls, reg) for the given points."""
        return np.array([self.lookup(p) for p in points], dtype=np.float64).reshape(-1, 2)


def _level_losses(lv: LevelSpec, inst: InstanceSpec, rng: np.random.Generator) -> LevelLosses:
    box = inst.box
    cells = cells_in_box(lv, box)
    n = len(cells)
    # fixed draw count per level keeps the stream aligned regardless of noise
    logit_noise = rng.standard_normal(n)
    box_noise = rng.standard_normal((n, 4))
    if n == 0:
        return LevelLosses(lv.level_index, cells, np.empty(0), np.empty(0))
    centers = cell_centers(lv, cells)

    d_cls = np.hypot(centers[:, 0] - inst.cls_hotspot[0], centers[:, 1] - inst.cls_hotspot[1])
    p = P_MAX * np.exp(-(d_cls**2) / (2.0 * inst.spread_cls**2))
    if inst.noise > 0:
        p = np.clip(p, EPS, 1.0 - EPS)
        p = 1.0 / (1.0 + np.exp(-(np.log(p / (1.0 - p)) + inst.noise * logit_noise)))
    p = np.clip(p, EPS, 1.0 - EPS)
    cls_loss = focal_loss(p, 1)

    side = math.sqrt(box.area)
    d_reg = np.hypot(centers[:, 0] - inst.reg_hotspot[0], centers[:, 1] - inst.reg_hotspot[1])
    frac = SHIFT_GAIN * d_reg / inst.spread_reg
    pred = np.tile(box.as_array(), (n, 1))
    pred[:, [0, 2]] += (frac * box.width)[:, None]
    pred[:, [1, 3]] += (frac * box.height)[:, None]
    if inst.noise > 0:
        pred += inst.noise * BOX_NOISE_GAIN * side * box_noise
        # keep predicted boxes non-degenerate
        min_side = 1e-3 * side
        pred[:, 2] = np.maximum(pred[:, 2], pred[:, 0] + min_side)
        pred[:, 3] = np.maximum(pred[:, 3], pred[:, 1] + min_side)
    reg_loss = np.clip(giou_loss_batch(pred, box), 0.0, None)
    return LevelLosses(lv.level_index, cells, cls_loss, reg_loss)


def synth_loss_field(cfg: ScenarioConfig, instance_id: int) -> LossField:
    """Deterministic loss field of one instance over every pyramid level."""
    inst = cfg.instance(instance_id)
    rng = np.random.default_rng([cfg.seed, inst.id])
    levels = {lv.level_index: _level_losses(lv, inst, rng) for lv in cfg.grid.levels}
    return LossField(inst.id, levels)


def synth_all(cfg: ScenarioConfig) -> dict[int, LossField]:
    return {inst.id: synth_loss_field(cfg, inst.id) for inst in cfg.instances}

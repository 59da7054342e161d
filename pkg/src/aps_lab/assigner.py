"""Aligned-points label assignment.

Per instance: keep the ``min(K, n)`` lowest combined-loss in-box points of
each level, pick the two levels with the smallest mean candidate loss, score
the pooled candidates of those levels by unfitness (mean of per-task
softmaxes) and misalignment (sigmoid of the absolute loss gap), and split
the geometric mean of the two scores with a two-component GMM.  The
low-score cluster is positive.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .geometry import PointId, PyramidGrid
from .gmm import GmmError, fit_em, responsibilities
from .losses import LevelLosses, LossField

DEFAULT_K = 9
NUM_LEVELS_CHOSEN = 2
NUM_ANCHORS = 3


class AssignmentError(ValueError):
    pass


class NoCandidatesError(AssignmentError):
    """Instance has no in-box point on any level."""


def candidate_count(k: int, in_box_count: int) -> int:
    if k < 1:
        raise AssignmentError(f"K must be >= 1, got {k}")
    return min(k, in_box_count)


def select_candidates(level_points: LevelLosses, n: int) -> LevelLosses:
    """The ``n`` lowest ``cls + reg`` points, ascending; ties go row-major."""
    total = level_points.total
    cells = level_points.cells
    # lexsort: last key is primary
    order = np.lexsort((cells[:, 0], cells[:, 1], total))
    return level_points.take(order[:n])


def select_levels(per_level: Mapping[int, LevelLosses]) -> list[int]:
    means = [(float(np.mean(c.total)), lvl) for lvl, c in per_level.items() if len(c) > 0]
    if not means:
        raise NoCandidatesError("no level has candidates")
    means.sort()
    return sorted(lvl for _, lvl in means[:NUM_LEVELS_CHOSEN])


def _check_pair(cls, reg) -> tuple[np.ndarray, np.ndarray]:
    cls = np.asarray(cls, dtype=np.float64).ravel()
    reg = np.asarray(reg, dtype=np.float64).ravel()
    if cls.shape != reg.shape:
        raise AssignmentError(f"loss vectors differ in length: {cls.size} vs {reg.size}")
    if cls.size == 0:
        raise AssignmentError("empty loss vectors")
    if not (np.all(np.isfinite(cls)) and np.all(np.isfinite(reg))):
        raise AssignmentError("loss vectors must be finite")
    return cls, reg


def softmax(v: np.ndarray) -> np.ndarray:
    e = np.exp(v - v.max())
    return e / e.sum()


def unfitness_scores(cls, reg) -> np.ndarray:
    cls, reg = _check_pair(cls, reg)
    return 0.5 * (softmax(cls) + softmax(reg))


def misalignment_scores(cls, reg) -> np.ndarray:
    cls, reg = _check_pair(cls, reg)
    return 1.0 / (1.0 + np.exp(-np.abs(cls - reg)))


def combined_scores(s_u, s_m) -> np.ndarray:
    s_u = np.asarray(s_u, dtype=np.float64)
    s_m = np.asarray(s_m, dtype=np.float64)
    if s_u.shape != s_m.shape:
        raise AssignmentError("score vectors differ in length")
    if np.any(s_u < 0) or np.any(s_m < 0):
        raise AssignmentError("scores must be non-negative")
    return np.sqrt(s_u * s_m)


def _best_index(points: Sequence[PointId], s: np.ndarray) -> int:
    return min(range(len(points)), key=lambda i: (s[i], points[i].order_key()))


def split_gmm(points: Sequence[PointId], s) -> tuple[list[PointId], list[PointId]]:
    """Split candidates into (positives, negatives) by a 2-component GMM on ``s``.

    Positives are the points whose posterior for the low-mean component
    exceeds 0.5.  When the fit is impossible (fewer than two or identical
    scores) or selects nothing, the single lowest-score point is positive.
    """
    s = np.asarray(s, dtype=np.float64)
    if len(points) != s.size or s.size == 0:
        raise AssignmentError("need one score per candidate and at least one candidate")
    try:
        model = fit_em(s)
        pos_mask = responsibilities(model, s)[:, 0] > 0.5
    except GmmError:
        pos_mask = np.zeros(s.size, dtype=bool)
    if not pos_mask.any():
        pos_mask[_best_index(points, s)] = True
    positives = [p for p, m in zip(points, pos_mask) if m]
    negatives = [p for p, m in zip(points, pos_mask) if not m]
    return positives, negatives


@dataclass(frozen=True)
class InstanceResult:
    instance_id: int
    levels: tuple[int, ...]
    candidates: tuple[PointId, ...]
    cls: np.ndarray = field(repr=False)
    reg: np.ndarray = field(repr=False)
    s_u: np.ndarray = field(repr=False)
    s_m: np.ndarray = field(repr=False)
    s: np.ndarray = field(repr=False)
    positives: tuple[PointId, ...]

    def ranked_positives(self) -> list[PointId]:
        """Positives ordered best score first, ties by point order."""
        idx = {p: i for i, p in enumerate(self.candidates)}
        return sorted(self.positives, key=lambda p: (self.s[idx[p]], p.order_key()))


def assign_instance(loss_field: LossField, k: int = DEFAULT_K) -> InstanceResult:
    per_level = {}
    for lv in loss_field:
        n = candidate_count(k, len(lv))
        per_level[lv.level] = select_candidates(lv, n)
    if not any(len(c) for c in per_level.values()):
        raise NoCandidatesError(f"instance {loss_field.instance_id} covers no anchor point")
    levels = select_levels(per_level)
    chosen = [per_level[lvl] for lvl in levels]
    points = tuple(p for c in chosen for p in c.point_ids())
    cls = np.concatenate([c.cls for c in chosen])
    reg = np.concatenate([c.reg for c in chosen])
    s_u = unfitness_scores(cls, reg)
    s_m = misalignment_scores(cls, reg)
    s = combined_scores(s_u, s_m)
    positives, _ = split_gmm(points, s)
    positives = tuple(sorted(positives, key=PointId.order_key))
    return InstanceResult(loss_field.instance_id, tuple(levels), points, cls, reg, s_u, s_m, s, positives)


@dataclass
class Assignment:
    """Final positives per instance; everything else on the grid is background."""

    positives: dict[int, tuple[PointId, ...]]
    levels: dict[int, tuple[int, ...]]
    unassigned: list[int]
    details: dict[int, InstanceResult] = field(default_factory=dict, repr=False)

    def owner_map(self) -> dict[PointId, int]:
        return {p: iid for iid, pts in self.positives.items() for p in pts}

    def label_maps(self, grid: PyramidGrid) -> dict[int, np.ndarray]:
        """Per level ``(grid_h, grid_w)`` int arrays: owning instance id or -1."""
        maps = {lv.level_index: np.full((lv.grid_h, lv.grid_w), -1, dtype=np.int64) for lv in grid.levels}
        for iid, pts in self.positives.items():
            for p in pts:
                maps[p.level][p.cell_y, p.cell_x] = iid
        return maps

    def background(self, grid: PyramidGrid) -> list[PointId]:
        owned = self.owner_map()
        return [p for lvl in grid.level_indices for p in grid.all_points(lvl) if p not in owned]


def resolve_conflicts(
    results: Mapping[int, InstanceResult], loss_fields: Mapping[int, LossField]
) -> tuple[dict[int, tuple[PointId, ...]], list[int]]:
    """Give every contested point to a single instance.

    A point claimed by several instances goes to the one with the smallest
    ``cls + reg`` at that point (ties: smaller id).  An instance stripped of
    all positives reclaims its best-scored positive; reclaimed points are
    locked, and competing reclaims are settled by the same loss rule.  Each
    round locks at least one instance, so at most ``len(results)`` rounds run.
    Returns the final positives and the ids left empty.
    """

    def cost(iid: int, p: PointId) -> tuple[float, int]:
        c, r = loss_fields[iid].lookup(p)
        return (c + r, iid)

    claims: dict[PointId, list[int]] = {}
    for iid in sorted(results):
        for p in results[iid].positives:
            claims.setdefault(p, []).append(iid)
    owner = {p: min(ids, key=lambda i: cost(i, p)) for p, ids in claims.items()}

    locked: dict[PointId, int] = {}
    rescued: set[int] = set()
    tried: dict[int, set[PointId]] = {iid: set() for iid in results}
    for _ in range(len(results) + 1):
        held: dict[int, int] = {iid: 0 for iid in results}
        for iid in owner.values():
            held[iid] += 1
        empty = [iid for iid in sorted(results) if held[iid] == 0 and iid not in rescued]
        requests: dict[PointId, list[int]] = {}
        for iid in empty:
            options = [p for p in results[iid].ranked_positives() if p not in locked and p not in tried[iid]]
            if options:
                requests.setdefault(options[0], []).append(iid)
        if not requests:
            break
        for p, ids in sorted(requests.items(), key=lambda kv: kv[0].order_key()):
            winner = min(ids, key=lambda i: cost(i, p))
            for i in ids:
                tried[i].add(p)
            owner[p] = winner
            locked[p] = winner
            rescued.add(winner)

    final: dict[int, list[PointId]] = {iid: [] for iid in results}
    for p, iid in owner.items():
        final[iid].append(p)
    out = {iid: tuple(sorted(pts, key=PointId.order_key)) for iid, pts in final.items()}
    empty = sorted(iid for iid, pts in out.items() if not pts)
    return out, empty


def assign_image(loss_fields: Mapping[int, LossField], k: int = DEFAULT_K) -> Assignment:
    results: dict[int, InstanceResult] = {}
    unassigned: list[int] = []
    for iid in sorted(loss_fields):
        try:
            results[iid] = assign_instance(loss_fields[iid], k)
        except NoCandidatesError:
            unassigned.append(iid)
    positives, emptied = resolve_conflicts(results, loss_fields)
    for iid in emptied:
        del positives[iid]
    unassigned = sorted(unassigned + emptied)
    levels = {iid: results[iid].levels for iid in positives}
    return Assignment(positives, levels, unassigned, results)


def reduce_anchors(anchor_losses, num_anchors: int = NUM_ANCHORS) -> tuple[np.ndarray, np.ndarray]:
    """Keep one anchor per point: the one with the smallest ``cls + reg``.

    ``anchor_losses`` has shape ``(n_points, num_anchors, 2)``.  Returns the
    ``(n_points, 2)`` kept loss pairs and the kept anchor indices; ties go to
    the lowest anchor index.
    """
    a = np.asarray(anchor_losses, dtype=np.float64)
    if a.ndim != 3 or a.shape[2] != 2:
        raise AssignmentError(f"expected (points, anchors, 2) losses, got shape {a.shape}")
    if a.shape[1] == 0:
        raise AssignmentError("empty anchor list")
    if a.shape[1] != num_anchors:
        raise AssignmentError(f"expected {num_anchors} anchors per point, got {a.shape[1]}")
    idx = np.argmin(a.sum(axis=2), axis=1)
    return a[np.arange(a.shape[0]), idx], idx

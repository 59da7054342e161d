"""Loss-gap / loss-sum diagnostics and assigner comparison over scenario corpora."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .assigner import DEFAULT_K, assign_image
from .baselines import all_in_box_assign, center_sampling_assign
from .geometry import PointId
from .losses import LossField, ScenarioConfig, synth_all


class UndefinedMetricError(ValueError):
    """Metric requested over an empty positive set."""


def _pairs(positives: Sequence[PointId], loss_field: LossField) -> np.ndarray:
    if len(positives) == 0:
        raise UndefinedMetricError("no positives")
    return loss_field.pairs(positives)


def loss_gap(positives: Sequence[PointId], loss_field: LossField) -> float:
    pr = _pairs(positives, loss_field)
    return float(np.mean(np.abs(pr[:, 0] - pr[:, 1])))


def loss_sum(positives: Sequence[PointId], loss_field: LossField) -> float:
    pr = _pairs(positives, loss_field)
    return float(np.mean(pr[:, 0] + pr[:, 1]))


# An assigner maps (scenario, loss fields, K) to {instance id: positives}.
Assigner = Callable[[ScenarioConfig, Mapping[int, LossField], int], Mapping[int, Sequence[PointId]]]


def run_aps(cfg: ScenarioConfig, fields: Mapping[int, LossField], k: int) -> dict[int, tuple[PointId, ...]]:
    return assign_image(fields, k).positives


def run_center(cfg: ScenarioConfig, fields: Mapping[int, LossField], k: int) -> dict[int, list[PointId]]:
    return {inst.id: center_sampling_assign(inst.box, cfg.grid) for inst in cfg.instances}


def run_all_in_box(cfg: ScenarioConfig, fields: Mapping[int, LossField], k: int) -> dict[int, list[PointId]]:
    return {inst.id: all_in_box_assign(inst.box, cfg.grid) for inst in cfg.instances}


ASSIGNERS: dict[str, Assigner] = {"aps": run_aps, "center": run_center, "all-in-box": run_all_in_box}


@dataclass(frozen=True)
class ScenarioMetrics:
    """Metrics of one assigner on one scenario, pooled over its positives.

    ``mean_loss_gap``/``mean_loss_sum`` are None when there are no positives.
    """

    scenario: int
    positive_count: int
    mean_loss_gap: float | None
    mean_loss_sum: float | None
    per_instance: dict[int, tuple[int, float | None, float | None]]
    error: str | None = None


@dataclass
class AlignmentReport:
    assigner: str
    scenarios: list[ScenarioMetrics] = field(default_factory=list)

    def _ok(self) -> list[ScenarioMetrics]:
        return [m for m in self.scenarios if m.error is None and m.mean_loss_gap is not None]

    @property
    def mean_loss_gap(self) -> float | None:
        ok = self._ok()
        return math.fsum(m.mean_loss_gap for m in ok) / len(ok) if ok else None

    @property
    def mean_loss_sum(self) -> float | None:
        ok = self._ok()
        return math.fsum(m.mean_loss_sum for m in ok) / len(ok) if ok else None

    @property
    def positive_count(self) -> int:
        return sum(m.positive_count for m in self.scenarios if m.error is None)

    @property
    def failures(self) -> list[tuple[int, str]]:
        return [(m.scenario, m.error) for m in self.scenarios if m.error is not None]


@dataclass
class CompareReport:
    reports: dict[str, AlignmentReport]
    win_rates: dict[str, float | None]
    reference: str = "aps"

    def to_dict(self) -> dict:
        def scen(m: ScenarioMetrics) -> dict:
            return {
                "scenario": m.scenario,
                "positive_count": m.positive_count,
                "mean_loss_gap": m.mean_loss_gap,
                "mean_loss_sum": m.mean_loss_sum,
                "instances": [
                    {"id": iid, "positive_count": n, "mean_loss_gap": g, "mean_loss_sum": s}
                    for iid, (n, g, s) in sorted(m.per_instance.items())
                ],
                "error": m.error,
            }

        return {
            "reference": self.reference,
            "assigners": {
                name: {
                    "mean_loss_gap": r.mean_loss_gap,
                    "mean_loss_sum": r.mean_loss_sum,
                    "positive_count": r.positive_count,
                    "failures": [{"scenario": s, "error": e} for s, e in r.failures],
                    "scenarios": [scen(m) for m in r.scenarios],
                }
                for name, r in self.reports.items()
            },
            "win_rates": dict(self.win_rates),
        }

    def table(self) -> str:
        fmt = lambda v: "-" if v is None else f"{v:.6f}"
        lines = [f"{'assigner':<12} {'mean_gap':>10} {'mean_sum':>10} {'positives':>10} {'failed':>7} {'aps_win':>8}"]
        for name, r in self.reports.items():
            win = self.win_rates.get(name)
            lines.append(
                f"{name:<12} {fmt(r.mean_loss_gap):>10} {fmt(r.mean_loss_sum):>10} "
                f"{r.positive_count:>10d} {len(r.failures):>7d} {('-' if win is None else f'{win:.3f}'):>8}"
            )
        return "\n".join(lines)


def scenario_metrics(
    index: int, positives: Mapping[int, Sequence[PointId]], fields: Mapping[int, LossField]
) -> ScenarioMetrics:
    per_instance = {}
    gaps, sums = [], []
    for iid in sorted(fields):
        pts = positives.get(iid, ())
        if pts:
            pr = fields[iid].pairs(pts)
            g = np.abs(pr[:, 0] - pr[:, 1])
            t = pr.sum(axis=1)
            gaps.append(g)
            sums.append(t)
            per_instance[iid] = (len(pts), float(g.mean()), float(t.mean()))
        else:
            per_instance[iid] = (0, None, None)
    if not gaps:
        return ScenarioMetrics(index, 0, None, None, per_instance)
    g, t = np.concatenate(gaps), np.concatenate(sums)
    return ScenarioMetrics(index, int(g.size), float(g.mean()), float(t.mean()), per_instance)


def _threads() -> int:
    try:
        n = int(os.environ.get("APS_LAB_THREADS", "1"))
    except ValueError:
        return 1
    return max(n, 1)


def _evaluate(args) -> dict[str, ScenarioMetrics]:
    index, cfg, names, k = args
    fields = synth_all(cfg)
    out = {}
    for name in names:
        try:
            positives = ASSIGNERS[name](cfg, fields, k)
            out[name] = scenario_metrics(index, positives, fields)
        except Exception as exc:  # recorded per scenario, excluded from aggregates
            out[name] = ScenarioMetrics(index, 0, None, None, {}, error=f"{type(exc).__name__}: {exc}")
    return out


def compare_assigners(
    corpus: Iterable[ScenarioConfig],
    assigners: Sequence[str] = ("aps", "center", "all-in-box"),
    k: int = DEFAULT_K,
    reference: str = "aps",
) -> CompareReport:
    """Run every assigner on every scenario and aggregate.

    ``win_rates[name]`` is the fraction of scenarios, among those where both
    ``reference`` and ``name`` produced positives, in which the reference has
    a strictly lower mean loss gap.
    """
    corpus = list(corpus)
    if not corpus:
        raise ValueError("empty corpus")
    names = list(dict.fromkeys(assigners))
    unknown = [n for n in names if n not in ASSIGNERS]
    if unknown:
        raise ValueError(f"unknown assigners {unknown}")
    jobs = [(i, cfg, names, k) for i, cfg in enumerate(corpus)]
    threads = _threads()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_evaluate, jobs))
    else:
        results = [_evaluate(j) for j in jobs]
    reports = {n: AlignmentReport(n, [r[n] for r in results]) for n in names}

    win_rates: dict[str, float | None] = {}
    if reference in reports:
        ref = reports[reference].scenarios
        for n in names:
            if n == reference:
                continue
            pairs = [
                (a.mean_loss_gap, b.mean_loss_gap)
                for a, b in zip(ref, reports[n].scenarios)
                if a.mean_loss_gap is not None and b.mean_loss_gap is not None
            ]
            win_rates[n] = sum(a < b for a, b in pairs) / len(pairs) if pairs else None
    return CompareReport(reports, win_rates, reference)


def pool_floor_loss_sum(assignment) -> float | None:
    """Smallest pooled mean ``cls + reg`` any same-size pick from each
    instance's chosen-level candidates could reach."""
    sums = []
    for iid, pts in assignment.positives.items():
        res = assignment.details[iid]
        sums.append(np.sort(res.cls + res.reg)[: len(pts)])
    if not sums:
        return None
    return float(np.concatenate(sums).mean())

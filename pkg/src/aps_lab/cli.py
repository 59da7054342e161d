"""aps-lab command line: gen, assign, compare, rf, render.

Exit status is 0 on success and 2 on any usage or input error; diagnostics
go to stderr, machine-readable output to files or stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from . import render, scenarios
from .assigner import DEFAULT_K, assign_image
from .baselines import all_in_box_assign, center_sampling_assign
from .geometry import PointId
from .losses import ScenarioConfig, ScenarioError, synth_all
from .metrics import compare_assigners
from .receptive_field import parse_stack, rf_table

ASSIGNER_CHOICES = ("aps", "center", "all-in-box")

RENDER_HELP = """\
Writes one binary PGM (P5) per pyramid level to OUT/<what>_level<i>.pgm.
Loss maps (cls, reg, gap): cells covered by an instance box carry that
instance's loss (overlaps: smallest cls+reg wins, ties to the smaller id),
mapped linearly from [min, max] of the map to [0, 255] with
floor(255*(v-min)/(max-min) + 0.5); brighter means larger loss.  A constant
map renders covered cells at 255.  Uncovered cells are 0.
Assignment maps: positives are 255, everything else 0."""


class CliError(Exception):
    pass


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror or exc}") from None


def _load_scenario(path: str) -> ScenarioConfig:
    try:
        return scenarios.load(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}") from None
    except ScenarioError as exc:
        raise CliError(f"{path}: {exc}") from None


def run_assigner(cfg: ScenarioConfig, name: str, k: int) -> tuple[dict[int, tuple[PointId, ...]], dict[int, tuple[int, ...]], list[int]]:
    """Positives, levels and unassigned ids for one named assigner."""
    if name == "aps":
        a = assign_image(synth_all(cfg), k)
        return a.positives, a.levels, a.unassigned
    if name == "center":
        found = {inst.id: tuple(center_sampling_assign(inst.box, cfg.grid)) for inst in cfg.instances}
    elif name == "all-in-box":
        found = {inst.id: tuple(all_in_box_assign(inst.box, cfg.grid)) for inst in cfg.instances}
    else:
        raise CliError(f"unknown assigner {name!r}")
    positives = {iid: tuple(sorted(p, key=PointId.order_key)) for iid, p in found.items() if p}
    levels = {iid: tuple(sorted({p.level for p in pts})) for iid, pts in positives.items()}
    unassigned = sorted(iid for iid, p in found.items() if not p)
    return positives, levels, unassigned


def assignment_document(cfg: ScenarioConfig, name: str, k: int) -> dict:
    positives, levels, unassigned = run_assigner(cfg, name, k)
    return {
        "assigner": name,
        "k": k,
        "instances": [
            {
                "id": iid,
                "levels": list(levels[iid]),
                "positives": [{"level": p.level, "x": p.cell_x, "y": p.cell_y} for p in positives[iid]],
            }
            for iid in sorted(positives)
        ],
        "unassigned": unassigned,
    }


def cmd_gen(args) -> int:
    try:
        cfg = scenarios.generate(args.preset, args.seed, args.instances)
    except ScenarioError as exc:
        raise CliError(f"schema error: {exc}") from None
    _write_text(args.out, scenarios.dumps(cfg))
    return 0


def cmd_assign(args) -> int:
    cfg = _load_scenario(args.scenario)
    doc = assignment_document(cfg, args.assigner, args.k)
    _write_text(args.out, json.dumps(doc, indent=2) + "\n")
    return 0


def cmd_compare(args) -> int:
    corpus_dir = Path(args.corpus)
    if not corpus_dir.is_dir():
        raise CliError(f"corpus {corpus_dir} is not a directory")
    files = sorted(corpus_dir.glob("*.json"))
    if not files:
        raise CliError(f"corpus {corpus_dir} holds no scenario files")
    corpus = [_load_scenario(str(f)) for f in files]
    report = compare_assigners(corpus, args.assigners, args.k)
    doc = report.to_dict()
    doc["files"] = [f.name for f in files]
    if args.out:
        _write_text(args.out, json.dumps(doc, indent=2) + "\n")
    sys.stdout.write(report.table() + "\n")
    return 0


def cmd_rf(args) -> int:
    try:
        stack = parse_stack(args.stack)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    rows = rf_table(stack)
    lines = [f"{'layer':>5} {'static_rf':>10} {'min_rf':>10} {'max_rf':>10} {'jump':>6}"]
    for r in rows:
        lines.append(f"{r['layer']:>5d} {r['static_rf']:>10g} {r['min_rf']:>10g} {r['max_rf']:>10g} {r['jump']:>6d}")
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


def cmd_render(args) -> int:
    cfg = _load_scenario(args.scenario)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create {out}: {exc.strerror or exc}") from None
    if args.what == "assignment":
        positives, _, _ = run_assigner(cfg, args.assigner, args.k)
        images = render.assignment_map(cfg.grid, positives)
    else:
        maps = render.loss_maps(cfg.grid, synth_all(cfg), args.what)
        images = {lvl: render.to_gray(v, m) for lvl, (v, m) in maps.items()}
    for lvl, img in sorted(images.items()):
        path = out / f"{args.what}_level{lvl}.pgm"
        try:
            render.write_pgm(path, img)
        except OSError as exc:
            raise CliError(f"cannot write {path}: {exc.strerror or exc}") from None
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aps-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a seeded scenario file")
    p.add_argument("--out", required=True, help="output path ('-' for stdout)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--preset", choices=scenarios.PRESETS, default="random")
    p.add_argument("--instances", type=int, default=3)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("assign", help="assign positives for a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--assigner", choices=ASSIGNER_CHOICES, default="aps")
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--out", default=None, help="output path (default stdout)")
    p.set_defaults(func=cmd_assign)

    p = sub.add_parser("compare", help="compare assigners over a directory of scenarios")
    p.add_argument("--corpus", required=True)
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--assigners", nargs="+", choices=ASSIGNER_CHOICES, default=list(ASSIGNER_CHOICES))
    p.add_argument("--out", default=None, help="also write the JSON report here")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("rf", help="receptive field per layer of a conv stack")
    p.add_argument("--stack", required=True, help='layers "k,s,p[,max_offset];..."')
    p.set_defaults(func=cmd_rf)

    p = sub.add_parser(
        "render", help="write per-level PGM heatmaps", description=RENDER_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--scenario", required=True)
    p.add_argument("--what", choices=render.WHATS, default="cls")
    p.add_argument("--assigner", choices=ASSIGNER_CHOICES, default="aps")
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "k", 1) < 1:
        parser.error("--k must be >= 1")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"aps-lab {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

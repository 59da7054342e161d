import json
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from aps_lab import render, scenarios
from aps_lab.baselines import CenterBaselineConfig, owning_level
from aps_lab.cli import main
from aps_lab.losses import ScenarioError, synth_all


def gen(tmp_path, name="s.json", preset="misaligned", seed=7, n=2):
    path = tmp_path / name
    assert main(["gen", "--out", str(path), "--preset", preset, "--seed", str(seed), "--instances", str(n)]) == 0
    return path


# -- gen / scenario format ------------------------------------------------------


def test_gen_deterministic(tmp_path):
    a = gen(tmp_path, "a.json", preset="aligned")
    b = gen(tmp_path, "b.json", preset="aligned")
    assert a.read_bytes() == b.read_bytes()
    c = gen(tmp_path, "c.json", preset="aligned", seed=8)
    assert a.read_bytes() != c.read_bytes()


def test_gen_misaligned_corners(tmp_path):
    doc = json.loads(gen(tmp_path, n=5).read_text())
    for inst in doc["instances"]:
        x0, y0, x1, y1 = inst["box"]
        corners = {(x0, y0), (x1, y1), (x0, y1), (x1, y0)}
        c, r = tuple(inst["cls_hotspot"]), tuple(inst["reg_hotspot"])
        assert c in corners and r in corners
        assert c[0] != r[0] and c[1] != r[1]


def test_gen_errors(tmp_path, capsys):
    assert main(["gen", "--out", str(tmp_path / "x.json"), "--instances", "0"]) == 2
    assert "schema error" in capsys.readouterr().err
    assert main(["gen", "--out", str(tmp_path / "missing" / "x.json")]) == 2
    assert "cannot write" in capsys.readouterr().err


@pytest.mark.parametrize("preset", scenarios.PRESETS)
def test_round_trip(preset):
    cfg = scenarios.generate(preset, 3, 4)
    assert scenarios.loads(scenarios.dumps(cfg)) == cfg
    assert scenarios.dumps(scenarios.loads(scenarios.dumps(cfg))) == scenarios.dumps(cfg)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.update(extra=1),
        lambda d: d["instances"][0].update(color="red"),
        lambda d: d["instances"][0].pop("noise"),
        lambda d: d["instances"][0].update(cls_hotspot=[-5.0, -5.0]),
        lambda d: d["levels"].reverse(),
        lambda d: d["instances"].clear(),
        lambda d: d["instances"][0].update(box=[5, 5, 5, 9]),
    ],
)
def test_schema_rejections(mutate):
    doc = scenarios.to_dict(scenarios.generate("random", 1, 2))
    mutate(doc)
    with pytest.raises(ScenarioError):
        scenarios.from_dict(doc)


# -- assign -------------------------------------------------------------------------


def assign(tmp_path, scen, assigner="aps", k=9, out="a.json"):
    path = tmp_path / out
    assert main(["assign", "--scenario", str(scen), "--assigner", assigner, "--k", str(k), "--out", str(path)]) == 0
    doc = json.loads(path.read_text())
    jsonschema.validate(doc, scenarios.ASSIGNMENT_SCHEMA)
    return doc, path


def _centres(cfg, positives):
    return np.array(
        [[cfg.grid.level(p["level"]).stride * (p["x"] + 0.5), cfg.grid.level(p["level"]).stride * (p["y"] + 0.5)]
         for p in positives]
    )


def test_assign_deterministic(tmp_path):
    scen = gen(tmp_path)
    _, a = assign(tmp_path, scen, out="a.json")
    _, b = assign(tmp_path, scen, out="b.json")
    assert a.read_bytes() == b.read_bytes()


def test_aps_not_confined_but_center_is(tmp_path):
    outside = 0
    for seed in range(5):
        scen = gen(tmp_path, f"s{seed}.json", n=4, seed=seed)
        cfg = scenarios.load(scen)
        aps, _ = assign(tmp_path, scen, "aps", out=f"aps{seed}.json")
        cen, _ = assign(tmp_path, scen, "center", out=f"c{seed}.json")
        for inst in cfg.instances:
            lvl = owning_level(inst.box, cfg.grid, CenterBaselineConfig.for_levels(5))
            radius = 1.5 * cfg.grid.level(lvl).stride
            c_doc = next(d for d in cen["instances"] if d["id"] == inst.id)
            assert np.all(np.abs(_centres(cfg, c_doc["positives"]) - inst.box.center) < radius)
            a_doc = next((d for d in aps["instances"] if d["id"] == inst.id), None)
            if a_doc:
                dist = np.abs(_centres(cfg, a_doc["positives"]) - inst.box.center).max(axis=1)
                outside += int(np.any(dist >= radius))
    assert outside > 0


def test_assign_k1(tmp_path):
    scen = gen(tmp_path, n=4, preset="random")
    doc, _ = assign(tmp_path, scen, k=1)
    assert not doc["unassigned"]
    for inst in doc["instances"]:
        assert len(inst["positives"]) >= 1
        for lvl in inst["levels"]:
            assert sum(p["level"] == lvl for p in inst["positives"]) <= 1


def test_assign_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"image": {}}')
    assert main(["assign", "--scenario", str(bad)]) == 2
    bad.write_text("not json")
    assert main(["assign", "--scenario", str(bad)]) == 2
    assert main(["assign", "--scenario", str(tmp_path / "nope.json")]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["assign", "--scenario", str(bad), "--assigner", "atss"])
    assert exc.value.code == 2


# -- compare / rf -------------------------------------------------------------------


def test_compare(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    for seed in range(4):
        gen(corpus, f"s{seed}.json", seed=seed)
    out = tmp_path / "report.json"
    assert main(["compare", "--corpus", str(corpus), "--out", str(out)]) == 0
    table = capsys.readouterr().out
    assert table.splitlines()[0].split()[0] == "assigner"
    doc = json.loads(out.read_text())
    assert set(doc["assigners"]) == {"aps", "center", "all-in-box"}
    assert doc["files"] == [f"s{i}.json" for i in range(4)]
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["compare", "--corpus", str(empty)]) == 2


@pytest.mark.parametrize(
    "stack, column, want",
    [("3,1,1;3,1,1;3,1,1;3,1,1", 1, "9"), ("3,1,1,1.0;3,1,1;3,1,1;3,1,1", 3, "11"), ("1,1,0", 1, "1")],
)
def test_rf(capsys, stack, column, want):
    assert main(["rf", "--stack", stack]) == 0
    last = capsys.readouterr().out.strip().splitlines()[-1].split()
    assert last[column] == want


def test_rf_parse_error(capsys):
    assert main(["rf", "--stack", "3,1,1;3,x,1"]) == 2
    assert "'3,x,1'" in capsys.readouterr().err


# -- render ---------------------------------------------------------------------------


def render_maps(tmp_path, scen, what, assigner="aps"):
    out = tmp_path / f"r_{what}_{assigner}"
    assert main(["render", "--scenario", str(scen), "--what", what, "--assigner", assigner, "--out", str(out)]) == 0
    return {int(p.stem.rsplit("level", 1)[1]): render.decode_pgm(p.read_bytes()) for p in sorted(out.glob("*.pgm"))}


@pytest.mark.parametrize("preset", scenarios.PRESETS)
def test_pgm_headers_match_grid(tmp_path, preset):
    scen = gen(tmp_path, preset=preset, n=3)
    cfg = scenarios.load(scen)
    for what in render.WHATS:
        maps = render_maps(tmp_path, scen, what)
        assert sorted(maps) == list(cfg.grid.level_indices)
        for lvl, img in maps.items():
            lv = cfg.grid.level(lvl)
            assert img.shape == (lv.grid_h, lv.grid_w)


def _raw_argmax(scen, what, level=0):
    cfg = scenarios.load(scen)
    values, covered = render.loss_maps(cfg.grid, synth_all(cfg), what)[level]
    return np.unravel_index(np.argmax(np.where(covered, values, -np.inf)), values.shape)


def test_render_argmax_aligned_vs_misaligned(tmp_path):
    aligned = gen(tmp_path, "al.json", preset="aligned", n=1, seed=5)
    top = _raw_argmax(aligned, "cls")
    assert top == _raw_argmax(aligned, "reg")
    cls, reg = render_maps(tmp_path, aligned, "cls"), render_maps(tmp_path, aligned, "reg")
    assert cls[0][top] == reg[0][top] == 255
    mis = gen(tmp_path, "mis.json", preset="misaligned", n=1, seed=5)
    assert _raw_argmax(mis, "cls") != _raw_argmax(mis, "reg")
    cls, reg = render_maps(tmp_path, mis, "cls"), render_maps(tmp_path, mis, "reg")
    assert np.unravel_index(np.argmax(cls[0]), cls[0].shape) != np.unravel_index(np.argmax(reg[0]), reg[0].shape)


def test_render_assignment_pixel_count(tmp_path):
    scen = gen(tmp_path, n=3, preset="random")
    doc, _ = assign(tmp_path, scen)
    maps = render_maps(tmp_path, scen, "assignment")
    n_pos = sum(len(i["positives"]) for i in doc["instances"])
    assert sum(int((m == 255).sum()) for m in maps.values()) == n_pos
    assert all(set(np.unique(m)) <= {0, 255} for m in maps.values())


def test_render_bit_exact(tmp_path):
    scen = gen(tmp_path, n=1, preset="random", seed=9)
    cfg = scenarios.load(scen)
    field = synth_all(cfg)[0]
    maps = render_maps(tmp_path, scen, "gap")
    for lv in field:
        img = maps[lv.level]
        if len(lv) == 0:
            assert not img.any()
            continue
        gap = np.abs(lv.cls - lv.reg)
        lo, hi = gap.min(), gap.max()
        for (x, y), g in zip(lv.cells, gap):
            want = 255 if hi == lo else int(np.floor(255 * (g - lo) / (hi - lo) + 0.5))
            assert img[y, x] == want
        mask = np.ones(img.shape, bool)
        mask[lv.cells[:, 1], lv.cells[:, 0]] = False
        assert not img[mask].any()


def test_pgm_codec():
    img = np.arange(12, dtype=np.uint8).reshape(3, 4)
    data = render.encode_pgm(img)
    assert data.startswith(b"P5\n4 3\n255\n")
    assert np.array_equal(render.decode_pgm(data), img)


def test_module_entry_point(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "aps_lab", "rf", "--stack", "3,2,1;3,2,1"], capture_output=True, text=True
    )
    assert out.returncode == 0
    assert out.stdout.strip().splitlines()[-1].split()[1] == "7"

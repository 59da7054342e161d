"""Seeded scenario presets and the JSON scenario format."""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .geometry import Box, LevelSpec, PyramidGrid
from .losses import InstanceSpec, ScenarioConfig, ScenarioError

PRESETS = ("aligned", "misaligned", "random")
IMAGE_SIZE = 512
STRIDES = (8, 16, 32, 64, 128)
MIN_SIDE = 40.0
MAX_SIDE = 320.0
SPREAD_FRAC = 0.5
PRESET_NOISE = {"aligned": 0.0, "misaligned": 0.0, "random": None}


def _schema(name: str) -> dict:
    return json.loads(resources.files("aps_lab.schemas").joinpath(name).read_text())


SCENARIO_SCHEMA = _schema("scenario.schema.json")
ASSIGNMENT_SCHEMA = _schema("assignment.schema.json")


def _random_box(rng: np.random.Generator, image_w: int, image_h: int) -> Box:
    side = math.exp(rng.uniform(math.log(MIN_SIDE), math.log(MAX_SIDE)))
    aspect = math.exp(rng.uniform(math.log(0.5), math.log(2.0)))
    w = min(side * math.sqrt(aspect), image_w - 2.0)
    h = min(side / math.sqrt(aspect), image_h - 2.0)
    x0 = rng.uniform(0.0, image_w - w)
    y0 = rng.uniform(0.0, image_h - h)
    return Box(round(x0, 3), round(y0, 3), round(x0 + w, 3), round(y0 + h, 3))


def generate(preset: str, seed: int, n_instances: int) -> ScenarioConfig:
    """Build a scenario; identical arguments give an identical config."""
    if preset not in PRESETS:
        raise ScenarioError(f"unknown preset {preset!r}; choose from {PRESETS}")
    if n_instances < 1:
        raise ScenarioError(f"need at least one instance, got {n_instances}")
    rng = np.random.default_rng(seed)
    grid = PyramidGrid.from_strides(IMAGE_SIZE, IMAGE_SIZE, STRIDES)
    instances = []
    for iid in range(n_instances):
        box = _random_box(rng, IMAGE_SIZE, IMAGE_SIZE)
        corners = [(box.x_min, box.y_min), (box.x_max, box.y_max), (box.x_min, box.y_max), (box.x_max, box.y_min)]
        diag = int(rng.integers(0, 4))
        if preset == "aligned":
            cls_h = reg_h = box.center
        elif preset == "misaligned":
            # opposite ends of one diagonal, in random order
            a, b = corners[diag], corners[diag ^ 1]
            cls_h, reg_h = a, b
        else:
            cls_h = (round(rng.uniform(box.x_min, box.x_max), 3), round(rng.uniform(box.y_min, box.y_max), 3))
            reg_h = (round(rng.uniform(box.x_min, box.x_max), 3), round(rng.uniform(box.y_min, box.y_max), 3))
        side = math.sqrt(box.area)
        noise = PRESET_NOISE[preset]
        if noise is None:
            noise = round(float(rng.uniform(0.0, 0.5)), 3)
        instances.append(
            InstanceSpec(
                id=iid,
                class_id=int(rng.integers(0, 80)),
                box=box,
                cls_hotspot=tuple(cls_h),
                reg_hotspot=tuple(reg_h),
                spread_cls=round(SPREAD_FRAC * side, 3),
                spread_reg=round(SPREAD_FRAC * side, 3),
                noise=noise,
            )
        )
    return ScenarioConfig(grid, tuple(instances), seed)


def to_dict(cfg: ScenarioConfig) -> dict:
    return {
        "image": {"w": cfg.grid.image_w, "h": cfg.grid.image_h},
        "levels": [{"stride": lv.stride, "grid_w": lv.grid_w, "grid_h": lv.grid_h} for lv in cfg.grid.levels],
        "instances": [
            {
                "id": inst.id,
                "class": inst.class_id,
                "box": list(inst.box.as_tuple()),
                "cls_hotspot": list(inst.cls_hotspot),
                "reg_hotspot": list(inst.reg_hotspot),
                "spread": [inst.spread_cls, inst.spread_reg],
                "noise": inst.noise,
            }
            for inst in cfg.instances
        ],
        "seed": cfg.seed,
    }


def from_dict(doc: dict) -> ScenarioConfig:
    """Validate against the scenario schema, then build the config."""
    try:
        jsonschema.validate(doc, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"scenario schema violation at {path}: {exc.message}") from None
    try:
        levels = tuple(
            LevelSpec(i, float(lv["stride"]), int(lv["grid_w"]), int(lv["grid_h"]))
            for i, lv in enumerate(doc["levels"])
        )
        grid = PyramidGrid(levels, int(doc["image"]["w"]), int(doc["image"]["h"]))
        instances = tuple(
            InstanceSpec(
                id=int(d["id"]),
                class_id=int(d["class"]),
                box=Box.from_seq(d["box"]),
                cls_hotspot=(float(d["cls_hotspot"][0]), float(d["cls_hotspot"][1])),
                reg_hotspot=(float(d["reg_hotspot"][0]), float(d["reg_hotspot"][1])),
                spread_cls=float(d["spread"][0]),
                spread_reg=float(d["spread"][1]),
                noise=float(d["noise"]),
            )
            for d in doc["instances"]
        )
        return ScenarioConfig(grid, instances, int(doc["seed"]))
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None


def dumps(cfg: ScenarioConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2) + "\n"


def loads(text: str) -> ScenarioConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc}") from None
    return from_dict(doc)


def load(path: str | Path) -> ScenarioConfig:
    return loads(Path(path).read_text())


def save(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(dumps(cfg))


def corpus(preset: str, n_scenarios: int, n_instances: int = 3, base_seed: int = 0) -> list[ScenarioConfig]:
    return [generate(preset, base_seed + i, n_instances) for i in range(n_scenarios)]

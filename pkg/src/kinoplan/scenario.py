"""Scenario, trajectory, and benchmark-result file formats (YAML/CSV/JSON).

Loaders validate against the schema and report the offending path, e.g.
"environment.obstacles[1].size: must be positive".
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .dynamics import ConfigurationError, SystemModel, make_system
from .geometry import BodyRect, Box, Environment, RobotShape, default_shape, state_valid
from .metric import StateMetric

TRAJECTORY_MAGIC = "kinoplan-trajectory"


class SchemaError(ValueError):
    """A scenario/trajectory/result file violates its schema."""


@dataclass(frozen=True)
class Scenario:
    name: str
    system: SystemModel
    env: Environment
    shape: RobotShape
    metric: StateMetric
    start: np.ndarray
    goal: np.ndarray


def _need(mapping, key, where, kind=None):
    if not isinstance(mapping, dict) or key not in mapping:
        raise SchemaError(f"{where}: missing required key {key!r}")
    value = mapping[key]
    if kind is not None and not isinstance(value, kind):
        raise SchemaError(f"{where}.{key}: expected {kind.__name__}")
    return value


def _vector(value, length, where):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as e:
        raise SchemaError(f"{where}: not a number list ({e})") from e
    if arr.shape != (length,):
        raise SchemaError(f"{where}: expected {length} numbers, got shape {arr.shape}")
    return arr


def _parse_environment(data, where) -> Environment:
    lo = _vector(_need(data, "min", where), 2, f"{where}.min")
    hi = _vector(_need(data, "max", where), 2, f"{where}.max")
    if not np.all(lo < hi):
        raise SchemaError(f"{where}: min must be < max componentwise")
    obstacles = []
    for i, ob in enumerate(data.get("obstacles") or []):
        here = f"{where}.obstacles[{i}]"
        center = _vector(_need(ob, "center", here), 2, f"{here}.center")
        size = _vector(_need(ob, "size", here), 2, f"{here}.size")
        if not np.all(size > 0):
            raise SchemaError(f"{here}.size: must be positive")
        obstacles.append(Box(center, size / 2.0))
    return Environment(lo, hi, tuple(obstacles))


def _parse_shape(data, system, where) -> RobotShape:
    if data is None:
        return default_shape(system)
    bodies = []
    for i, b in enumerate(_need(data, "bodies", where, list)):
        here = f"{where}.bodies[{i}]"
        size = _vector(_need(b, "size", here), 2, f"{here}.size")
        if not np.all(size > 0):
            raise SchemaError(f"{here}.size: must be positive")
        bodies.append(
            BodyRect(
                length=float(size[0]),
                width=float(size[1]),
                angle_dim=int(b.get("angle_dim", 2)),
                hitch_dist=float(b.get("hitch_dist", 0.0)),
                hitch_angle_dim=int(b.get("hitch_angle_dim", 0)),
            )
        )
    return RobotShape(tuple(bodies))


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise SchemaError(f"{path}: YAML parse error: {e}") from e
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: top level must be a mapping")
    try:
        system = make_system(
            _need(data, "system", str(path), str), data.get("variant", "v0")
        )
    except ConfigurationError as e:
        raise SchemaError(f"{path}.system: {e}") from e
    env = _parse_environment(_need(data, "environment", str(path)), f"{path}.environment")
    shape = _parse_shape(data.get("robot"), system, f"{path}.robot")
    start = _vector(_need(data, "start", str(path)), system.d_x, f"{path}.start")
    goal = _vector(_need(data, "goal", str(path)), system.d_x, f"{path}.goal")
    metric = StateMetric(**(data.get("metric") or {}))
    for label, x in (("start", start), ("goal", goal)):
        if not state_valid(env, shape, system, x):
            raise SchemaError(f"{path}.{label}: state is not collision-free and in bounds")
    return Scenario(
        name=str(data.get("name", path.stem)),
        system=system,
        env=env,
        shape=shape,
        metric=metric,
        start=start,
        goal=goal,
    )


def save_trajectory(path, system: SystemModel, states, controls, cost=None, residuals=None) -> None:
    states = np.asarray(states, dtype=float)
    controls = np.asarray(controls, dtype=float).reshape(-1, system.d_u)
    doc = {
        "format": TRAJECTORY_MAGIC,
        "version": 1,
        "system": system.name,
        "variant": system.variant,
        "dt": float(system.dt),
        "cost": float(cost) if cost is not None else len(controls) * system.dt,
        "states": [[float(v) for v in row] for row in states],
        "actions": [[float(v) for v in row] for row in controls],
    }
    if residuals is not None:
        doc["residuals"] = {k: (None if v is None else float(v)) for k, v in residuals.items()}
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=True))


def load_trajectory(path):
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise SchemaError(f"{path}: YAML parse error: {e}") from e
    if not isinstance(data, dict) or data.get("format") != TRAJECTORY_MAGIC:
        raise SchemaError(f"{path}: not a trajectory file")
    states = np.asarray(_need(data, "states", str(path)), dtype=float)
    actions = np.asarray(_need(data, "actions", str(path)), dtype=float)
    if actions.size == 0:
        actions = actions.reshape(0, 0)
    if len(states) != len(actions) + 1:
        raise SchemaError(f"{path}: need len(states) == len(actions) + 1")
    return {
        "system": _need(data, "system", str(path), str),
        "variant": data.get("variant", "v0"),
        "dt": float(data.get("dt", 0.1)),
        "cost": float(data.get("cost", len(actions) * 0.1)),
        "states": states,
        "actions": actions,
        "residuals": data.get("residuals"),
    }


RESULT_FIELDS = ["scenario", "trial", "seed", "success", "t_first", "J_first", "J_final"]


def write_results_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in RESULT_FIELDS})


def read_results_csv(path) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                {
                    "scenario": row["scenario"],
                    "trial": int(row["trial"]),
                    "seed": int(row["seed"]),
                    "success": row["success"] in ("True", "true", "1"),
                    "t_first": float(row["t_first"]) if row["t_first"] else None,
                    "J_first": float(row["J_first"]) if row["J_first"] else None,
                    "J_final": float(row["J_final"]) if row["J_final"] else None,
                }
            )
    return out


def write_timelines_json(timelines: list[dict], path) -> None:
    Path(path).write_text(json.dumps({"format": "kinoplan-timelines", "version": 1,
                                      "results": timelines}, indent=1, sort_keys=True))


def read_timelines_json(path) -> list[dict]:
    data = json.loads(Path(path).read_text())
    if data.get("format") != "kinoplan-timelines":
        raise SchemaError(f"{path}: not a timelines file")
    return data["results"]

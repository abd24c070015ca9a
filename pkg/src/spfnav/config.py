"""Run documents: the JSON configuration consumed by the CLI.

A document carries the world, potential, robot, penalty, sensor, simulation,
and output blocks. Parsing is strict: unknown fields anywhere are rejected so
typos fail loudly. The raw dict is kept for value-identical round trips.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import geometry, sensing
from .controller import QuadraticPotential
from .errors import SchemaError
from .penalty import PenaltyParams
from .simulation import SimConfig

_BLOCK_FIELDS = {
    "world": None,  # delegated to geometry.world_from_dict
    "potential": {"goal", "gain"},
    "robot": {"R", "epsilon"},
    "penalty": {"mu", "nu", "blend"},
    "sensor": {"mode", "range", "resolution_deg", "pattern3d"},
    "sim": {"dt", "t_max", "goal_tol", "integrator", "initials",
            "random_initials", "record_every", "safety_tol", "stall_speed",
            "stall_window"},
    "output": {"directory", "formats"},
}
_RANDOM_FIELDS = {"count", "seed", "min_margin"}
_REQUIRED_BLOCKS = ("world", "potential", "robot", "penalty")
_FORMATS = {"csv", "json", "png"}


def _check_fields(block: dict, name: str):
    allowed = _BLOCK_FIELDS[name]
    if not isinstance(block, dict):
        raise SchemaError(f"'{name}' block must be an object")
    unknown = set(block) - allowed
    if unknown:
        raise SchemaError(f"unknown fields {sorted(unknown)} in '{name}' block")


@dataclass
class RunDocument:
    """Parsed run configuration plus its raw JSON form."""

    raw: dict
    world: geometry.World
    potential: QuadraticPotential
    robot: geometry.RobotParams
    penalty: PenaltyParams
    sensor_mode: str
    lidar: sensing.LidarConfig | None
    sim: SimConfig
    initials: list
    random_initials: dict | None
    out_dir: str
    formats: list[str]

    def to_dict(self) -> dict:
        return json.loads(json.dumps(self.raw))


def document_from_dict(doc: dict) -> RunDocument:
    if not isinstance(doc, dict):
        raise SchemaError("run document must be a JSON object")
    unknown = set(doc) - set(_BLOCK_FIELDS)
    if unknown:
        raise SchemaError(f"unknown blocks {sorted(unknown)} in run document")
    for block in _REQUIRED_BLOCKS:
        if block not in doc:
            raise SchemaError(f"run document is missing the '{block}' block")

    world = geometry.world_from_dict(doc["world"])

    _check_fields(doc["potential"], "potential")
    try:
        potential = QuadraticPotential(goal=doc["potential"]["goal"],
                                       gain=doc["potential"]["gain"])
    except (KeyError, ValueError, TypeError) as exc:
        raise SchemaError(f"invalid potential block: {exc}") from exc
    if potential.goal.shape[0] != world.dimension:
        raise SchemaError("goal dimension does not match the world")

    _check_fields(doc["robot"], "robot")
    try:
        robot = geometry.RobotParams(radius=float(doc["robot"]["R"]),
                                     safety_margin=float(doc["robot"]["epsilon"]))
    except (KeyError, ValueError, TypeError) as exc:
        raise SchemaError(f"invalid robot block: {exc}") from exc

    _check_fields(doc["penalty"], "penalty")
    try:
        penalty = PenaltyParams(mu=float(doc["penalty"]["mu"]),
                                nu=float(doc["penalty"]["nu"]),
                                blend=doc["penalty"].get("blend", "cubic"))
    except (KeyError, ValueError, TypeError) as exc:
        raise SchemaError(f"invalid penalty block: {exc}") from exc

    sensor_block = doc.get("sensor", {"mode": "oracle"})
    _check_fields(sensor_block, "sensor")
    sensor_mode = sensor_block.get("mode", "oracle")
    if sensor_mode not in ("oracle", "lidar2d", "lidar3d"):
        raise SchemaError(f"unknown sensor mode '{sensor_mode}'")
    lidar = None
    if sensor_mode != "oracle":
        try:
            lidar = sensing.LidarConfig(
                max_range=float(sensor_block.get("range", 3.0)),
                resolution_deg=float(sensor_block.get("resolution_deg", 1.0)),
                pattern3d=sensor_block.get("pattern3d", "lattice"))
        except ValueError as exc:
            raise SchemaError(f"invalid sensor block: {exc}") from exc

    sim_block = doc.get("sim", {})
    _check_fields(sim_block, "sim")
    initials = [np.asarray(p, dtype=float) for p in sim_block.get("initials", [])]
    for p in initials:
        if p.shape != (world.dimension,):
            raise SchemaError("initial positions must match the world dimension")
    random_initials = sim_block.get("random_initials")
    if random_initials is not None:
        unknown = set(random_initials) - _RANDOM_FIELDS
        if unknown:
            raise SchemaError(f"unknown fields {sorted(unknown)} in random_initials")
        if "count" not in random_initials or "seed" not in random_initials:
            raise SchemaError("random_initials needs 'count' and 'seed'")

    try:
        sim = SimConfig(
            world=world, potential=potential, robot=robot, penalty=penalty,
            sensor_mode=sensor_mode, lidar=lidar, initials=initials,
            dt=float(sim_block.get("dt", 1e-3)),
            t_max=float(sim_block.get("t_max", 60.0)),
            goal_tol=float(sim_block.get("goal_tol", 1e-2)),
            integrator=sim_block.get("integrator", "rk4"),
            safety_tol=float(sim_block.get("safety_tol", 1e-6)),
            stall_speed=float(sim_block.get("stall_speed", 1e-6)),
            stall_window=float(sim_block.get("stall_window", 1.0)),
            record_every=int(sim_block.get("record_every", 1)),
        )
    except ValueError as exc:
        raise SchemaError(f"invalid sim block: {exc}") from exc

    output = doc.get("output", {})
    _check_fields(output, "output")
    formats = output.get("formats", ["csv", "json", "png"])
    bad = set(formats) - _FORMATS
    if bad:
        raise SchemaError(f"unknown output formats {sorted(bad)}")

    return RunDocument(
        raw=doc, world=world, potential=potential, robot=robot,
        penalty=penalty, sensor_mode=sensor_mode, lidar=lidar, sim=sim,
        initials=initials, random_initials=random_initials,
        out_dir=output.get("directory", "out"), formats=list(formats))


def load_document(path) -> RunDocument:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"not valid JSON: {exc}") from exc
    return document_from_dict(doc)


def apply_override(doc: dict, dotted_key: str, value: str) -> dict:
    """Set a nested document entry from a 'block.key=value' CLI flag.

    The value is parsed as JSON when possible, else kept as a string.
    """
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    keys = dotted_key.split(".")
    node = doc
    for key in keys[:-1]:
        if not isinstance(node.get(key), dict):
            node[key] = {}
        node = node[key]
    node[keys[-1]] = parsed
    return doc


def bundled_config_path(name: str):
    """Path of a configuration document shipped with the package."""
    path = resources.files("spfnav").joinpath("configs", name)
    if not path.is_file():
        available = sorted(
            p.name for p in resources.files("spfnav").joinpath("configs").iterdir())
        raise FileNotFoundError(f"no bundled config '{name}'; available: {available}")
    return path

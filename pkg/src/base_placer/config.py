"""Run configuration: one JSON document, schema checked, with field-level errors."""

from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .kinematics import Pose, RobotModel, load_model
from .optimizer import Disk, Polygon2, SwarmConfig
from .trajectory import SaddleSpec, SimOptions, Trajectory, generate_saddle

__all__ = ["ConfigError", "RunConfig", "RUN_CONFIG_SCHEMA", "OUTCOMES_SCHEMA", "SEED_ENV"]

SEED_ENV = "BASE_PLACER_SEED"

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_xy = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

RUN_CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["trajectory", "search", "mode"],
    "properties": {
        "robot": {"oneOf": [{"type": "string"}, {"type": "object"}]},
        "tcp": {"type": "array", "items": _num, "minItems": 6, "maxItems": 6},
        "trajectory": {
            "type": "object",
            "additionalProperties": False,
            "minProperties": 1,
            "maxProperties": 2,
            "properties": {
                "saddle": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "R_major": _pos,
                        "r_minor": _pos,
                        "tilt_deg": _num,
                        "bevel_deg": _num,
                        "camera_in_axis": {"type": "boolean"},
                        "lead_in": {"type": "number", "minimum": 0},
                        "samples": {"type": "integer", "minimum": 16},
                        "azimuth_deg": _num,
                        "tool_spin": {"enum": ["tangent", "fixed"]},
                    },
                },
                "poses": {
                    "type": "array",
                    "minItems": 2,
                    "items": {
                        "type": "object",
                        "required": ["p", "rpy"],
                        "properties": {
                            "p": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
                            "rpy": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
                        },
                    },
                },
                "file": {"type": "string"},
                "closed": {"type": "boolean"},
            },
        },
        "search": {
            "type": "object",
            "additionalProperties": False,
            "required": ["bounds"],
            "properties": {
                "bounds": {"type": "array", "items": _num, "minItems": 4, "maxItems": 4},
                "z_offset": _num,
                "forbidden_region": {
                    "oneOf": [
                        {"type": "null"},
                        {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["disk"],
                            "properties": {
                                "disk": {
                                    "type": "object",
                                    "required": ["center", "radius"],
                                    "properties": {"center": _xy, "radius": _pos},
                                }
                            },
                        },
                        {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["polygon"],
                            "properties": {"polygon": {"type": "array", "items": _xy, "minItems": 3}},
                        },
                    ]
                },
            },
        },
        "mode": {"enum": ["grid", "pso"]},
        "grid_step": _pos,
        "swarm": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_cluster": {"type": "integer", "minimum": 1},
                "iterations": {"type": "integer", "minimum": 0},
                "w": {"type": "number", "minimum": 0},
                "c1": {"type": "number", "minimum": 0},
                "c2": {"type": "number", "minimum": 0},
                "e": {"type": "number", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "centered_exploration": {"type": "boolean"},
                "v0_fraction": {"type": "number", "minimum": 0},
            },
        },
        "sim": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dp": _pos, "det_threshold": {"type": "number", "minimum": 0},
                           "closed_loop_gain": {"type": "number", "minimum": 0, "maximum": 1}},
        },
        "region": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"alpha": _pos, "min_radius": {"type": "number", "minimum": 0},
                           "edge_step": _pos, "score_eps": {"type": "number", "minimum": 0}},
        },
        "output_dir": {"type": "string"},
        "workers": {"type": "integer", "minimum": 1},
    },
    "allOf": [
        {"if": {"properties": {"mode": {"const": "grid"}}}, "then": {"required": ["grid_step"]}},
        {"if": {"properties": {"mode": {"const": "pso"}}}, "then": {"required": ["swarm"]}},
    ],
}

_outcome = {
    "type": "object",
    "required": ["completed_fraction", "failure", "failure_step", "min_abs_det", "min_limit_margin",
                 "min_clearance", "max_tracking_error", "q_start", "q_end"],
    "properties": {
        "completed_fraction": {"type": "number", "minimum": 0, "maximum": 1},
        "failure": {"enum": ["none", "singularity", "joint_limit", "self_collision", "start_unreachable"]},
        "failure_step": {"type": ["integer", "null"]},
        "min_abs_det": {"type": ["number", "null"]},
        "min_limit_margin": {"type": ["number", "null"]},
        "min_clearance": {"type": ["number", "null"]},
        "max_tracking_error": {"type": ["number", "null"]},
        "q_start": {"type": "array", "items": _num, "minItems": 6, "maxItems": 6},
        "q_end": {"type": "array", "items": _num, "minItems": 6, "maxItems": 6},
    },
}

OUTCOMES_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["base", "outcomes"],
    "properties": {
        "base": {"type": "array", "items": _num, "minItems": 4, "maxItems": 4},
        "outcomes": {"type": "array", "items": _outcome},
    },
}


class ConfigError(ValueError):
    """Invalid run configuration; ``errors`` holds ``(field path, message)`` pairs."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{p}: {m}" for p, m in errors))


def _path(err) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


@dataclass
class RunConfig:
    """Validated run configuration; ``raw`` is the document as given, with
    the effective seed written back."""

    raw: dict
    model: RobotModel
    tcp: Pose
    trajectory: Trajectory
    bounds: tuple[float, float, float, float]
    z_offset: float
    forbidden: Disk | Polygon2 | None
    mode: str
    grid_step: float | None
    swarm: SwarmConfig
    sim: SimOptions
    alpha: float
    min_radius: float
    edge_step: float
    score_eps: float
    output_dir: Path
    workers: int

    @classmethod
    def load(cls, path, base_dir=None) -> "RunConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError([("<file>", str(exc))]) from None
        return cls.from_dict(doc, base_dir=path.parent if base_dir is None else base_dir)

    @classmethod
    def from_dict(cls, doc: dict, base_dir=None, seed: int | None = None,
                  workers: int | None = None) -> "RunConfig":
        """Validate ``doc``.  Seed precedence: ``seed`` argument, then the
        ``BASE_PLACER_SEED`` environment variable, then the document."""
        doc = copy.deepcopy(doc)
        validator = jsonschema.Draft202012Validator(RUN_CONFIG_SCHEMA)
        errors = sorted((_path(e), e.message) for e in validator.iter_errors(doc))
        if errors:
            raise ConfigError(errors)
        base_dir = Path(base_dir) if base_dir is not None else Path.cwd()

        env = os.environ.get(SEED_ENV)
        if seed is None and env is not None:
            try:
                seed = int(env)
            except ValueError:
                raise ConfigError([(SEED_ENV, f"not an integer: {env!r}")]) from None
        if seed is not None:
            doc.setdefault("swarm", {})["seed"] = int(seed)
        if workers is not None:
            doc["workers"] = int(workers)

        errors = []
        try:
            model = load_model(doc.get("robot", "crx10ia_l"))
        except (ValueError, OSError, TypeError) as exc:
            errors.append(("robot", str(exc)))
            model = None
        tcp = Pose.from_vector(doc.get("tcp", [0.0] * 6))

        tdoc = doc["trajectory"]
        sources = [k for k in ("saddle", "poses", "file") if k in tdoc]
        traj = None
        if len(sources) != 1:
            errors.append(("trajectory", "give exactly one of saddle, poses, file"))
        else:
            try:
                traj = _trajectory(tdoc, base_dir)
            except (ValueError, OSError, KeyError) as exc:
                errors.append((f"trajectory/{sources[0]}", str(exc)))

        search = doc["search"]
        bounds = tuple(float(b) for b in search["bounds"])
        if not (bounds[0] < bounds[1] and bounds[2] < bounds[3]):
            errors.append(("search/bounds", "expected [xmin, xmax, ymin, ymax] with min < max"))
        forbidden = _forbidden(search.get("forbidden_region"))

        sw = dict(doc.get("swarm", {}))
        swarm = None
        try:
            swarm = SwarmConfig(bounds=bounds, forbidden_region=forbidden, workers=doc.get("workers", 1), **sw)
        except ValueError as exc:
            errors.append(("swarm", str(exc)))

        if errors:
            raise ConfigError(errors)
        sim = dict(doc.get("sim", {}))
        reg = dict(doc.get("region", {}))
        return cls(
            raw=doc,
            model=model,
            tcp=tcp,
            trajectory=traj,
            bounds=bounds,
            z_offset=float(search.get("z_offset", 0.0)),
            forbidden=forbidden,
            mode=doc["mode"],
            grid_step=doc.get("grid_step"),
            swarm=swarm,
            sim=SimOptions(**sim),
            alpha=float(reg.get("alpha", 0.05)),
            min_radius=float(reg.get("min_radius", 0.05)),
            edge_step=float(reg.get("edge_step", 0.01)),
            score_eps=float(reg.get("score_eps", 0.0)),
            output_dir=base_dir / doc.get("output_dir", "out"),
            workers=int(doc.get("workers", 1)),
        )


def saddle_spec(doc: dict) -> SaddleSpec:
    """SaddleSpec from the config block (angles in degrees)."""
    kw = {}
    for key, val in doc.items():
        if key.endswith("_deg"):
            kw[key[:-4]] = math.radians(val)
        else:
            kw[key] = val
    return SaddleSpec(**kw)


def _trajectory(tdoc: dict, base_dir: Path) -> Trajectory:
    if "saddle" in tdoc:
        return generate_saddle(saddle_spec(tdoc["saddle"]))
    if "poses" in tdoc:
        return Trajectory.from_json(tdoc["poses"], closed=tdoc.get("closed", False))
    p = Path(tdoc["file"])
    if not p.is_absolute():
        p = base_dir / p
    closed = tdoc.get("closed")
    return Trajectory.from_json(p, closed=closed)


def _forbidden(doc):
    if not doc:
        return None
    if "disk" in doc:
        return Disk(tuple(float(c) for c in doc["disk"]["center"]), float(doc["disk"]["radius"]))
    return Polygon2(tuple(tuple(float(c) for c in v) for v in doc["polygon"]))

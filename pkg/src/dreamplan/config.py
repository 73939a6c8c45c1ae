"""Run configuration: JSON loading, schema validation, dataclass construction.

The root object is an :class:`EnvConfig`. Loading from text reports errors with
the JSON path of the offending field and, when it can be located, its line.
"""
from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import asdict, dataclass, field
from json.decoder import scanstring

import jsonschema

from . import __version__
from .cages import Cage, cage_from_config
from .dris import Context, WidthPreset, width_preset
from .errors import ConfigurationError
from .executor import PerturbationConfig
from .solver import SamplerConfig, SolverConfig
from .tsip import BACKENDS, TASKS, TaskWorld

CONFIG_VERSION = 1
MODES = ("online", "plan-then-execute")

_num = {"type": "number"}
_nonneg = {"type": "number", "minimum": 0}
_pos_int = {"type": "integer", "minimum": 1}
_point = {"type": "array", "items": _num, "minItems": 2, "maxItems": 3}

_CAGE = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"type": "string"},
        "center": _point,
        "center_path": {
            "type": "array",
            "items": {"type": "object", "required": ["t", "center"],
                      "properties": {"t": {"type": "integer", "minimum": 0}, "center": _point}},
        },
        "radius": {"type": "number", "exclusiveMinimum": 0},
        "alpha": _nonneg,
        "waypoints": {"type": "array", "items": _point, "minItems": 1},
        "duration": _pos_int,
        "schedule": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "children": {"type": "array", "items": {"$ref": "#/$defs/cage"}, "minItems": 1},
        "weights": {"type": "array", "items": _nonneg},
    },
    "additionalProperties": False,
}

SCHEMA = {
    "$defs": {"cage": _CAGE},
    "type": "object",
    "required": ["config_version", "task"],
    "properties": {
        "config_version": {"const": CONFIG_VERSION},
        "task": {
            "type": "object",
            "required": ["name"],
            "properties": {
                "name": {"enum": list(TASKS)},
                "object_radius": {"type": "number", "exclusiveMinimum": 0},
                "plate_radius": {"type": "number", "exclusiveMinimum": 0},
                "goal": _point,
                "goal_tolerance": {"type": "number", "exclusiveMinimum": 0},
                "circle_center": _point,
                "circle_radius": {"type": "number", "exclusiveMinimum": 0},
                "circle_rate": _num,
                "tracking_tolerance": {"type": "number", "exclusiveMinimum": 0},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "gravity": _nonneg,
                "max_step": {"type": "number", "exclusiveMinimum": 0},
                "step_budget": _pos_int,
                "beta": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "tsip": {
            "type": "object",
            "properties": {"backend": {"enum": sorted(BACKENDS)}},
            "additionalProperties": False,
        },
        "cage": {"anyOf": [{"type": "null"}, {"$ref": "#/$defs/cage"}]},
        "solver": {
            "type": "object",
            "properties": {
                "num_samples": _pos_int,
                "cage_weight": _nonneg,
                "optimizer": {"enum": ["n-best", "mppi"]},
                "mppi_iterations": _pos_int,
                "temperature": {"type": "number", "exclusiveMinimum": 0},
                "warm_start": {"type": "boolean"},
                "fallback": {"enum": ["least-violation"]},
                "sampler": {
                    "type": "object",
                    "properties": {
                        "kind": {"enum": ["gaussian", "discrete-set", "scripted-policy"]},
                        "policy": {"type": "string"},
                        "std": {"anyOf": [_nonneg, {"type": "array", "items": _nonneg}]},
                        "mean_source": {"enum": ["zero", "warm", "policy"]},
                        "actions": {"type": "array", "items": {"type": "array", "items": _num}},
                    },
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "perturbation": {
            "type": "object",
            "properties": {
                "obs_noise_std": _nonneg,
                "obs_delay_steps": {"type": "integer", "minimum": 0},
                "physics_severity": {"type": "number", "minimum": 0, "maximum": 1},
            },
            "additionalProperties": False,
        },
        "dris": {
            "type": "object",
            "properties": {
                "m": _pos_int,
                "width": {"anyOf": [{"enum": ["zero", "narrow", "medium", "wide"]},
                                    {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}]},
                "pose_noise_std": _nonneg,
                "context": {
                    "type": "object",
                    "properties": {
                        "mass_kg": {"type": "number", "exclusiveMinimum": 0},
                        "friction_coeff": {"type": "number", "exclusiveMinimum": 0},
                        "geometry_scale": {"type": "number", "exclusiveMinimum": 0},
                        "drag_coeff": _nonneg,
                    },
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "mode": {"enum": list(MODES)},
        "chunk_length": _pos_int,
        "horizon": _pos_int,
        "seed": {"type": "integer", "minimum": 0},
        "sweep": {"type": "object"},
        "ablation": {"type": "object"},
        "profile": {"type": "object"},
    },
    "additionalProperties": False,
}


@dataclass
class DRISConfig:
    m: int = 8
    width: str | list = "medium"
    pose_noise_std: float = 0.01
    context: Context = field(default_factory=Context)

    @property
    def width_preset(self) -> WidthPreset:
        return width_preset(self.width)


@dataclass
class EnvConfig:
    """Root run configuration."""

    task: TaskWorld = field(default_factory=TaskWorld)
    backend: str = "analytic-push"
    cage: dict | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    dris: DRISConfig = field(default_factory=DRISConfig)
    mode: str = "online"
    chunk_length: int = 8
    horizon: int = 100
    seed: int = 0
    extras: dict = field(default_factory=dict)

    def validate(self) -> "EnvConfig":
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}", "mode")
        if self.horizon < 1:
            raise ConfigurationError("horizon must be >= 1", "horizon")
        if self.chunk_length < 1:
            raise ConfigurationError("chunk_length must be >= 1", "chunk_length")
        if self.backend not in BACKENDS:
            raise ConfigurationError(f"unknown backend {self.backend!r}", "tsip.backend")
        if self.dris.m < 1:
            raise ConfigurationError("m must be >= 1", "dris.m")
        if self.dris.pose_noise_std < 0:
            raise ConfigurationError("pose_noise_std must be >= 0", "dris.pose_noise_std")
        try:
            width_preset(self.dris.width)
        except ConfigurationError as e:
            raise ConfigurationError(str(e), "dris.width") from None
        self.solver.validate()
        self.perturbation.validate()
        self.build_cage()
        return self

    def build_cage(self) -> Cage | None:
        return cage_from_config(self.cage)

    @property
    def baseline(self) -> bool:
        return self.cage is None and self.solver.num_samples == 1

    def as_baseline(self) -> "EnvConfig":
        """Same run with one sample and no cage (direct policy execution)."""
        cfg = copy.deepcopy(self)
        cfg.cage = None
        cfg.solver.num_samples = 1
        return cfg

    def to_dict(self) -> dict:
        t = asdict(self.task)
        task = {"name": t.pop("task"), **t}
        task["goal"] = list(task["goal"])
        task["circle_center"] = list(task["circle_center"])
        out = {
            "config_version": CONFIG_VERSION,
            "task": task,
            "tsip": {"backend": self.backend},
            "cage": copy.deepcopy(self.cage),
            "solver": asdict(self.solver),
            "perturbation": asdict(self.perturbation),
            "dris": {"m": self.dris.m, "width": self.dris.width, "pose_noise_std": self.dris.pose_noise_std,
                     "context": self.dris.context.to_dict()},
            "mode": self.mode,
            "chunk_length": self.chunk_length,
            "horizon": self.horizon,
            "seed": self.seed,
        }
        if isinstance(out["solver"]["sampler"]["std"], tuple):
            out["solver"]["sampler"]["std"] = list(out["solver"]["sampler"]["std"])
        if out["solver"]["sampler"]["policy"] is None:
            del out["solver"]["sampler"]["policy"]
        if out["solver"]["sampler"]["actions"] is None:
            del out["solver"]["sampler"]["actions"]
        out.update(copy.deepcopy(self.extras))
        return out

    def hash(self) -> str:
        return config_hash(self.to_dict())


def config_hash(data: dict) -> str:
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _default_context(task: str) -> dict:
    return {"drag_coeff": 0.002} if task == "catch-ball" else {}


def from_dict(data: dict, lines: dict | None = None) -> EnvConfig:
    """Validate a parsed config object and build an EnvConfig."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = min(errors, key=lambda e: len(list(e.absolute_path)))
        # prefer the most specific error under anyOf branches
        while err.context:
            err = max(err.context, key=lambda e: len(list(e.absolute_path)))
        path = list(err.absolute_path)
        raise ConfigurationError(err.message, _dotted(path) or "<root>", _line_of(lines, path))
    try:
        task = dict(data["task"])
        name = task.pop("name")
        if "goal" in task:
            task["goal"] = tuple(task["goal"][:2])
        if "circle_center" in task:
            task["circle_center"] = tuple(task["circle_center"][:2])
        world = TaskWorld.for_task(name, **task)
        dris_block = dict(data.get("dris", {}))
        ctx = Context(**{**_default_context(name), **dris_block.pop("context", {})})
        solver_block = dict(data.get("solver", {}))
        sampler = SamplerConfig(**solver_block.pop("sampler", {}))
        cfg = EnvConfig(
            task=world,
            backend=data.get("tsip", {}).get("backend", "analytic-ballistic" if name == "catch-ball" else "analytic-push"),
            cage=copy.deepcopy(data.get("cage")),
            solver=SolverConfig(sampler=sampler, **solver_block),
            perturbation=PerturbationConfig(**data.get("perturbation", {})),
            dris=DRISConfig(context=ctx, **dris_block),
            mode=data.get("mode", "online"),
            chunk_length=data.get("chunk_length", 8),
            horizon=data.get("horizon", world.step_budget),
            seed=data.get("seed", 0),
            extras={k: copy.deepcopy(data[k]) for k in ("sweep", "ablation", "profile") if k in data},
        )
        return cfg.validate()
    except ConfigurationError as e:
        if e.line is None and e.path:
            raise ConfigurationError(e.message, e.path, _line_of(lines, _split(e.path))) from None
        raise


def loads(text: str) -> EnvConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"invalid JSON: {e.msg}", None, e.lineno) from None
    return from_dict(data, locate_lines(text))


def load(path) -> EnvConfig:
    with open(path) as f:
        return loads(f.read())


def default_config(task: str = "push-to-goal", **overrides) -> EnvConfig:
    """Default configuration for a task; keyword overrides replace top-level fields."""
    world = TaskWorld.for_task(task)
    cfg = EnvConfig(
        task=world,
        backend="analytic-ballistic" if task == "catch-ball" else "analytic-push",
        dris=DRISConfig(context=Context(**_default_context(task))),
        horizon=world.step_budget,
    )
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg.validate()


# -- locating fields in the source text


def _dotted(path: list) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


def _split(dotted: str) -> list:
    parts = []
    for name, idx in re.findall(r"([^.\[\]]+)|\[(\d+)\]", dotted):
        parts.append(int(idx) if idx else name)
    return parts


def _line_of(lines: dict | None, path: list) -> int | None:
    if not lines:
        return None
    path = list(path)
    while path:
        if tuple(path) in lines:
            return lines[tuple(path)]
        path.pop()
    return lines.get(())


_WS = re.compile(r"[ \t\n\r]*")
_SCALAR = re.compile(r"-?\d+(\.\d+)?([eE][-+]?\d+)?|true|false|null")


def locate_lines(text: str) -> dict:
    """Map each JSON value's path (tuple of keys/indices) to its 1-based line."""
    lines: dict = {}

    def line(pos: int) -> int:
        return text.count("\n", 0, pos) + 1

    def ws(pos: int) -> int:
        return _WS.match(text, pos).end()

    def value(pos: int, path: tuple) -> int:
        pos = ws(pos)
        lines[path] = line(pos)
        ch = text[pos]
        if ch == "{":
            pos = ws(pos + 1)
            if text[pos] == "}":
                return pos + 1
            while True:
                key, pos = scanstring(text, ws(pos) + 1)
                pos = ws(pos) + 1  # colon
                pos = ws(value(pos, path + (key,)))
                if text[pos] == "}":
                    return pos + 1
                pos += 1
        if ch == "[":
            pos = ws(pos + 1)
            if text[pos] == "]":
                return pos + 1
            i = 0
            while True:
                pos = ws(value(pos, path + (i,)))
                i += 1
                if text[pos] == "]":
                    return pos + 1
                pos += 1
        if ch == '"':
            return scanstring(text, pos + 1)[1]
        return _SCALAR.match(text, pos).end()

    try:
        value(0, ())
    except (IndexError, AttributeError, ValueError):
        pass
    return lines


__all__ = ["EnvConfig", "DRISConfig", "load", "loads", "from_dict", "default_config", "config_hash",
           "CONFIG_VERSION", "__version__"]

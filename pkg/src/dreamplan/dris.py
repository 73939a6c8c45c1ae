"""Distributional state: sets of (state, context) instances and their statistics.

A state vector is a flat float64 array with a fixed slot layout shared by every
task (see the ``X``..``RY`` index constants). Contexts are physical parameter
samples. A :class:`DRIS` bundles ``m`` states with ``m`` contexts; instance ``i``
always carries context ``i``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError

# state slot layout
X, Y, YAW, VX, VY, WZ, Z, VZ, RX, RY = range(10)
STATE_DIM = 10
STATE_FIELDS = ("x", "y", "yaw", "vx", "vy", "wz", "z", "vz", "robot_x", "robot_y")
POSITION = (X, Y)

# context slot layout
MASS, FRICTION, GEOMETRY, DRAG = range(4)
CONTEXT_DIM = 4
CONTEXT_FIELDS = ("mass_kg", "friction_coeff", "geometry_scale", "drag_coeff")

# heading noise std per meter of positional noise std
HEADING_NOISE_PER_METER = 1.0


def wrap_angle(a):
    """Wrap angles to (-pi, pi]."""
    return math.pi - np.mod(math.pi - np.asarray(a, dtype=float), 2.0 * math.pi)


def make_state(**fields: float) -> np.ndarray:
    """Build a state vector from named slots; unspecified slots are zero."""
    s = np.zeros(STATE_DIM)
    for name, value in fields.items():
        try:
            s[STATE_FIELDS.index(name)] = value
        except ValueError:
            raise ConfigurationError(f"unknown state field {name!r}") from None
    s[YAW] = wrap_angle(s[YAW])
    if not np.all(np.isfinite(s)):
        raise ConfigurationError("state components must be finite")
    return s


@dataclass(frozen=True)
class Context:
    """Physical parameters of one object instance."""

    mass_kg: float = 0.05
    friction_coeff: float = 0.5
    geometry_scale: float = 1.0
    drag_coeff: float = 0.0

    def __post_init__(self):
        vals = self.to_array()
        if not np.all(np.isfinite(vals)):
            raise ConfigurationError("context fields must be finite")
        if min(self.mass_kg, self.friction_coeff, self.geometry_scale) <= 0:
            raise ConfigurationError("mass, friction and geometry scale must be positive")
        if self.drag_coeff < 0:
            raise ConfigurationError("drag_coeff must be nonnegative")

    def to_array(self) -> np.ndarray:
        return np.array([self.mass_kg, self.friction_coeff, self.geometry_scale, self.drag_coeff])

    @classmethod
    def from_array(cls, a: Sequence[float]) -> "Context":
        return cls(*(float(v) for v in a))

    def to_dict(self) -> dict:
        return dict(zip(CONTEXT_FIELDS, (float(v) for v in self.to_array())))


@dataclass(frozen=True)
class WidthPreset:
    """Per-parameter multiplier range applied to a base context."""

    lower_mult: float
    upper_mult: float

    def __post_init__(self):
        if not (0 < self.lower_mult <= self.upper_mult) or not math.isfinite(self.upper_mult):
            raise ConfigurationError(
                f"invalid width [{self.lower_mult}, {self.upper_mult}]: need 0 < lower <= upper"
            )


WIDTHS = {
    "zero": WidthPreset(1.0, 1.0),
    "narrow": WidthPreset(0.9, 1.2),
    "medium": WidthPreset(0.5, 2.0),
    "wide": WidthPreset(0.2, 3.0),
}


def width_preset(spec) -> WidthPreset:
    """Resolve a preset name, a ``[lo, hi]`` pair or a WidthPreset."""
    if isinstance(spec, WidthPreset):
        return spec
    if isinstance(spec, str):
        try:
            return WIDTHS[spec.lower()]
        except KeyError:
            raise ConfigurationError(f"unknown width preset {spec!r}") from None
    lo, hi = spec
    return WidthPreset(float(lo), float(hi))


@dataclass(frozen=True)
class DistStats:
    mean: np.ndarray
    variance: np.ndarray


def _stats(states: np.ndarray) -> DistStats:
    # averaging deviations from the first instance keeps identical instances exact
    mean = states[0] + (states - states[0]).mean(axis=0)
    variance = states.var(axis=0)
    # heading: circular mean taken relative to the first instance, so a single
    # instance (or identical instances) yields exactly zero spread
    dev = wrap_angle(states[:, YAW] - states[0, YAW])
    offset = math.atan2(np.sin(dev).mean(), np.cos(dev).mean())
    mean[YAW] = wrap_angle(states[0, YAW] + offset)
    variance[YAW] = np.mean(wrap_angle(dev - offset) ** 2)
    mean.flags.writeable = False
    variance.flags.writeable = False
    return DistStats(mean, variance)


@dataclass(frozen=True, eq=False)
class DRIS:
    """Immutable set of ``m`` (state, context) instances at one timestep.

    ``states`` has shape ``(m, STATE_DIM)`` and ``contexts`` ``(m, CONTEXT_DIM)``;
    both are stored read-only.
    """

    states: np.ndarray
    contexts: np.ndarray
    timestep: int = 0
    stats: DistStats = field(init=False, repr=False)

    def __post_init__(self):
        states = np.array(self.states, dtype=float)
        contexts = np.array(self.contexts, dtype=float)
        if states.ndim != 2 or states.shape[1] != STATE_DIM or len(states) < 1:
            raise ConfigurationError(f"DRIS states must have shape (m>=1, {STATE_DIM})")
        if contexts.shape != (len(states), CONTEXT_DIM):
            raise ConfigurationError("DRIS needs one context per instance")
        states.flags.writeable = False
        contexts.flags.writeable = False
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "contexts", contexts)
        object.__setattr__(self, "timestep", int(self.timestep))
        object.__setattr__(self, "stats", _stats(states))

    @property
    def m(self) -> int:
        return len(self.states)

    @property
    def instances(self) -> list[tuple[np.ndarray, Context]]:
        return [(s, Context.from_array(c)) for s, c in zip(self.states, self.contexts)]

    def to_dict(self) -> dict:
        return {
            "timestep": self.timestep,
            "instances": [
                {"state": s.tolist(), "context": dict(zip(CONTEXT_FIELDS, c.tolist()))}
                for s, c in zip(self.states, self.contexts)
            ],
            "stats": {"mean": self.stats.mean.tolist(), "variance": self.stats.variance.tolist()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DRIS":
        states = [inst["state"] for inst in data["instances"]]
        contexts = [[inst["context"][k] for k in CONTEXT_FIELDS] for inst in data["instances"]]
        return cls(np.array(states), np.array(contexts), data["timestep"])

    @classmethod
    def from_instances(cls, pairs: Iterable[tuple[Sequence[float], Context]], timestep: int = 0) -> "DRIS":
        pairs = list(pairs)
        if not pairs:
            raise ConfigurationError("DRIS needs at least one instance")
        states = np.array([s for s, _ in pairs], dtype=float)
        contexts = np.array([c.to_array() for _, c in pairs])
        return cls(states, contexts, timestep)


def sample_contexts(base: Context, width: WidthPreset, m: int, rng: np.random.Generator) -> list[Context]:
    """Draw ``m`` contexts with per-parameter log-uniform multipliers."""
    return [Context.from_array(row) for row in sample_context_array(base, width, m, rng)]


def sample_context_array(base: Context, width: WidthPreset, m: int, rng: np.random.Generator) -> np.ndarray:
    width = width_preset(width)
    if m < 1:
        raise ConfigurationError("m must be >= 1")
    lo, hi = math.log(width.lower_mult), math.log(width.upper_mult)
    mult = np.exp(rng.uniform(lo, hi, size=(m, CONTEXT_DIM)))
    mult = np.clip(mult, width.lower_mult, width.upper_mult)
    return base.to_array() * mult


def make_dris(
    observed: np.ndarray,
    contexts,
    pose_noise_std: float,
    rng: np.random.Generator,
    timestep: int = 0,
) -> DRIS:
    """Overlay ``len(contexts)`` pose hypotheses around an observed state."""
    if isinstance(contexts, np.ndarray):
        ctx = np.atleast_2d(contexts)
    else:
        contexts = list(contexts)
        ctx = np.array([c.to_array() for c in contexts]) if contexts else np.empty((0, CONTEXT_DIM))
    if len(ctx) == 0:
        raise ConfigurationError("make_dris needs at least one context")
    if pose_noise_std < 0:
        raise ConfigurationError("pose_noise_std must be >= 0")
    m = len(ctx)
    states = np.tile(np.asarray(observed, dtype=float), (m, 1))
    if pose_noise_std > 0:
        # centered: the hypotheses' mean pose is the observation itself
        noise = rng.normal(0.0, pose_noise_std, size=(m, 3))
        noise -= noise.mean(axis=0)
        states[:, X] += noise[:, 0]
        states[:, Y] += noise[:, 1]
        states[:, YAW] = wrap_angle(states[:, YAW] + HEADING_NOISE_PER_METER * noise[:, 2])
    return DRIS(states, ctx, timestep)


def project_states(d: DRIS) -> list[np.ndarray]:
    return list(d.states)


def dist_stats(d: DRIS) -> DistStats:
    return d.stats

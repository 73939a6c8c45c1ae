"""Time-indexed admissible regions over a DRIS.

Every cage is an immutable spec. ``update(t)`` returns a copy whose active
region is the time-``t`` geometry; ``evaluate`` and ``validate`` read only that
copy, so they are pure.

Cost of a region against a DRIS::

    mean_i max(0, |pos_i - center| - radius) + alpha * sqrt(sum of positional variances)

Containment is closed: an instance exactly on the boundary is inside.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .dris import DRIS, X, Y, Z
from .errors import ConfigurationError

RESERVED_KINDS = ("plate", "pixel")


def _axes(dim: int) -> list[int]:
    return [X, Y] if dim == 2 else [X, Y, Z]


class Cage:
    kind = "base"
    t: int = 0

    def update(self, t: int) -> "Cage":
        raise NotImplementedError

    def evaluate(self, d: DRIS) -> float:
        raise NotImplementedError

    def validate(self, d: DRIS) -> bool:
        raise NotImplementedError

    def hinge(self, d: DRIS) -> float:
        """Containment part of the cost, without the spread term."""
        raise NotImplementedError


class _RegionCage(Cage):
    """Shared disc/ball logic for cages with one active center and radius."""

    radius: float
    alpha: float

    def active_center(self) -> np.ndarray:
        raise NotImplementedError

    def _distances(self, d: DRIS) -> np.ndarray:
        center = self.active_center()
        pos = d.states[:, _axes(len(center))]
        diff = pos - center
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))

    def hinge(self, d: DRIS) -> float:
        return float(np.mean(np.maximum(0.0, self._distances(d) - self.radius)))

    def evaluate(self, d: DRIS) -> float:
        dim = len(self.active_center())
        spread = float(np.sqrt(np.sum(d.stats.variance[_axes(dim)])))
        return self.hinge(d) + self.alpha * spread

    def validate(self, d: DRIS) -> bool:
        return bool(np.all(self._distances(d) <= self.radius))


@dataclass(frozen=True)
class GeometricCage(_RegionCage):
    """Disc (or ball) whose center follows keyframes ``[(t, point), ...]``.

    A single keyframe gives a static region. Between keyframes the center is
    linearly interpolated; past the last keyframe it holds.
    """

    keyframes: tuple
    radius: float
    alpha: float = 1.0
    t: int = 0
    kind = "geometric"

    def __post_init__(self):
        if self.radius <= 0:
            raise ConfigurationError("cage radius must be > 0", "cage.radius")
        if self.alpha < 0:
            raise ConfigurationError("cage alpha must be >= 0", "cage.alpha")
        frames = tuple((int(t), tuple(float(v) for v in p)) for t, p in self.keyframes)
        if not frames:
            raise ConfigurationError("geometric cage needs a center", "cage.center")
        times = [t for t, _ in frames]
        if times != sorted(times) or len(set(times)) != len(times):
            raise ConfigurationError("center keyframes must have strictly increasing times", "cage.center_path")
        if len({len(p) for _, p in frames}) != 1 or len(frames[0][1]) not in (2, 3):
            raise ConfigurationError("cage centers must all be 2D or all 3D points", "cage.center")
        object.__setattr__(self, "keyframes", frames)

    @classmethod
    def static(cls, center: Sequence[float], radius: float, alpha: float = 1.0) -> "GeometricCage":
        return cls(((0, tuple(center)),), radius, alpha)

    def update(self, t: int) -> "GeometricCage":
        if t < 0:
            raise ValueError("cage timestep must be >= 0")
        return replace(self, t=int(t))

    def active_center(self) -> np.ndarray:
        times = np.array([k for k, _ in self.keyframes], dtype=float)
        pts = np.array([p for _, p in self.keyframes])
        return np.array([np.interp(self.t, times, pts[:, j]) for j in range(pts.shape[1])])


@dataclass(frozen=True)
class TrajectoryCage(_RegionCage):
    """Tube around a piecewise-linear path, active as a disc at the scheduled progress.

    ``schedule`` maps timestep to arc-length fraction: either an explicit
    nondecreasing sequence (held at its last value) or, when omitted, uniform
    progress over ``duration`` steps.
    """

    waypoints: tuple
    radius: float
    duration: int = 100
    schedule: tuple | None = None
    alpha: float = 1.0
    t: int = 0
    kind = "trajectory"

    def __post_init__(self):
        pts = tuple(tuple(float(v) for v in p) for p in self.waypoints)
        if len(pts) < 1 or len({len(p) for p in pts}) != 1 or len(pts[0]) not in (2, 3):
            raise ConfigurationError("trajectory cage needs 2D or 3D waypoints", "cage.waypoints")
        if self.radius <= 0:
            raise ConfigurationError("cage tube radius must be > 0", "cage.radius")
        if self.alpha < 0:
            raise ConfigurationError("cage alpha must be >= 0", "cage.alpha")
        if self.duration < 1:
            raise ConfigurationError("cage duration must be >= 1", "cage.duration")
        if self.schedule is not None:
            sched = tuple(float(v) for v in self.schedule)
            if not sched or any(b < a for a, b in zip(sched, sched[1:])) or sched[0] < 0 or sched[-1] > 1:
                raise ConfigurationError("progress schedule must be nondecreasing within [0, 1]", "cage.schedule")
            object.__setattr__(self, "schedule", sched)
        object.__setattr__(self, "waypoints", pts)

    def update(self, t: int) -> "TrajectoryCage":
        if t < 0:
            raise ValueError("cage timestep must be >= 0")
        return replace(self, t=int(t))

    def progress(self) -> float:
        if self.schedule is not None:
            return self.schedule[min(self.t, len(self.schedule) - 1)]
        return min(1.0, self.t / self.duration)

    def active_center(self) -> np.ndarray:
        pts = np.array(self.waypoints)
        if len(pts) == 1:
            return pts[0]
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        if cum[-1] == 0:
            return pts[0]
        target = self.progress() * cum[-1]
        return np.array([np.interp(target, cum, pts[:, j]) for j in range(pts.shape[1])])


@dataclass(frozen=True)
class CompositeCage(Cage):
    """Weighted sum of child costs; valid only if every child is valid."""

    children: tuple
    weights: tuple | None = None
    t: int = 0
    kind = "composite"

    def __post_init__(self):
        children = tuple(self.children)
        if not children:
            raise ConfigurationError("composite cage needs at least one child", "cage.children")
        weights = tuple(float(w) for w in (self.weights if self.weights is not None else [1.0] * len(children)))
        if len(weights) != len(children):
            raise ConfigurationError("composite weights must match children", "cage.weights")
        if any(w < 0 for w in weights):
            raise ConfigurationError("composite weights must be >= 0", "cage.weights")
        object.__setattr__(self, "children", children)
        object.__setattr__(self, "weights", weights)

    def update(self, t: int) -> "CompositeCage":
        return replace(self, children=tuple(c.update(t) for c in self.children), t=int(t))

    def evaluate(self, d: DRIS) -> float:
        return float(sum(w * c.evaluate(d) for w, c in zip(self.weights, self.children)))

    def hinge(self, d: DRIS) -> float:
        return float(sum(w * c.hinge(d) for w, c in zip(self.weights, self.children)))

    def validate(self, d: DRIS) -> bool:
        return all(c.validate(d) for c in self.children)


def cage_from_config(block: dict | None, path: str = "cage") -> Cage | None:
    """Build a cage from its declarative JSON block (``None`` means no cage)."""
    if block is None:
        return None
    if not isinstance(block, dict):
        raise ConfigurationError("cage must be an object", path)
    kind = block.get("kind")
    alpha = float(block.get("alpha", 1.0))
    try:
        if kind == "geometric":
            if "center_path" in block:
                frames = [(f["t"], f["center"]) for f in block["center_path"]]
            elif "center" in block:
                frames = [(0, block["center"])]
            else:
                raise ConfigurationError("geometric cage needs 'center' or 'center_path'", path)
            return GeometricCage(tuple(frames), float(block["radius"]), alpha)
        if kind == "trajectory":
            return TrajectoryCage(
                tuple(block["waypoints"]),
                float(block["radius"]),
                duration=int(block.get("duration", 100)),
                schedule=block.get("schedule"),
                alpha=alpha,
            )
        if kind == "composite":
            children = tuple(cage_from_config(c, f"{path}.children[{i}]") for i, c in enumerate(block["children"]))
            return CompositeCage(children, block.get("weights"))
    except KeyError as e:
        raise ConfigurationError(f"missing field {e.args[0]!r}", path) from None
    except ConfigurationError as e:
        if e.path and not e.path.startswith(path):
            raise ConfigurationError(e.message, path + e.path[len("cage"):]) from None
        raise
    if kind in RESERVED_KINDS:
        raise ConfigurationError(f"cage kind {kind!r} is reserved and not implemented", f"{path}.kind")
    raise ConfigurationError(f"unknown cage kind {kind!r}", f"{path}.kind")

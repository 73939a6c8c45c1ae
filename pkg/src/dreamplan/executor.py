"""Ground-truth world with injected perturbations.

The executor owns the true state and true context of one episode. It steps the
world with the same stepper the analytic TSIP backends use, delays and noises
observations, and records per-step entries for replay.
"""
from __future__ import annotations

import hashlib
import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from .dris import CONTEXT_DIM, RX, RY, X, Y, Z, Context, make_state
from .errors import ConfigurationError, EpisodeStateError
from .tsip import TaskWorld, check_actions, task_stepper

# severity s maps to per-parameter multipliers ~ U[1 - 0.8 s, 1 + 2 s], floored
SEVERITY_LOW_SLOPE = 0.8
SEVERITY_HIGH_SLOPE = 2.0
MIN_MULTIPLIER = 0.05


@dataclass
class PerturbationConfig:
    obs_noise_std: float = 0.0
    obs_delay_steps: int = 0
    physics_severity: float = 0.0

    def validate(self, path: str = "perturbation"):
        if not self.obs_noise_std >= 0:
            raise ConfigurationError("obs_noise_std must be >= 0", f"{path}.obs_noise_std")
        if self.obs_delay_steps < 0 or int(self.obs_delay_steps) != self.obs_delay_steps:
            raise ConfigurationError("obs_delay_steps must be a nonnegative integer", f"{path}.obs_delay_steps")
        if not 0 <= self.physics_severity <= 1:
            raise ConfigurationError("physics_severity must be in [0, 1]", f"{path}.physics_severity")
        return self


def severity_bounds(severity: float) -> tuple[float, float]:
    return max(1.0 - SEVERITY_LOW_SLOPE * severity, MIN_MULTIPLIER), 1.0 + SEVERITY_HIGH_SLOPE * severity


def initial_state(world: TaskWorld, context: Context, rng: np.random.Generator) -> np.ndarray:
    """Sample the starting object/robot configuration for a task."""
    R = world.object_radius * context.geometry_scale
    if world.task == "push-to-goal":
        goal = np.asarray(world.goal, dtype=float)
        ang = rng.uniform(-math.pi, math.pi)
        dist = rng.uniform(0.12, 0.2)
        o = goal + dist * np.array([math.cos(ang), math.sin(ang)])
        side = ang + rng.uniform(-0.5 * math.pi, 0.5 * math.pi)
        p = o + (R + 0.015) * np.array([math.cos(side), math.sin(side)])
        return make_state(x=o[0], y=o[1], yaw=rng.uniform(-math.pi, math.pi), robot_x=p[0], robot_y=p[1])
    if world.task == "push-follow-circle":
        o = world.reference_point(0) + rng.normal(0.0, 0.005, 2)
        # behind the object with respect to the direction of travel
        ang = math.atan2(o[1] - world.circle_center[1], o[0] - world.circle_center[0])
        back = np.array([math.sin(ang), -math.cos(ang)])
        p = o + (R + 0.015) * back
        return make_state(x=o[0], y=o[1], yaw=0.0, robot_x=p[0], robot_y=p[1])
    # catch-ball: launch so that the drag-free landing point lies near the origin
    land = rng.uniform(-0.12, 0.12, 2)
    start = np.array([rng.uniform(-0.5, -0.35), rng.uniform(-0.15, 0.15)])
    z0 = 0.3
    tau = rng.uniform(0.7, 0.9)
    vz = (0.5 * world.gravity * tau * tau - z0) / tau
    v = (land - start) / tau
    return make_state(x=start[0], y=start[1], z=z0, vx=v[0], vy=v[1], vz=vz)


@dataclass
class StepEntry:
    t: int
    true_state: list
    observed_state: list
    action: list
    cage_cost: float
    valid: bool
    infeasible: bool
    timing: dict | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["timing"] is None:
            del d["timing"]
        return d


@dataclass
class EpisodeRecord:
    """Replayable log of one episode: seeds, configs, per-step entries, outcome."""

    seeds: dict
    config: dict
    steps: list = field(default_factory=list)
    outcome: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_jsonl(self) -> str:
        header = {"kind": "header", "seeds": self.seeds, "config": self.config, **self.meta}
        lines = [json.dumps(header, sort_keys=True)]
        lines += [json.dumps({"kind": "step", **s.to_dict()}, sort_keys=True) for s in self.steps]
        lines.append(json.dumps({"kind": "outcome", **self.outcome}, sort_keys=True))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "EpisodeRecord":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        header = rows[0]
        steps = [StepEntry(**{k: v for k, v in r.items() if k != "kind"}) for r in rows if r["kind"] == "step"]
        outcome = {k: v for k, v in rows[-1].items() if k != "kind"}
        meta = {k: v for k, v in header.items() if k not in ("kind", "seeds", "config")}
        return cls(header["seeds"], header["config"], steps, outcome, meta)


class Executor:
    """Steps the true world once per action and serves delayed, noisy observations."""

    def __init__(self, world: TaskWorld, perturbation: PerturbationConfig | None = None,
                 default_context: Context | None = None):
        self.world = world
        self.perturbation = (perturbation or PerturbationConfig()).validate()
        self.default_context = default_context or Context()
        self._step = task_stepper(world.task)
        self.state: np.ndarray | None = None
        self.context: Context | None = None
        self.t = 0
        self._obs_rng = np.random.default_rng(0)
        self._buffer: deque = deque()
        self._errors: list[float] = []
        self._min_goal_dist = math.inf
        self._landing: np.ndarray | None = None
        self._landing_plate: np.ndarray | None = None

    # -- episode lifecycle

    def reset(self, reset_rng: np.random.Generator, obs_rng: np.random.Generator,
              state: np.ndarray | None = None) -> np.ndarray:
        lo, hi = severity_bounds(self.perturbation.physics_severity)
        mult = np.maximum(reset_rng.uniform(lo, hi, size=CONTEXT_DIM), MIN_MULTIPLIER)
        if self.perturbation.physics_severity == 0:
            self.context = self.default_context
        else:
            self.context = Context.from_array(self.default_context.to_array() * mult)
        sampled = initial_state(self.world, self.context, reset_rng)
        self.state = sampled if state is None else np.array(state, dtype=float)
        self.t = 0
        self._obs_rng = obs_rng
        self._buffer = deque([self.state.copy()], maxlen=self.perturbation.obs_delay_steps + 1)
        self._errors = []
        self._min_goal_dist = math.inf
        self._landing = None
        self._landing_plate = None
        self._track()
        return self.get_obs()

    @property
    def active(self) -> bool:
        return self.state is not None and not self.done

    @property
    def done(self) -> bool:
        if self.state is None:
            return False
        if self.world.task == "push-to-goal" and self._min_goal_dist <= self.world.goal_tolerance:
            return True
        if self.world.task == "catch-ball" and self._landing is not None:
            return True
        return self.t >= self.world.step_budget

    def execute(self, chunk) -> list[np.ndarray]:
        """Step the true world once per action; stops early if the episode ends.

        Returns the post-step true states.
        """
        if self.state is None:
            raise EpisodeStateError("execute called before reset")
        if self.done:
            raise EpisodeStateError("episode already terminated")
        actions = check_actions(chunk, self.world)
        ctx = self.context.to_array()[None]
        states = []
        for a in actions:
            if self.done:
                break
            prev = self.state
            self.state = self._step(prev[None], a[None], ctx, self.world)[0]
            self.t += 1
            self._buffer.append(self.state.copy())
            self._track(prev)
            states.append(self.state)
        return states

    def _track(self, prev: np.ndarray | None = None):
        s, w = self.state, self.world
        if w.task == "push-to-goal":
            self._min_goal_dist = min(self._min_goal_dist, math.hypot(s[X] - w.goal[0], s[Y] - w.goal[1]))
        elif w.task == "push-follow-circle":
            ref = w.reference_point(self.t)
            self._errors.append(math.hypot(s[X] - ref[0], s[Y] - ref[1]))
        elif prev is not None and self._landing is None and s[Z] <= 0 < prev[Z]:
            f = prev[Z] / (prev[Z] - s[Z])
            self._landing = prev[[X, Y]] + f * (s[[X, Y]] - prev[[X, Y]])
            self._landing_plate = prev[[RX, RY]] + f * (s[[RX, RY]] - prev[[RX, RY]])

    # -- observation

    def get_obs(self) -> np.ndarray:
        """True state from ``obs_delay_steps`` ago with fresh Gaussian position noise."""
        if self.state is None:
            raise EpisodeStateError("get_obs called before reset")
        obs = self._buffer[0].copy()
        sigma = self.perturbation.obs_noise_std
        if sigma > 0:
            obs[[X, Y]] += self._obs_rng.normal(0.0, sigma, size=2)
        return obs

    def robot_state(self) -> np.ndarray:
        """Current (undelayed, noise-free) state; only the robot slots are meaningful to callers."""
        return self.state.copy()

    # -- evaluation

    def tracking_error(self) -> float:
        return float(np.mean(self._errors)) if self._errors else math.inf

    def success(self, tolerance: float | None = None) -> bool:
        w = self.world
        if w.task == "push-to-goal":
            return self._min_goal_dist <= (w.goal_tolerance if tolerance is None else tolerance)
        if w.task == "push-follow-circle":
            tol = w.tracking_tolerance if tolerance is None else tolerance
            return self.tracking_error() < tol
        if self._landing is None:
            return False
        tol = w.plate_radius if tolerance is None else tolerance
        return math.hypot(*(self._landing - self._landing_plate)) <= tol

    def state_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.asarray(self.state).tobytes())
        h.update(str(self.t).encode())
        for s in self._buffer:
            h.update(np.asarray(s).tobytes())
        return h.hexdigest()

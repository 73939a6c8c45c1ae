"""Sample-predict-constrain action selection.

A solver pairs a sampler (proposes candidate actions) with an optimizer
(N-best or MPPI) that scores each candidate's predicted DRIS with

    total_cost = task_cost + cage_weight * cage_cost

and picks among candidates whose predicted DRIS stays inside the cage.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .cages import Cage
from .dris import DRIS, RX, RY, X, Y
from .errors import ConfigurationError
from .policies import get_policy, landing_point
from .tsip import TSIP, TaskWorld

OPTIMIZERS = ("n-best", "mppi")
FALLBACKS = ("least-violation",)


@dataclass
class SamplerConfig:
    kind: str = "scripted-policy"  # gaussian | discrete-set | scripted-policy
    policy: str | None = None  # defaults to the task's policy
    std: float | Sequence[float] = 0.003
    mean_source: str = "zero"  # gaussian only: zero | warm | policy
    actions: list | None = None  # discrete-set only

    def validate(self, path: str = "solver.sampler"):
        if self.kind not in ("gaussian", "discrete-set", "scripted-policy"):
            raise ConfigurationError(f"unknown sampler kind {self.kind!r}", f"{path}.kind")
        if np.any(np.asarray(self.std, dtype=float) < 0):
            raise ConfigurationError("sampler std must be >= 0", f"{path}.std")
        if self.mean_source not in ("zero", "warm", "policy"):
            raise ConfigurationError(f"unknown mean_source {self.mean_source!r}", f"{path}.mean_source")
        if self.kind == "discrete-set" and not self.actions:
            raise ConfigurationError("discrete-set sampler needs a nonempty action list", f"{path}.actions")


@dataclass
class SolverConfig:
    num_samples: int = 8
    cage_weight: float = 0.1
    optimizer: str = "n-best"
    mppi_iterations: int = 3
    temperature: float = 0.01
    warm_start: bool = True
    fallback: str = "least-violation"
    sampler: SamplerConfig = field(default_factory=SamplerConfig)

    def validate(self, path: str = "solver"):
        if self.num_samples < 1:
            raise ConfigurationError("num_samples must be >= 1", f"{path}.num_samples")
        if self.cage_weight < 0:
            raise ConfigurationError("cage_weight must be >= 0", f"{path}.cage_weight")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}", f"{path}.optimizer")
        if self.temperature <= 0:
            raise ConfigurationError("temperature must be > 0", f"{path}.temperature")
        if self.mppi_iterations < 1:
            raise ConfigurationError("mppi_iterations must be >= 1", f"{path}.mppi_iterations")
        if self.fallback not in FALLBACKS:
            raise ConfigurationError(f"unknown fallback {self.fallback!r}", f"{path}.fallback")
        self.sampler.validate(f"{path}.sampler")
        return self


# ---------------------------------------------------------------- samplers


class Sampler:
    def __init__(self, world: TaskWorld, std=0.0):
        self.world = world
        self.std = np.broadcast_to(np.asarray(std, dtype=float), (world.action_dim,)).copy()
        self.warm: np.ndarray | None = None

    def clip(self, a: np.ndarray) -> np.ndarray:
        return np.clip(a, self.world.action_low, self.world.action_high)

    def center(self, d: DRIS) -> np.ndarray:
        raise NotImplementedError

    def around(self, center: np.ndarray, n: int, rng: np.random.Generator, std=None) -> np.ndarray:
        """``n`` candidates: the center itself first, then Gaussian perturbations of it."""
        std = self.std if std is None else std
        center = self.clip(center)
        if n == 1:
            return center[None].copy()
        noise = rng.normal(0.0, 1.0, size=(n - 1, len(center))) * std
        return np.vstack([center, self.clip(center + noise)])

    def sample(self, d: DRIS, n: int, rng: np.random.Generator) -> np.ndarray:
        if n < 1:
            raise ConfigurationError("N must be >= 1")
        return self.around(self.center(d), n, rng)

    def reset(self):
        self.warm = None


class ScriptedPolicySampler(Sampler):
    """Policy action at the DRIS mean, plus exploration noise for candidates 2..N."""

    def __init__(self, world: TaskWorld, policy: Callable, std=0.0):
        super().__init__(world, std)
        self.policy = policy

    def center(self, d: DRIS) -> np.ndarray:
        return np.asarray(self.policy(d.stats.mean, self.world, d.timestep), dtype=float)


class GaussianSampler(Sampler):
    """Independent Gaussian candidates around a mean (zero, last action, or a policy)."""

    def __init__(self, world: TaskWorld, std, mean_source: str = "zero", policy: Callable | None = None):
        super().__init__(world, std)
        self.mean_source = mean_source
        self.policy = policy

    def center(self, d: DRIS) -> np.ndarray:
        if self.mean_source == "warm" and self.warm is not None:
            return self.warm
        if self.mean_source == "policy" and self.policy is not None:
            return np.asarray(self.policy(d.stats.mean, self.world, d.timestep), dtype=float)
        return np.zeros(self.world.action_dim)

    def sample(self, d: DRIS, n: int, rng: np.random.Generator) -> np.ndarray:
        if n < 1:
            raise ConfigurationError("N must be >= 1")
        mean = self.clip(self.center(d))
        noise = rng.normal(0.0, 1.0, size=(n, len(mean))) * self.std
        return self.clip(mean + noise)


class DiscreteSetSampler(Sampler):
    def __init__(self, world: TaskWorld, actions):
        super().__init__(world, 0.0)
        self.actions = self.clip(np.atleast_2d(np.asarray(actions, dtype=float)))

    def center(self, d: DRIS) -> np.ndarray:
        return self.actions[0]

    def sample(self, d: DRIS, n: int, rng: np.random.Generator) -> np.ndarray:
        if n != len(self.actions):
            raise ConfigurationError(f"discrete-set sampler has {len(self.actions)} actions but N = {n}",
                                     "solver.num_samples")
        return self.actions.copy()


def make_sampler(cfg: SamplerConfig, world: TaskWorld) -> Sampler:
    cfg.validate()
    policy = get_policy(cfg.policy or world.task)
    if cfg.kind == "scripted-policy":
        return ScriptedPolicySampler(world, policy, cfg.std)
    if cfg.kind == "gaussian":
        return GaussianSampler(world, cfg.std, cfg.mean_source, policy)
    return DiscreteSetSampler(world, cfg.actions)


# ---------------------------------------------------------------- scoring


def task_cost(world: TaskWorld, d_pred: DRIS) -> float:
    """Task progress cost of a predicted DRIS (distance of its mean to the task target)."""
    mean = d_pred.stats.mean
    if world.task == "push-to-goal":
        target = np.asarray(world.goal, dtype=float)
    elif world.task == "push-follow-circle":
        target = world.reference_point(d_pred.timestep)
    else:
        return float(math.hypot(*(landing_point(mean, world.gravity) - mean[[RX, RY]])))
    return float(math.hypot(mean[X] - target[0], mean[Y] - target[1]))


@dataclass
class CandidateBatch:
    actions: np.ndarray
    predicted: list
    cage_cost: np.ndarray
    task_cost: np.ndarray
    valid: np.ndarray
    total_cost: np.ndarray

    def __len__(self):
        return len(self.actions)

    def to_dict(self) -> dict:
        return {
            "actions": self.actions.tolist(),
            "cage_cost": self.cage_cost.tolist(),
            "task_cost": self.task_cost.tolist(),
            "valid": self.valid.tolist(),
            "total_cost": self.total_cost.tolist(),
            "predicted_mean": [p.stats.mean.tolist() for p in self.predicted],
            "predicted_variance": [p.stats.variance.tolist() for p in self.predicted],
        }


@dataclass
class Selection:
    index: int
    action: np.ndarray
    infeasible: bool


def select_nbest(batch: CandidateBatch, fallback: str = "least-violation") -> Selection:
    """Lowest total cost among valid candidates (lowest index on ties).

    With no valid candidate, the least cage-violating one is returned and
    flagged infeasible.
    """
    valid = np.asarray(batch.valid, dtype=bool)
    if valid.any():
        i = int(np.argmin(np.where(valid, batch.total_cost, np.inf)))
        return Selection(i, batch.actions[i], False)
    if fallback != "least-violation":
        raise ConfigurationError(f"unknown fallback {fallback!r}")
    i = int(np.argmin(batch.cage_cost))
    return Selection(i, batch.actions[i], True)


def mppi_weights(costs, valid, temperature: float) -> np.ndarray | None:
    """Normalized exp(-cost / temperature) weights; invalid candidates get 0.

    Returns None when nothing is valid.
    """
    valid = np.asarray(valid, dtype=bool)
    if not valid.any():
        return None
    c = np.asarray(costs, dtype=float)
    shifted = np.where(valid, c - c[valid].min(), np.inf)
    w = np.exp(-shifted / temperature)
    return w / w.sum()


def mppi_update(mean: np.ndarray, actions: np.ndarray, costs, valid, temperature: float):
    """One MPPI mean update; ``None`` when every candidate is invalid."""
    w = mppi_weights(costs, valid, temperature)
    if w is None:
        return None
    return mean + w @ (actions - mean)


Scorer = Callable[[np.ndarray], CandidateBatch]


def mppi_refine(center: np.ndarray, sampler: Sampler, scorer: Scorer, config: SolverConfig,
                rng: np.random.Generator):
    """Iterative MPPI refinement of a single-step action.

    Returns ``(action, final_batch, infeasible, batches)`` where ``final_batch``
    is the one-candidate re-evaluation of the returned action.
    """
    mean = sampler.clip(np.asarray(center, dtype=float))
    std = sampler.std.copy()
    all_invalid = False
    batches = []
    for _ in range(config.mppi_iterations):
        actions = sampler.around(mean, config.num_samples, rng, std)
        batch = scorer(actions)
        batches.append(batch)
        new_mean = mppi_update(mean, actions, batch.total_cost, batch.valid, config.temperature)
        if new_mean is None:
            all_invalid = True
            std = std * 1.5
        else:
            all_invalid = False
            mean = sampler.clip(new_mean)
    final = scorer(mean[None])
    infeasible = all_invalid or not bool(final.valid[0])
    return mean, final, infeasible, batches


@dataclass
class Diagnostics:
    index: int
    infeasible: bool
    cage_cost: float
    valid: bool
    bypassed: bool
    batch: CandidateBatch | None = None
    phases: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"index": self.index, "infeasible": self.infeasible, "cage_cost": self.cage_cost,
               "valid": self.valid, "bypassed": self.bypassed}
        if self.batch is not None:
            out["batch"] = self.batch.to_dict()
        return out


class _Clock:
    def __init__(self, phases: dict | None):
        self.phases = phases

    def add(self, name: str, t0: float) -> float:
        now = time.perf_counter()
        if self.phases is not None:
            self.phases[name] = self.phases.get(name, 0.0) + now - t0
        return now


class Solver:
    """Sampler + optimizer; one instance per planning loop (holds warm-start state)."""

    def __init__(self, config: SolverConfig, sampler: Sampler, world: TaskWorld):
        self.config = config.validate()
        self.sampler = sampler
        self.world = world

    @classmethod
    def from_config(cls, config: SolverConfig, world: TaskWorld) -> "Solver":
        return cls(config, make_sampler(config.sampler, world), world)

    def reset(self):
        self.sampler.reset()

    def score(self, d: DRIS, actions: np.ndarray, tsip: TSIP, cage: Cage | None, clock: _Clock | None = None):
        clock = clock or _Clock(None)
        t0 = time.perf_counter()
        predicted = tsip.next(d, actions)
        t0 = clock.add("tsip_next", t0)
        tc = np.array([task_cost(self.world, p) for p in predicted])
        if cage is None:
            cc = np.zeros(len(predicted))
            valid = np.ones(len(predicted), dtype=bool)
        else:
            cc = np.array([cage.evaluate(p) for p in predicted])
            valid = np.array([cage.validate(p) for p in predicted], dtype=bool)
        clock.add("cage_eval", t0)
        return CandidateBatch(np.asarray(actions, dtype=float), predicted, cc, tc, valid,
                              tc + self.config.cage_weight * cc)

    def solve(self, d: DRIS, tsip: TSIP, cage: Cage | None, t: int, rng: np.random.Generator,
              phases: dict | None = None):
        """Select one action for DRIS ``d`` at timestep ``t``.

        Returns ``(action, predicted_dris, diagnostics)``. With one sample and no
        cage the TSIP is bypassed and ``predicted_dris`` is None.
        """
        cfg = self.config
        clock = _Clock(phases)
        t0 = time.perf_counter()
        if cage is not None:
            cage = cage.update(t)
        if cfg.num_samples == 1 and cage is None:
            action = self.sampler.sample(d, 1, rng)[0]
            clock.add("sample", t0)
            return action, None, Diagnostics(0, False, 0.0, True, True, phases=phases or {})

        if cfg.optimizer == "n-best":
            actions = self.sampler.sample(d, cfg.num_samples, rng)
            t0 = clock.add("sample", t0)
            batch = self.score(d, actions, tsip, cage, clock)
            t0 = time.perf_counter()
            sel = select_nbest(batch, cfg.fallback)
            clock.add("select", t0)
            action, predicted, index = sel.action, batch.predicted[sel.index], sel.index
            infeasible = sel.infeasible
            diag_batch, cc, valid = batch, float(batch.cage_cost[index]), bool(batch.valid[index])
        else:
            center = self.sampler.warm if (cfg.warm_start and self.sampler.warm is not None) \
                else self.sampler.center(d)
            clock.add("sample", t0)
            action, final, infeasible, batches = mppi_refine(
                center, self.sampler, lambda a: self.score(d, a, tsip, cage, clock), cfg, rng)
            predicted, index = final.predicted[0], 0
            diag_batch, cc, valid = batches[-1], float(final.cage_cost[0]), bool(final.valid[0])
        self.sampler.warm = np.asarray(action, dtype=float).copy()
        return action, predicted, Diagnostics(index, infeasible, cc, valid, False, diag_batch, phases or {})

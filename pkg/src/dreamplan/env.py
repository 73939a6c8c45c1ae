"""User-facing environment wrapping executor, TSIP, cage and solver.

Sub-seeds: every component stream is seeded with the first 8 bytes (big
endian) of ``sha256(f"{master}/{tag}/{episode}")`` where ``tag`` is one of
``STREAM_TAGS``. The scheme is plain text so records stay portable.
"""
from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .config import EnvConfig
from .dris import DRIS
from .errors import ConfigurationError, EpisodeStateError
from .executor import EpisodeRecord, Executor, StepEntry
from .solver import Solver
from .tsip import check_actions, make_tsip

STREAM_TAGS = ("executor.reset", "executor.obs", "tsip.contexts", "tsip.pose", "solver")


def derive_seed(master: int, tag: str, episode: int = 0) -> int:
    digest = hashlib.sha256(f"{master}/{tag}/{episode}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def derive_streams(master: int, episode: int = 0) -> dict[str, int]:
    return {tag: derive_seed(master, tag, episode) for tag in STREAM_TAGS}


@dataclass
class Plan:
    actions: list
    predicted: list
    cage_costs: list
    valid: list
    infeasible_steps: list
    start_timestep: int
    config_hash: str

    def __len__(self):
        return len(self.actions)


@dataclass
class EpisodeOutcome:
    success: bool
    steps: int
    infeasible_steps: int = 0
    mean_cage_cost: float = 0.0
    tracking_error: float | None = None
    planning_times: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {"success": self.success, "steps": self.steps, "infeasible_steps": self.infeasible_steps,
               "mean_cage_cost": self.mean_cage_cost}
        if self.tracking_error is not None:
            out["tracking_error"] = self.tracking_error
        return out


class DreamEnv:
    """Single entry point: ``reset``, ``step``, ``dream`` and ``replay``.

    With ``solver.num_samples == 1`` and no cage the planning loop reduces to
    executing the scripted policy directly.
    """

    def __init__(self, config: EnvConfig, record_timing: bool = False, log_candidates: bool = False):
        self.config = config.validate()
        self.world = config.task
        self.cage = config.build_cage()
        self.tsip = make_tsip(config.backend, config.task, m=config.dris.m, width=config.dris.width_preset,
                              base_context=config.dris.context, pose_noise_std=config.dris.pose_noise_std)
        self.executor = Executor(config.task, config.perturbation, config.dris.context)
        self.solver = Solver.from_config(config.solver, config.task)
        self.record_timing = record_timing
        self.log_candidates = log_candidates
        self.candidate_log: list[dict] = []
        self.record: EpisodeRecord | None = None
        self.dris: DRIS | None = None
        self._obs: np.ndarray | None = None
        self._rng_solver = np.random.default_rng(0)
        self._cage_costs: list[float] = []
        self._infeasible = 0
        self._planning_times: list[float] = []
        self.step_phases: list[dict] = []

    # -- lifecycle

    def reset(self, seed: int | None = None, episode: int = 0) -> DRIS:
        master = self.config.seed if seed is None else int(seed)
        seeds = derive_streams(master, episode)
        rng = {tag: np.random.default_rng(s) for tag, s in seeds.items()}
        obs = self.executor.reset(rng["executor.reset"], rng["executor.obs"])
        self.tsip.reset(rng["tsip.contexts"], rng["tsip.pose"])
        self.solver.reset()
        self._rng_solver = rng["solver"]
        self._cage_costs, self._infeasible, self._planning_times = [], 0, []
        self.step_phases, self.candidate_log = [], []
        self.record = EpisodeRecord({"master": master, "episode": episode, **seeds}, self.config.to_dict(),
                                    meta={"version": __version__, "config_hash": self.config.hash()})
        self._observe(obs)
        return self.dris

    def _observe(self, obs: np.ndarray):
        self._obs = obs
        self.tsip.sync_state(obs, self.executor.robot_state(), self.executor.t)
        self.dris = self.tsip.get_dris()

    def _require_active(self):
        if self.record is None:
            raise EpisodeStateError("call reset() first")
        if self.executor.done:
            raise EpisodeStateError("episode already terminated; call reset()")

    def info(self) -> dict:
        return {"true_state": self.executor.state.copy(), "success": self.executor.success(),
                "timestep": self.executor.t, "done": self.executor.done}

    def _log_steps(self, actions, states, diags, obs):
        for a, s, d in zip(actions, states, diags):
            cc = d.cage_cost if d is not None else 0.0
            valid = d.valid if d is not None else True
            infeasible = d.infeasible if d is not None else False
            timing = dict(d.phases) if (d is not None and self.record_timing) else None
            self.record.steps.append(StepEntry(len(self.record.steps) + 1, s.tolist(), obs.tolist(),
                                               np.asarray(a).tolist(), cc, valid, infeasible, timing))
            self._cage_costs.append(cc)
            self._infeasible += int(infeasible)

    def step(self, action):
        """Execute one action directly (no planning), observe, rebuild the DRIS."""
        self._require_active()
        obs = self._obs
        states = self.executor.execute([action])
        self._log_steps([action], states, [None], obs)
        self._observe(self.executor.get_obs())
        info = self.info()
        if info["done"]:
            self._finish()
        return self.dris, info

    def outcome(self) -> EpisodeOutcome:
        ex = self.executor
        return EpisodeOutcome(
            success=ex.success(),
            steps=ex.t,
            infeasible_steps=self._infeasible,
            mean_cage_cost=float(np.mean(self._cage_costs)) if self._cage_costs else 0.0,
            tracking_error=ex.tracking_error() if self.world.task == "push-follow-circle" else None,
            planning_times=list(self._planning_times),
        )

    def _finish(self):
        self.record.outcome = self.outcome().to_dict()

    # -- planning

    def _plan_step(self, d: DRIS, t: int, sync_time: float = 0.0):
        phases = {"sync": sync_time} if self.record_timing else None
        t0 = time.perf_counter()
        action, predicted, diag = self.solver.solve(d, self.tsip, self.cage, t, self._rng_solver, phases)
        if self.record_timing:
            total = time.perf_counter() - t0 + sync_time
            diag.phases = dict(phases, total=total)
            self.step_phases.append(diag.phases)
            self._planning_times.append(total)
        if self.log_candidates:
            self.candidate_log.append({"t": t, **diag.to_dict()})
        return action, predicted, diag

    def dream(self, horizon: int | None = None):
        """Run the sample-predict-constrain loop for ``horizon`` control steps.

        Online mode executes chunks as they fill and returns the episode outcome.
        Plan-then-execute mode plans purely in the TSIP and returns a Plan.
        """
        self._require_active()
        T = self.config.horizon if horizon is None else int(horizon)
        if T < 1:
            raise ConfigurationError("horizon must be >= 1", "horizon")
        if self.config.mode == "plan-then-execute":
            return self._dream_plan(T)
        return self._dream_online(T)

    def _dream_online(self, T: int) -> EpisodeOutcome:
        L = self.config.chunk_length
        ex = self.executor
        chunk, diags = [], []
        d = self.dris
        sync_time = 0.0
        for k in range(T):
            if ex.done:
                break
            action, predicted, diag = self._plan_step(d, ex.t + len(chunk), sync_time)
            sync_time = 0.0
            chunk.append(action)
            diags.append(diag)
            if len(chunk) == L or k == T - 1:
                obs = self._obs
                states = ex.execute(chunk)
                self._log_steps(chunk, states, diags, obs)
                chunk, diags = [], []
                t0 = time.perf_counter()
                self._observe(ex.get_obs())
                sync_time = time.perf_counter() - t0
                d = self.dris
            else:
                # no measurement mid-chunk: carry the DRIS forward through the model
                d = predicted if predicted is not None else self.tsip.next(d, [action])[0]
        out = self.outcome()
        self._finish()
        return out

    def _dream_plan(self, T: int) -> Plan:
        d = self.dris
        start = self.executor.t
        actions, predicted_all, costs, valid, infeasible = [], [], [], [], []
        for k in range(T):
            action, predicted, diag = self._plan_step(d, start + k)
            if predicted is None:
                predicted = self.tsip.next(d, [action])[0]
            actions.append(np.asarray(action, dtype=float))
            predicted_all.append(predicted)
            costs.append(diag.cage_cost)
            valid.append(diag.valid)
            if diag.infeasible:
                infeasible.append(k)
            d = predicted
        return Plan(actions, predicted_all, costs, valid, infeasible, start, self.config.hash())

    def replay(self, plan: Plan) -> EpisodeOutcome:
        """Dispatch a plan open-loop through the executor in chunks."""
        self._require_active()
        if len(plan) == 0:
            raise ConfigurationError("cannot replay an empty plan")
        if plan.config_hash != self.config.hash():
            raise ConfigurationError("plan was made under a different configuration")
        if plan.start_timestep != self.executor.t:
            raise EpisodeStateError(
                f"plan starts at t={plan.start_timestep} but the executor is at t={self.executor.t}")
        check_actions(plan.actions, self.world)
        L = self.config.chunk_length
        for i in range(0, len(plan), L):
            if self.executor.done:
                break
            chunk = plan.actions[i:i + L]
            obs = self._obs
            states = self.executor.execute(chunk)
            self._log_steps(chunk, states, [None] * len(chunk), obs)
            for j in range(len(states)):
                self._cage_costs[-len(states) + j] = plan.cage_costs[i + j]
            self._observe(self.executor.get_obs())
        out = self.outcome()
        self._finish()
        return out


def run_policy_loop(env: DreamEnv, seed: int | None = None, episode: int = 0, max_steps: int | None = None):
    """Hand-rolled direct policy execution through ``env.step`` (the reference baseline).

    Returns ``(actions, observations, outcome)``.
    """
    d = env.reset(seed, episode)
    policy = env.solver.sampler
    actions, observations = [], [d.stats.mean.copy()]
    steps = env.config.horizon if max_steps is None else max_steps
    for _ in range(steps):
        if env.executor.done:
            break
        a = policy.center(d)
        a = policy.clip(a)
        d, info = env.step(a)
        actions.append(np.asarray(a))
        observations.append(d.stats.mean.copy())
    return actions, observations, env.outcome()


def replay_record(record: EpisodeRecord) -> EpisodeRecord:
    """Re-run an episode from its record's config and seeds; returns the fresh record.

    Per-step entries (timings aside) are deterministic functions of the two, so
    the replayed entries serialize byte-identically to the originals.
    """
    from .config import from_dict

    cfg = from_dict(record.config)
    env = DreamEnv(cfg)
    env.reset(record.seeds["master"], record.seeds["episode"])
    if cfg.mode == "plan-then-execute":
        env.replay(env.dream())
    else:
        env.dream()
    return env.record

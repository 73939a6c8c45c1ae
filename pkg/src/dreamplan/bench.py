"""Benchmark harness: robustness sweeps, ablations and per-step profiling.

Episode seeding is paired: the episode seeds of run ``r`` at any grid point
are ``(master, r * episodes + e)`` for ``e < episodes``, shared by both methods
and by every grid value. Results are always reduced in seed order, so output
files do not depend on ``jobs``.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import multiprocessing
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import EnvConfig, from_dict
from .env import DreamEnv
from .errors import ConfigurationError
from .executor import PerturbationConfig

AXES = {"noise": "obs_noise_std", "delay": "obs_delay_steps", "severity": "physics_severity"}
METHODS = ("baseline", "manidreams")
ABLATIONS = {
    "m": [1, 4, 8, 16, 32],
    "N": [1, 4, 8, 16, 32],
    "width": ["narrow", "medium", "wide"],
}
PHASES = ("sync", "sample", "tsip_next", "cage_eval", "select")
SWEEP_COLUMNS = ["axis", "value", "method", "mean_success", "std_success", "runs", "episodes"]
ABLATION_COLUMNS = ["parameter", "value", "success_rate", "successes", "episodes"]


@dataclass
class SweepSpec:
    axis: str = "noise"
    grid: list = field(default_factory=lambda: [0.0, 0.02, 0.04, 0.08])
    runs: int = 10
    episodes: int = 100

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigurationError(f"unknown sweep axis {self.axis!r}; expected one of {sorted(AXES)}", "sweep.axis")
        if not self.grid:
            raise ConfigurationError("sweep grid must be nonempty", "sweep.grid")
        if list(self.grid) != sorted(self.grid):
            raise ConfigurationError("sweep grid must be sorted ascending", "sweep.grid")
        if self.runs < 1 or self.episodes < 1:
            raise ConfigurationError("runs and episodes must be >= 1", "sweep")

    @classmethod
    def from_config(cls, cfg: EnvConfig) -> "SweepSpec":
        try:
            return cls(**cfg.extras.get("sweep", {}))
        except TypeError as e:
            raise ConfigurationError(str(e), "sweep") from None


@dataclass
class AblationSpec:
    which: str = "m"
    values: list | None = None
    episodes: int = 100
    obs_noise_std: float = 0.04
    chunk_length: int = 3
    physics_severity: float = 0.4

    def __post_init__(self):
        if self.which not in ABLATIONS:
            raise ConfigurationError(f"unknown ablation {self.which!r}; expected one of {sorted(ABLATIONS)}",
                                     "ablation.which")
        if self.values is None:
            self.values = list(ABLATIONS[self.which])
        if self.episodes < 1:
            raise ConfigurationError("episodes must be >= 1", "ablation.episodes")

    @classmethod
    def from_config(cls, cfg: EnvConfig, which: str | None = None) -> "AblationSpec":
        block = dict(cfg.extras.get("ablation", {}))
        if which is not None and which != block.get("which", which):
            block.pop("values", None)
        if which is not None:
            block["which"] = which
        try:
            return cls(**block)
        except TypeError as e:
            raise ConfigurationError(str(e), "ablation") from None


# ---------------------------------------------------------------- episodes


def run_episode(cfg: EnvConfig, master: int, episode: int = 0, log_candidates: bool = False,
                record_timing: bool = False) -> DreamEnv:
    """Run one online episode; returns the finished env (record, outcome, logs)."""
    env = DreamEnv(cfg, record_timing=record_timing, log_candidates=log_candidates)
    env.reset(master, episode)
    if cfg.mode == "plan-then-execute":
        env.replay(env.dream())
    else:
        env.dream()
    return env


_CONFIG_CACHE: dict = {}


def _episode_success(job) -> bool:
    cfg_json, master, episode = job
    cfg = _CONFIG_CACHE.get(cfg_json)
    if cfg is None:
        cfg = _CONFIG_CACHE[cfg_json] = from_dict(json.loads(cfg_json))
    return bool(run_episode(cfg, master, episode).outcome().success)


def evaluate(cfg: EnvConfig, master: int, episodes, jobs: int = 1) -> list[bool]:
    """Success flags for the given episode indices, in the order given."""
    cfg_json = json.dumps(cfg.to_dict(), sort_keys=True)
    work = [(cfg_json, master, int(e)) for e in episodes]
    if jobs <= 1 or len(work) <= 1:
        return [_episode_success(w) for w in work]
    ctx = multiprocessing.get_context("fork" if "fork" in multiprocessing.get_all_start_methods() else None)
    with ctx.Pool(min(jobs, len(work))) as pool:
        return pool.map(_episode_success, work, chunksize=max(1, len(work) // (4 * jobs)))


def seed_set_hash(master: int, indices) -> str:
    blob = json.dumps({"master": master, "episodes": [int(i) for i in indices]}, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _metadata(cfg: EnvConfig, extra: dict) -> list[str]:
    lines = [f"# dreamplan {__version__}", f"# config_hash {cfg.hash()}"]
    lines += [f"# {k} {v}" for k, v in extra.items()]
    return lines


def _write_csv(path, meta: list[str], columns: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    for line in meta:
        buf.write(line + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_csv(path) -> list[dict]:
    """Data rows of a CSV written by this module (metadata comments skipped)."""
    lines = [line for line in Path(path).read_text().splitlines() if not line.startswith("#")]
    return list(csv.DictReader(lines))


# ---------------------------------------------------------------- sweeps


def perturbed(cfg: EnvConfig, axis: str, value) -> EnvConfig:
    """Copy of ``cfg`` with only the swept axis perturbed; the other two at zero."""
    out = copy.deepcopy(cfg)
    kw = {"obs_noise_std": 0.0, "obs_delay_steps": 0, "physics_severity": 0.0}
    kw[AXES[axis]] = int(value) if axis == "delay" else float(value)
    out.perturbation = PerturbationConfig(**kw).validate()
    return out


def method_config(cfg: EnvConfig, method: str) -> EnvConfig:
    return cfg.as_baseline() if method == "baseline" else copy.deepcopy(cfg)


def sweep(cfg: EnvConfig, spec: SweepSpec | None = None, master: int | None = None, jobs: int = 1,
          out=None, checkpoint_dir=None) -> list[dict]:
    """Robustness sweep; returns rows and writes ``out`` (CSV) when given.

    Each (point, method) result is checkpointed as JSON; rerunning with the same
    checkpoint directory skips finished points.
    """
    spec = spec or SweepSpec.from_config(cfg)
    master = cfg.seed if master is None else int(master)
    indices = list(range(spec.runs * spec.episodes))
    seeds = seed_set_hash(master, indices)
    if checkpoint_dir is None and out is not None:
        checkpoint_dir = str(out) + ".ckpt"
    if checkpoint_dir is not None:
        os.makedirs(checkpoint_dir, exist_ok=True)
    rows, csv_rows = [], []
    for value in spec.grid:
        point = perturbed(cfg, spec.axis, value)
        for method in METHODS:
            mcfg = method_config(point, method)
            key = {"config_hash": mcfg.hash(), "seed_set": seeds}
            ckpt = Path(checkpoint_dir) / f"{spec.axis}={value}.{method}.json" if checkpoint_dir else None
            flags = None
            if ckpt is not None and ckpt.exists():
                saved = json.loads(ckpt.read_text())
                if {k: saved.get(k) for k in key} == key:
                    flags = saved["successes"]
            if flags is None:
                flags = [int(s) for s in evaluate(mcfg, master, indices, jobs)]
                if ckpt is not None:
                    tmp = ckpt.with_suffix(".tmp")
                    tmp.write_text(json.dumps({**key, "successes": flags}))
                    tmp.replace(ckpt)
            per_run = np.asarray(flags, dtype=float).reshape(spec.runs, spec.episodes).mean(axis=1)
            mean = float(per_run.mean())
            std = float(per_run.std(ddof=1)) if spec.runs > 1 else 0.0
            rows.append({"axis": spec.axis, "value": value, "method": method, "mean_success": mean,
                         "std_success": std, "runs": spec.runs, "episodes": spec.episodes})
            csv_rows.append([spec.axis, value, method, _fmt(mean), _fmt(std), spec.runs, spec.episodes])
    meta = _metadata(cfg, {"seed_set": seeds, "master_seed": master, "paired": "baseline,manidreams"})
    if out is not None:
        _write_csv(out, meta, SWEEP_COLUMNS, csv_rows)
    return rows


# ---------------------------------------------------------------- ablations


def ablation_config(cfg: EnvConfig, spec: AblationSpec, value) -> EnvConfig:
    out = copy.deepcopy(cfg)
    out.perturbation = PerturbationConfig(obs_noise_std=spec.obs_noise_std,
                                          physics_severity=spec.physics_severity).validate()
    out.chunk_length = spec.chunk_length
    if spec.which == "m":
        out.dris.m = int(value)
    elif spec.which == "N":
        out.solver.num_samples = int(value)
    else:
        out.dris.width = str(value).lower()
    return out.validate()


def ablate(cfg: EnvConfig, spec: AblationSpec | None = None, master: int | None = None, jobs: int = 1,
           out=None) -> list[dict]:
    spec = spec or AblationSpec.from_config(cfg)
    master = cfg.seed if master is None else int(master)
    indices = list(range(spec.episodes))
    rows, csv_rows = [], []
    for value in spec.values:
        flags = evaluate(ablation_config(cfg, spec, value), master, indices, jobs)
        k = int(sum(flags))
        rows.append({"parameter": spec.which, "value": value, "success_rate": k / spec.episodes,
                     "successes": k, "episodes": spec.episodes})
        csv_rows.append([spec.which, value, _fmt(k / spec.episodes), k, spec.episodes])
    meta = _metadata(cfg, {"seed_set": seed_set_hash(master, indices), "master_seed": master,
                           "fixed": f"obs_noise_std={spec.obs_noise_std} chunk_length={spec.chunk_length} "
                                    f"physics_severity={spec.physics_severity}"})
    if out is not None:
        _write_csv(out, meta, ABLATION_COLUMNS, csv_rows)
    return rows


# ---------------------------------------------------------------- profiling


@dataclass
class ProfileSpec:
    grid: list = field(default_factory=lambda: [[1, 1], [4, 2], [8, 4], [16, 8]])
    steps: int = 200
    warmup: int = 10

    @classmethod
    def from_config(cls, cfg: EnvConfig) -> "ProfileSpec":
        try:
            return cls(**cfg.extras.get("profile", {}))
        except TypeError as e:
            raise ConfigurationError(str(e), "profile") from None


def _collect_steps(cfg: EnvConfig, master: int, steps: int, warmup: int) -> list[dict]:
    """Per-step phase timings over consecutive episodes, warmup steps excluded."""
    out: list[dict] = []
    episode = 0
    while len(out) < steps + warmup:
        env = run_episode(cfg, master, episode, record_timing=True)
        out.extend(env.step_phases)
        episode += 1
    return out[warmup:warmup + steps]


def _summary(values) -> dict:
    v = np.asarray(values, dtype=float)
    return {"median_s": float(np.median(v)), "p95_s": float(np.percentile(v, 95))}


def profile(cfg: EnvConfig, spec: ProfileSpec | None = None, master: int | None = None, out=None) -> dict:
    """Per-step wall time by (N, m), plus the single-sample no-cage baseline."""
    spec = spec or ProfileSpec.from_config(cfg)
    master = cfg.seed if master is None else int(master)
    runs = [("baseline", cfg.as_baseline())]
    for n, m in spec.grid:
        c = copy.deepcopy(cfg)
        c.solver.num_samples, c.dris.m = int(n), int(m)
        runs.append((f"N={n},m={m}", c.validate()))
    rows = []
    for label, c in runs:
        steps = _collect_steps(c, master, spec.steps, spec.warmup)
        totals = [s["total"] for s in steps]
        coverage = [sum(s.get(p, 0.0) for p in PHASES) / s["total"] for s in steps if s["total"] > 0]
        rows.append({
            "label": label,
            "N": c.solver.num_samples,
            "m": c.dris.m,
            "cage": c.cage is not None,
            "baseline": label == "baseline",
            "steps": len(steps),
            "total": _summary(totals),
            "phases": {p: _summary([s.get(p, 0.0) for s in steps]) for p in PHASES},
            "phase_coverage_median": float(np.median(coverage)),
        })
    report = {"version": __version__, "config_hash": cfg.hash(), "master_seed": master,
              "warmup_steps": spec.warmup, "rows": rows}
    if out is not None:
        Path(out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report

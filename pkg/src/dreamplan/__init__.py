"""Uncertainty-aware sample-predict-constrain planning over distributional states."""

__version__ = "0.1.0"

from .dris import DRIS, Context, DistStats, WidthPreset, dist_stats, make_dris, make_state, project_states, sample_contexts
from .tsip import TSIP, TaskWorld, ballistic_step, make_tsip, push_step
from .cages import CompositeCage, GeometricCage, TrajectoryCage, cage_from_config
from .solver import CandidateBatch, Solver, SolverConfig, SamplerConfig, mppi_refine, select_nbest, task_cost
from .executor import EpisodeRecord, Executor, PerturbationConfig
from .config import EnvConfig, default_config, load, loads
from .env import DreamEnv, Plan, replay_record, run_policy_loop

__all__ = [
    "DRIS", "Context", "DistStats", "WidthPreset", "dist_stats", "make_dris", "make_state", "project_states",
    "sample_contexts", "TSIP", "TaskWorld", "ballistic_step", "make_tsip", "push_step", "CompositeCage",
    "GeometricCage", "TrajectoryCage", "cage_from_config", "CandidateBatch", "Solver", "SolverConfig",
    "SamplerConfig", "mppi_refine", "select_nbest", "task_cost", "EpisodeRecord", "Executor",
    "PerturbationConfig", "EnvConfig", "default_config", "load", "loads", "DreamEnv", "Plan", "replay_record", "run_policy_loop",
]

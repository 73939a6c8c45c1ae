"""Scripted proportional-control policies used as base samplers.

Each policy maps a (point-estimate) state, the task world and the current
timestep to an in-bounds action.
"""
from __future__ import annotations

import math

import numpy as np

from .dris import RX, RY, VX, VY, VZ, X, Y, Z, Context, wrap_angle
from .tsip import TaskWorld, slip_ratio

_NOMINAL_KAPPA = float(slip_ratio(Context().to_array(), TaskWorld().beta))


def limit(a: np.ndarray, max_step: float) -> np.ndarray:
    """Scale ``a`` down (direction kept) so every component is within bounds."""
    peak = np.max(np.abs(a))
    if peak > max_step:
        a = a * (max_step / peak)
        return np.clip(a, -max_step, max_step)
    return a


def push_toward(state: np.ndarray, target: np.ndarray, world: TaskWorld, margin: float = 0.01,
                align_tol: float = 0.3, gain: float = 1.0) -> np.ndarray:
    """Walk the pusher around the disc until it is behind it, then push at the target."""
    o = state[[X, Y]]
    p = state[[RX, RY]]
    R = world.object_radius
    to_target = target - o
    dist = math.hypot(*to_target)
    if dist < 1e-9:
        return np.zeros(2)
    g = to_target / dist
    r = p - o
    rho = math.hypot(*r)
    phi = math.atan2(r[1], r[0])
    dphi = float(wrap_angle(math.atan2(-g[1], -g[0]) - phi))
    if abs(dphi) < align_tol:
        # push phase: close the gap, then move the object by dist / kappa of pusher travel
        gp = np.array([-g[1], g[0]])
        lateral = float(r @ gp)
        travel = max(rho - R, 0.0) + gain * dist / _NOMINAL_KAPPA
        a = travel * g - lateral * gp
    else:
        ring = R + margin
        step_ang = 0.9 * world.max_step / ring
        phi_next = phi + float(np.clip(dphi, -step_ang, step_ang))
        a = o + ring * np.array([math.cos(phi_next), math.sin(phi_next)]) - p
    return limit(a, world.max_step)


def push_to_goal_policy(state, world: TaskWorld, t: int = 0) -> np.ndarray:
    return push_toward(state, np.asarray(world.goal, dtype=float), world)


def follow_circle_policy(state, world: TaskWorld, t: int = 0, lookahead: int = 2) -> np.ndarray:
    return push_toward(state, world.reference_point(t + lookahead), world, gain=0.5)


def landing_point(state: np.ndarray, gravity: float) -> np.ndarray:
    """Drag-free landing point (z = 0) of the ball; the current point if already down."""
    z, vz = state[Z], state[VZ]
    if gravity <= 0:
        tau = -z / vz if vz < 0 else 0.0
    else:
        tau = (vz + math.sqrt(max(vz * vz + 2.0 * gravity * z, 0.0))) / gravity
    tau = max(tau, 0.0)
    return np.array([state[X] + state[VX] * tau, state[Y] + state[VY] * tau])


def catch_policy(state, world: TaskWorld, t: int = 0) -> np.ndarray:
    target = landing_point(state, world.gravity)
    return limit(target - state[[RX, RY]], world.max_step)


POLICIES = {
    "push-to-goal": push_to_goal_policy,
    "push-follow-circle": follow_circle_policy,
    "catch-ball": catch_policy,
}


def get_policy(name: str):
    from .errors import ConfigurationError

    try:
        return POLICIES[name]
    except KeyError:
        raise ConfigurationError(f"unknown policy {name!r}; expected one of {sorted(POLICIES)}",
                                 "solver.sampler.policy") from None

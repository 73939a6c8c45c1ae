"""Forward prediction over distributional states.

The steppers here are the only dynamics in the package; the executor calls the
same functions on the true state so planner and world can never drift apart.
All steppers are vectorized over a leading batch axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dris import (
    DRIS,
    DRAG,
    FRICTION,
    GEOMETRY,
    MASS,
    RX,
    RY,
    VX,
    VY,
    VZ,
    WZ,
    X,
    Y,
    YAW,
    Z,
    Context,
    WidthPreset,
    make_dris,
    sample_context_array,
    width_preset,
    wrap_angle,
)
from .errors import ActionBoundsError, ConfigurationError, EpisodeStateError

TASKS = ("push-to-goal", "push-follow-circle", "catch-ball")


@dataclass(frozen=True)
class TaskWorld:
    """Geometry, goal and timing of one desk-scale task."""

    task: str = "push-to-goal"
    object_radius: float = 0.05
    plate_radius: float = 0.08
    goal: tuple[float, float] = (0.0, 0.0)
    goal_tolerance: float = 0.03
    circle_center: tuple[float, float] = (0.0, 0.0)
    circle_radius: float = 0.15
    circle_rate: float = 0.03  # rad per step along the reference circle
    tracking_tolerance: float = 0.05
    dt: float = 0.1
    gravity: float = 9.81
    max_step: float = 0.02  # per-axis action bound, meters per step
    step_budget: int = 100
    beta: float = 10.0  # slip-law constant, 1/kg

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigurationError(f"unknown task {self.task!r}; expected one of {TASKS}", "task.name")
        if self.dt <= 0:
            raise ConfigurationError("dt must be > 0", "task.dt")
        if self.object_radius <= 0 or self.plate_radius <= 0:
            raise ConfigurationError("radii must be > 0", "task")
        if self.max_step <= 0:
            raise ConfigurationError("max_step must be > 0", "task.max_step")
        if self.step_budget < 1:
            raise ConfigurationError("step_budget must be >= 1", "task.step_budget")

    @property
    def action_dim(self) -> int:
        return 2

    @property
    def action_low(self) -> np.ndarray:
        return np.full(self.action_dim, -self.max_step)

    @property
    def action_high(self) -> np.ndarray:
        return np.full(self.action_dim, self.max_step)

    def reference_point(self, t) -> np.ndarray:
        """Point on the reference circle at timestep ``t`` (follow-circle task)."""
        ang = self.circle_rate * np.asarray(t, dtype=float)
        c = np.asarray(self.circle_center)
        return np.stack([c[0] + self.circle_radius * np.cos(ang), c[1] + self.circle_radius * np.sin(ang)], -1)

    @classmethod
    def for_task(cls, task: str, **overrides) -> "TaskWorld":
        defaults = {"catch-ball": {"dt": 0.02, "max_step": 0.03, "step_budget": 150}}
        return cls(task=task, **{**defaults.get(task, {}), **overrides})


def check_actions(actions, world: TaskWorld) -> np.ndarray:
    a = np.atleast_2d(np.asarray(actions, dtype=float))
    if a.shape[1] != world.action_dim:
        raise ActionBoundsError(f"actions must have {world.action_dim} components, got {a.shape[1]}")
    if not np.all(np.isfinite(a)):
        raise ActionBoundsError("actions must be finite")
    bad = np.any((a < world.action_low) | (a > world.action_high), axis=1)
    if bad.any():
        j = int(np.flatnonzero(bad)[0])
        raise ActionBoundsError(
            f"action {j} = {a[j].tolist()} outside bounds [{-world.max_step}, {world.max_step}]"
        )
    return a


def slip_ratio(contexts: np.ndarray, beta: float) -> np.ndarray:
    """Fraction of the pusher's normal motion transmitted to the object."""
    mu = contexts[..., FRICTION]
    return mu / (mu + beta * contexts[..., MASS])


SEPARATION_SLACK = 1e-9  # meters


def separate_from_pusher(states, contexts, world: TaskWorld) -> np.ndarray:
    """Move object hypotheses that overlap the pusher tip radially out to contact.

    Instances whose center coincides exactly with the tip are left unchanged
    (no outward direction is defined). Overlaps below ``SEPARATION_SLACK`` are
    rounding residue of a pusher resting on the rim and are left alone, so a
    noise-free synced state is reproduced bit for bit.
    """
    s = np.array(states, dtype=float)
    R = world.object_radius * np.asarray(contexts, dtype=float)[:, GEOMETRY]
    w = s[:, [X, Y]] - s[:, [RX, RY]]
    dist = np.hypot(w[:, 0], w[:, 1])
    inside = (dist < R - SEPARATION_SLACK) & (dist > 0)
    if inside.any():
        s[np.ix_(inside, [X, Y])] = s[np.ix_(inside, [RX, RY])] + w[inside] * (R[inside] / dist[inside])[:, None]
    return s


def push_step(s, u, c, world: TaskWorld) -> np.ndarray:
    """Quasi-static point pusher against a disc object.

    While in contact the pusher stays on the disc boundary, the object moves
    with ``kappa`` times the normal component of the commanded pusher velocity,
    and the pusher slides tangentially. With ``a`` the angle between the push
    direction and the contact normal, ``tan(a/2)`` grows as ``exp(travel/R)``;
    contact is lost when ``|a|`` reaches pi/2. The closed form below is exact
    for that flow, so splitting a step into substeps gives the same result.
    """
    s = np.asarray(s, dtype=float)
    single = s.ndim == 1
    s = np.atleast_2d(s)
    u = np.atleast_2d(np.asarray(u, dtype=float))
    c = np.atleast_2d(np.asarray(c, dtype=float))
    out = s.copy()
    o0 = s[:, [X, Y]]
    o = o0.copy()
    p = s[:, [RX, RY]].copy()
    R = world.object_radius * c[:, GEOMETRY]
    kappa = slip_ratio(c, world.beta)

    # resolve initial overlap by pushing the object straight out
    w = o - p
    dist = np.hypot(w[:, 0], w[:, 1])
    inside = dist < R
    if inside.any():
        ulen0 = np.hypot(u[:, 0], u[:, 1])
        fallback = np.where(
            (ulen0 > 0)[:, None], u / np.where(ulen0 > 0, ulen0, 1.0)[:, None], np.array([1.0, 0.0])
        )
        n_out = np.where((dist > 0)[:, None], w / np.where(dist > 0, dist, 1.0)[:, None], fallback)
        o[inside] = p[inside] + R[inside, None] * n_out[inside]

    ulen = np.hypot(u[:, 0], u[:, 1])
    moving = ulen > 0
    uhat = u / np.where(moving, ulen, 1.0)[:, None]
    uperp = np.stack([-uhat[:, 1], uhat[:, 0]], axis=1)

    w = p - o
    b = np.einsum("ij,ij->i", w, uhat)
    disc = b * b - (np.einsum("ij,ij->i", w, w) - R * R)
    lam0 = np.maximum(0.0, -b - np.sqrt(np.maximum(disc, 0.0)))
    contact = moving & (b < 0) & (disc > 0) & (lam0 < ulen)

    p_new = p + u
    yaw = s[:, YAW].copy()
    if contact.any():
        k = np.flatnonzero(contact)
        Rk, uh, up = R[k], uhat[k], uperp[k]
        L = ulen[k] - lam0[k]
        touch = p[k] + lam0[k, None] * uh
        n = o[k] - touch
        n /= np.hypot(n[:, 0], n[:, 1])[:, None]
        a0 = np.arctan2(np.einsum("ij,ij->i", n, up), np.einsum("ij,ij->i", n, uh))
        t0 = np.tan(0.5 * a0)
        with np.errstate(divide="ignore"):
            lam_star = np.where(t0 == 0, np.inf, Rk * np.log(1.0 / np.abs(t0)))
        lc = np.minimum(L, np.maximum(lam_star, 0.0))
        a1 = 2.0 * np.arctan(t0 * np.exp(lc / Rk))
        kk = kappa[k]
        d_par = kk * (lc + Rk * (np.cos(a1) - np.cos(a0)))
        d_perp = kk * Rk * (np.sin(a1) - np.sin(a0))
        o[k] = o[k] + d_par[:, None] * uh + d_perp[:, None] * up
        n1 = np.cos(a1)[:, None] * uh + np.sin(a1)[:, None] * up
        p_new[k] = o[k] - Rk[:, None] * n1 + (L - lc)[:, None] * uh
        yaw[k] = yaw[k] + (1.0 - kk) * (a1 - a0)

    out[:, [X, Y]] = o
    out[:, [RX, RY]] = p_new
    out[:, YAW] = wrap_angle(yaw)
    out[:, [VX, VY]] = (o - o0) / world.dt
    out[:, WZ] = wrap_angle(yaw - s[:, YAW]) / world.dt
    return out[0] if single else out


def ballistic_step(s, u, c, world: TaskWorld) -> np.ndarray:
    """Semi-implicit Euler under gravity and quadratic drag; the plate follows the action."""
    s = np.asarray(s, dtype=float)
    single = s.ndim == 1
    s = np.atleast_2d(s)
    u = np.atleast_2d(np.asarray(u, dtype=float))
    c = np.atleast_2d(np.asarray(c, dtype=float))
    out = s.copy()
    vel = s[:, [VX, VY, VZ]]
    speed = np.sqrt(np.einsum("ij,ij->i", vel, vel))
    acc = -(c[:, DRAG] / c[:, MASS] * speed)[:, None] * vel
    acc[:, 2] -= world.gravity
    vel = vel + acc * world.dt
    out[:, [VX, VY, VZ]] = vel
    out[:, [X, Y, Z]] = s[:, [X, Y, Z]] + vel * world.dt
    out[:, [RX, RY]] = s[:, [RX, RY]] + u
    return out[0] if single else out


def const_velocity_step(s, u, c, world: TaskWorld) -> np.ndarray:
    """Constant-velocity extrapolation; ignores contact and context entirely."""
    s = np.asarray(s, dtype=float)
    single = s.ndim == 1
    s = np.atleast_2d(s)
    u = np.atleast_2d(np.asarray(u, dtype=float))
    out = s.copy()
    out[:, [X, Y, Z]] += s[:, [VX, VY, VZ]] * world.dt
    out[:, YAW] = wrap_angle(s[:, YAW] + s[:, WZ] * world.dt)
    out[:, [RX, RY]] += u
    return out[0] if single else out


def task_stepper(task: str):
    """Ground-truth stepper for a task (shared by executor and analytic backends)."""
    return ballistic_step if task == "catch-ball" else push_step


class TSIP:
    """Forward-prediction backend interface.

    Subclasses provide ``step_states``; everything else (context sampling on
    ``reset``, state sync, DRIS construction and batched ``next``) is shared.
    A learned backend would override ``next`` to consume the whole DRIS at once.
    """

    name = "base"

    def __init__(
        self,
        world: TaskWorld,
        m: int = 8,
        width: WidthPreset | str = "medium",
        base_context: Context | None = None,
        pose_noise_std: float = 0.01,
    ):
        if m < 1:
            raise ConfigurationError("m must be >= 1", "dris.m")
        if pose_noise_std < 0:
            raise ConfigurationError("pose_noise_std must be >= 0", "dris.pose_noise_std")
        self.world = world
        self.m = m
        self.width = width_preset(width)
        self.base_context = base_context or Context()
        self.pose_noise_std = pose_noise_std
        self._contexts: np.ndarray | None = None
        self._observed: np.ndarray | None = None
        self._timestep = 0
        self._rng = np.random.default_rng(0)

    def step_states(self, states: np.ndarray, actions: np.ndarray, contexts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def reset(self, context_rng: np.random.Generator, pose_rng: np.random.Generator) -> None:
        """Sample the ``m`` contexts for this episode and clear the synced state."""
        self._contexts = sample_context_array(self.base_context, self.width, self.m, context_rng)
        self._contexts.flags.writeable = False
        self._rng = pose_rng
        self._observed = None
        self._timestep = 0

    @property
    def contexts(self) -> np.ndarray:
        if self._contexts is None:
            raise EpisodeStateError("TSIP.reset must be called before use")
        return self._contexts

    def sync_state(self, executor_pose: np.ndarray, robot_state: np.ndarray | None = None, timestep: int | None = None):
        obs = np.array(executor_pose, dtype=float)
        if robot_state is not None:
            obs[[RX, RY]] = np.asarray(robot_state, dtype=float)[[RX, RY]]
        self._observed = obs
        if timestep is not None:
            self._timestep = int(timestep)

    def get_dris(self) -> DRIS:
        if self._observed is None:
            raise EpisodeStateError("get_dris called before sync_state")
        return make_dris(self._observed, self.contexts, self.pose_noise_std, self._rng, self._timestep)

    def next(self, d: DRIS, actions) -> list[DRIS]:
        a = check_actions(actions, self.world)
        n, m = len(a), d.m
        states = np.tile(d.states, (n, 1))
        contexts = np.tile(d.contexts, (n, 1))
        out = self.step_states(states, np.repeat(a, m, axis=0), contexts)
        return [DRIS(out[j * m:(j + 1) * m], d.contexts, d.timestep + 1) for j in range(n)]


class AnalyticPushTSIP(TSIP):
    name = "analytic-push"

    def step_states(self, states, actions, contexts):
        return push_step(states, actions, contexts, self.world)

    def get_dris(self) -> DRIS:
        """Fresh DRIS with pose hypotheses made consistent with the known pusher.

        The pusher position is measured exactly, so a hypothesis whose disc
        contains the pusher tip is physically impossible; such instances are
        moved radially out until the tip lies on their boundary.
        """
        d = super().get_dris()
        return DRIS(separate_from_pusher(d.states, d.contexts, self.world), d.contexts, d.timestep)


class AnalyticBallisticTSIP(TSIP):
    name = "analytic-ballistic"

    def step_states(self, states, actions, contexts):
        return ballistic_step(states, actions, contexts, self.world)


class ConstVelocityTSIP(TSIP):
    name = "const-velocity"

    def step_states(self, states, actions, contexts):
        return const_velocity_step(states, actions, contexts, self.world)


BACKENDS = {cls.name: cls for cls in (AnalyticPushTSIP, AnalyticBallisticTSIP, ConstVelocityTSIP)}


def make_tsip(name: str, world: TaskWorld, **kwargs) -> TSIP:
    try:
        cls = BACKENDS[name]
    except KeyError:
        raise ConfigurationError(f"unknown backend {name!r}; expected one of {sorted(BACKENDS)}", "tsip.backend") from None
    return cls(world, **kwargs)

import json
import math

import numpy as np
import pytest

from dreamplan.dris import RY, X, Y, Context, make_state
from dreamplan.errors import ActionBoundsError, ConfigurationError, EpisodeStateError
from dreamplan.executor import EpisodeRecord, Executor, PerturbationConfig, StepEntry, severity_bounds
from dreamplan.tsip import TaskWorld, make_tsip

PUSH = TaskWorld.for_task("push-to-goal")
CATCH = TaskWorld.for_task("catch-ball")
CIRCLE = TaskWorld.for_task("push-follow-circle")


def rngs(seed=0):
    return np.random.default_rng(seed), np.random.default_rng(seed + 1000)


def test_zero_severity_uses_default_context():
    ex = Executor(PUSH, PerturbationConfig(), Context(mass_kg=0.07))
    ex.reset(*rngs())
    assert ex.context == Context(mass_kg=0.07)


def test_severity_bounds_values():
    lo, hi = severity_bounds(0.4)
    assert lo == pytest.approx(0.68) and hi == pytest.approx(1.8)
    assert severity_bounds(0.0) == (1.0, 1.0)
    assert severity_bounds(1.0)[0] == pytest.approx(0.2)


def test_severity_multipliers_within_bounds():
    base = Context(0.05, 0.5, 1.0, 0.002)
    ex = Executor(PUSH, PerturbationConfig(physics_severity=0.4), base)
    mults = []
    for seed in range(500):
        ex.reset(*rngs(seed))
        mults.append(ex.context.to_array() / base.to_array())
    mults = np.array(mults)
    assert mults.min() >= 0.68 - 1e-12 and mults.max() <= 1.8 + 1e-12
    # uniform on [0.68, 1.8]: mean 1.24
    assert mults.mean() == pytest.approx(1.24, abs=0.02)


@pytest.mark.parametrize("bad", [dict(obs_noise_std=-0.1), dict(obs_delay_steps=-1), dict(physics_severity=1.5)])
def test_perturbation_validation(bad):
    with pytest.raises(ConfigurationError):
        PerturbationConfig(**bad).validate()


def test_initial_observation_is_initial_state_without_noise():
    ex = Executor(PUSH, PerturbationConfig(obs_delay_steps=3))
    obs = ex.reset(*rngs())
    np.testing.assert_array_equal(obs, ex.state)


def test_delay_buffer_matches_list_oracle():
    delay = 3
    ex = Executor(PUSH, PerturbationConfig(obs_delay_steps=delay))
    ex.reset(*rngs(), state=make_state(x=0.1, robot_x=0.16))
    history = [ex.state.copy()]
    rng = np.random.default_rng(5)
    for _ in range(10):
        ex.execute([rng.uniform(-0.02, 0.02, 2)])
        history.append(ex.state.copy())
        expected = history[max(0, len(history) - 1 - delay)]
        np.testing.assert_array_equal(ex.get_obs(), expected)


def test_noise_std_monte_carlo_and_position_only():
    ex = Executor(PUSH, PerturbationConfig(obs_noise_std=0.04))
    ex.reset(*rngs(), state=make_state(x=0.1, yaw=0.5, robot_x=0.3))
    obs = np.array([ex.get_obs() for _ in range(10_000)])
    err = obs[:, [X, Y]] - ex.state[[X, Y]]
    assert np.all(np.abs(err.std(axis=0) / 0.04 - 1) < 0.05)
    others = [i for i in range(obs.shape[1]) if i not in (X, Y)]
    assert np.all(obs[:, others] == ex.state[others])


def test_repeated_get_obs_redraws_noise():
    ex = Executor(PUSH, PerturbationConfig(obs_noise_std=0.01))
    ex.reset(*rngs())
    assert not np.array_equal(ex.get_obs(), ex.get_obs())


def test_shared_stepper_identity():
    """Zero perturbation + one zero-width instance: prediction == next true state."""
    for task, world, backend in [("push", PUSH, "analytic-push"), ("catch", CATCH, "analytic-ballistic")]:
        ctx = Context(drag_coeff=0.002) if task == "catch" else Context()
        ex = Executor(world, PerturbationConfig(), ctx)
        tsip = make_tsip(backend, world, m=1, width="zero", base_context=ctx, pose_noise_std=0.0)
        ex.reset(*rngs(3))
        tsip.reset(*rngs(4))
        rng = np.random.default_rng(0)
        for _ in range(20):
            if ex.done:
                break
            tsip.sync_state(ex.get_obs(), ex.robot_state(), ex.t)
            a = rng.uniform(-world.max_step, world.max_step, 2)
            pred = tsip.next(tsip.get_dris(), [a])[0]
            ex.execute([a])
            np.testing.assert_array_equal(pred.states[0], ex.state)


def test_execute_chunk_steps_each_action_and_stops_when_done():
    ex = Executor(PUSH, PerturbationConfig())
    # object already next to the goal and pusher touching it from behind
    ex.reset(*rngs(), state=make_state(x=0.04, robot_x=0.09))
    out = ex.execute([[-0.02, 0.0]] * 5)
    assert ex.success() and ex.done
    assert len(out) == ex.t < 5
    with pytest.raises(EpisodeStateError):
        ex.execute([[0.0, 0.0]])


def test_execute_rejects_out_of_bounds():
    ex = Executor(PUSH)
    ex.reset(*rngs())
    with pytest.raises(ActionBoundsError):
        ex.execute([[0.5, 0.0]])


def test_execute_before_reset_raises():
    with pytest.raises(EpisodeStateError):
        Executor(PUSH).execute([[0.0, 0.0]])
    with pytest.raises(EpisodeStateError):
        Executor(PUSH).get_obs()


def test_step_budget_terminates():
    ex = Executor(PUSH)
    ex.reset(*rngs(), state=make_state(x=0.15, robot_x=1.0))
    for _ in range(PUSH.step_budget):
        ex.execute([[0.0, 0.0]])
    assert ex.done and not ex.success()


def test_push_success_monotone_in_tolerance():
    rng = np.random.default_rng(1)
    for seed in range(30):
        ex = Executor(PUSH)
        ex.reset(*rngs(seed))
        for _ in range(30):
            if ex.done:
                break
            ex.execute([rng.uniform(-0.02, 0.02, 2)])
        tols = [0.2, 0.1, 0.05, 0.03, 0.01, 0.001]
        flags = [ex.success(t) for t in tols]
        assert all(a >= b for a, b in zip(flags, flags[1:]))


def drop_ball(offset):
    """Ball falling straight down from z=0.1 at horizontal offset from the plate."""
    ex = Executor(CATCH, PerturbationConfig(), Context(drag_coeff=0.0))
    ex.reset(*rngs(), state=make_state(x=offset, z=0.1))
    while not ex.done:
        ex.execute([[0.0, 0.0]])
    return ex


def test_catch_success_on_rim_and_miss_just_outside():
    assert drop_ball(CATCH.plate_radius).success()
    assert not drop_ball(CATCH.plate_radius + 1e-9).success()
    assert drop_ball(0.0).success()


def test_catch_landing_interpolated():
    ex = Executor(CATCH, PerturbationConfig(), Context(drag_coeff=0.0))
    ex.reset(*rngs(), state=make_state(x=0.0, z=0.1, vx=1.0))
    while not ex.done:
        ex.execute([[0.0, 0.0]])
    # oracle: replay the semi-implicit Euler steps in plain Python and
    # interpolate the crossing of z = 0 linearly
    x, z, vx, vz = 0.0, 0.1, 1.0, 0.0
    while True:
        vz -= CATCH.gravity * CATCH.dt
        nx, nz = x + vx * CATCH.dt, z + vz * CATCH.dt
        if nz <= 0:
            land = x + z / (z - nz) * (nx - x)
            break
        x, z = nx, nz
    assert ex.success(tolerance=abs(land) + 1e-12)
    assert not ex.success(tolerance=abs(land) - 1e-9)


def test_follow_circle_tracking_error():
    ex = Executor(CIRCLE)
    ex.reset(*rngs())
    ref0 = CIRCLE.reference_point(0)
    assert ex.tracking_error() == pytest.approx(math.hypot(*(ex.state[[X, Y]] - ref0)))
    # object never moves (pusher runs away), the reference does
    for _ in range(20):
        ex.execute([[0.0, 0.02]] if ex.state[RY] > ex.state[Y] else [[0.0, -0.02]])
    assert ex.tracking_error() > 0.01


def test_state_hash_changes_with_state_only():
    ex = Executor(PUSH)
    ex.reset(*rngs())
    h = ex.state_hash()
    ex.get_obs()
    assert ex.state_hash() == h
    ex.execute([[0.01, 0.0]])
    assert ex.state_hash() != h


def test_episode_record_roundtrip():
    rec = EpisodeRecord({"master": 1}, {"task": {"name": "push-to-goal"}})
    rec.steps.append(StepEntry(1, [0.1] * 10, [0.2] * 10, [0.01, 0.0], 0.0, True, False))
    rec.steps.append(StepEntry(2, [0.1] * 10, [0.2] * 10, [0.0, 0.01], 0.5, False, True, {"total": 0.001}))
    rec.outcome = {"success": True, "steps": 2}
    text = rec.to_jsonl()
    back = EpisodeRecord.from_jsonl(text)
    assert back.to_jsonl() == text
    rows = [json.loads(line) for line in text.splitlines()]
    assert [r["kind"] for r in rows] == ["header", "step", "step", "outcome"]
    assert "timing" not in rows[1] and rows[2]["timing"] == {"total": 0.001}

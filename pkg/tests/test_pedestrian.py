import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pedsafe.pedestrian import (
    EnvironmentMap,
    GpfaParams,
    InvalidInputError,
    Obstacle,
    StateSpaceModel,
    gpfa_accel,
    measure,
    rollout,
    step,
    transition_matrices,
)

PARAMS = GpfaParams()
QUIET = StateSpaceModel(dt=0.2, process_noise_std=(0.0, 0.0), measurement_noise_std=0.0)


def test_transition_is_exact_double_integrator():
    dt = 0.2
    F, G = transition_matrices(dt)
    # closed form for constant acceleration over one step
    x0, v0, a = np.array([1.0, -2.0]), np.array([0.5, 0.25]), np.array([0.3, -0.7])
    nxt = F @ np.r_[x0, v0] + G @ a
    np.testing.assert_allclose(nxt[:2], x0 + v0 * dt + 0.5 * a * dt**2)
    np.testing.assert_allclose(nxt[2:], v0 + a * dt)
    np.testing.assert_array_equal(QUIET.H, [[1, 0, 0, 0], [0, 1, 0, 0]])


def test_accel_zero_at_goal():
    env = EnvironmentMap([[3.0, 4.0]])
    acc = gpfa_accel([3.0, 4.0, 0.0, 0.0], [3.0, 4.0], env, PARAMS)
    np.testing.assert_array_equal(acc, [0.0, 0.0])


def test_symmetric_obstacles_cancel():
    env = EnvironmentMap([[10.0, 0.0]], [Obstacle((0.0, 1.0)), Obstacle((0.0, -1.0))])
    acc = gpfa_accel([0.0, 0.0, 0.0, 0.0], [10.0, 0.0], env, PARAMS)
    assert acc[0] > 0
    assert acc[1] == pytest.approx(0.0, abs=1e-12)


def test_repulsion_beats_attraction_by_hand():
    params = GpfaParams(attraction_gain=1.0, repulsion_gain=2.0, repulsion_cutoff=2.0,
                        accel_max=5.0, damping=0.8)
    env = EnvironmentMap([[10.0, 0.0]], [Obstacle((1.0, 0.0))])
    acc = gpfa_accel([0.0, 0.0, 0.0, 0.0], [10.0, 0.0], env, params)
    # attraction +1 along x; repulsion 2 / 1^2 pointing from obstacle to pedestrian (-x)
    np.testing.assert_allclose(acc, [1.0 - 2.0, 0.0])


def test_segment_obstacle_uses_nearest_point():
    params = GpfaParams(attraction_gain=0.0, repulsion_gain=1.0, accel_max=10.0, damping=0.0)
    env = EnvironmentMap([[0.0, 50.0]], [Obstacle((-5.0, -1.0), (5.0, -1.0))])
    acc = gpfa_accel([2.0, 0.0, 0.0, 0.0], [0.0, 50.0], env, params)
    np.testing.assert_allclose(acc, [0.0, 1.0])  # 1 / 1^2 straight up


def test_accel_rejects_nonfinite():
    env = EnvironmentMap([[1.0, 0.0]])
    with pytest.raises(InvalidInputError):
        gpfa_accel([np.nan, 0.0, 0.0, 0.0], [1.0, 0.0], env, PARAMS)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=4, max_size=4),
       st.lists(st.floats(-5, 5), min_size=2, max_size=2))
def test_accel_norm_is_clipped(state, obstacle):
    env = EnvironmentMap([[5.0, 5.0]], [Obstacle(tuple(obstacle))])
    acc = gpfa_accel(state, [5.0, 5.0], env, PARAMS)
    assert np.linalg.norm(acc) <= PARAMS.accel_max + 1e-12


def test_step_pure_shift():
    params = GpfaParams(attraction_gain=0.0, damping=0.0)
    env = EnvironmentMap([[100.0, 0.0]])
    nxt = step([0.0, 0.0, 1.0, 0.0], [100.0, 0.0], QUIET, env, params)
    np.testing.assert_allclose(nxt, [0.2, 0.0, 1.0, 0.0])


def test_step_reaches_goal_within_kinematic_bound():
    env = EnvironmentMap([[12.0, 0.0]])
    state = np.zeros(4)
    distance = 12.0
    # warm-up to terminal speed is a couple of seconds; then at least v_max/2 on average
    bound = 2 * distance / PARAMS.v_max + 3.0
    for k in range(int(bound / QUIET.dt)):
        state = step(state, [12.0, 0.0], QUIET, env, PARAMS)
        if np.linalg.norm(state[:2] - [12.0, 0.0]) <= PARAMS.goal_radius:
            break
    else:
        pytest.fail("pedestrian never reached its goal")


def test_step_is_seeded():
    model = StateSpaceModel(process_noise_std=(0.1, 0.2))
    env = EnvironmentMap([[5.0, 0.0]])
    a = step([0.0, 0.0, 0.5, 0.0], [5.0, 0.0], model, env, PARAMS, rng_seed=42)
    b = step([0.0, 0.0, 0.5, 0.0], [5.0, 0.0], model, env, PARAMS, rng_seed=42)
    assert a.tobytes() == b.tobytes()


def test_speed_is_clipped():
    params = GpfaParams(attraction_gain=0.0, damping=0.0, v_max=2.0)
    env = EnvironmentMap([[5.0, 0.0]])
    nxt = step([0.0, 0.0, 3.0, 4.0], [5.0, 0.0], QUIET, env, params)
    assert np.linalg.norm(nxt[2:]) == pytest.approx(2.0)


def test_measure_noiseless_and_at_origin():
    np.testing.assert_array_equal(measure([1.5, -2.0, 3.0, 3.0], QUIET, rng_seed=1), [1.5, -2.0])
    np.testing.assert_array_equal(measure(np.zeros(4), QUIET), [0.0, 0.0])


def test_measurement_noise_statistics():
    model = StateSpaceModel(measurement_noise_std=0.25)
    states = np.zeros((10_000, 4))
    y = measure(states, model, rng_seed=7)
    np.testing.assert_allclose(y.std(axis=0), 0.25, rtol=0.05)


def test_rollout_start_at_goal():
    env = EnvironmentMap([[1.0, 1.0]])
    traj = rollout([1.0, 1.0], [1.0, 1.0], QUIET, env, PARAMS)
    assert len(traj) == 1
    assert traj.times[0] == 0.0
    assert traj.reached


def test_rollout_corridor_arrival_time():
    params = GpfaParams(v_max=1.5)
    env = EnvironmentMap([[5.0, 0.0]])
    traj = rollout([0.0, 0.0], [5.0, 0.0], QUIET, env, params, max_horizon=20.0)
    assert traj.reached
    assert np.linalg.norm(traj.points[-1] - [5.0, 0.0]) <= params.goal_radius
    assert 5 / 1.5 - params.goal_radius / 1.5 <= traj.times[-1] <= 2 * 5 / 1.5
    np.testing.assert_allclose(np.diff(traj.times), 0.2)


def test_rollout_horizon_hit_is_flagged():
    env = EnvironmentMap([[50.0, 0.0]])
    traj = rollout([0.0, 0.0], [50.0, 0.0], QUIET, env, PARAMS, max_horizon=2.0)
    assert not traj.reached
    assert traj.times[-1] == pytest.approx(2.0)


def test_step_matches_rollout():
    env = EnvironmentMap([[6.0, 3.0]], [Obstacle((3.0, 2.0))])
    traj = rollout([0.0, 0.0], [6.0, 3.0], QUIET, env, PARAMS, max_horizon=15.0)
    state = np.zeros(4)
    for p in traj.points[1:]:
        state = step(state, [6.0, 3.0], QUIET, env, PARAMS)
        np.testing.assert_array_equal(state[:2], p)


def test_goals_must_be_separated():
    env = EnvironmentMap([[0.0, 0.0], [0.1, 0.0]])
    with pytest.raises(InvalidInputError):
        env.validate(goal_radius=0.3)
    with pytest.raises(InvalidInputError):
        EnvironmentMap(np.zeros((0, 2)))

import numpy as np
import pytest

from pedsafe.control import (
    ConfigError,
    ControllerGains,
    Mode,
    Path,
    PathController,
    Pid,
    PidGains,
    closed_loop_fn,
    control,
    cross_track_error,
)
from pedsafe.vehicle import PHI, V, VehicleParams, integrate, vehicle_state

STRAIGHT = Path([[0.0, 0.0], [10.0, 0.0], [20.0, 0.0]])


def circle(radius=15.0, n=25):
    a = np.linspace(0, np.pi, n)
    return Path(np.column_stack([radius * np.sin(a), radius * (1 - np.cos(a))]))


def test_arc_length_of_straight_line():
    assert STRAIGHT.total_length == pytest.approx(20.0, abs=1e-6)
    np.testing.assert_allclose(STRAIGHT.point_at(7.5), [7.5, 0.0], atol=1e-9)


def test_arc_length_of_half_circle():
    path = circle()
    assert path.total_length == pytest.approx(15.0 * np.pi, rel=1e-3)


def test_cross_track_sign_and_magnitude():
    assert cross_track_error(STRAIGHT, [5.0, 0.7]) == pytest.approx(0.7)
    assert cross_track_error(STRAIGHT, [5.0, -0.3]) == pytest.approx(-0.3)
    s, e = STRAIGHT.project(np.array([[3.0, 1.0], [12.0, -2.0]]))
    np.testing.assert_allclose(s, [3.0, 12.0], atol=1e-6)
    np.testing.assert_allclose(e, [1.0, -2.0], atol=1e-6)


def test_projection_extends_beyond_ends():
    s, e = STRAIGHT.project([25.0, 1.0])
    assert s == pytest.approx(25.0)
    assert e == pytest.approx(1.0)
    s, e = STRAIGHT.project([-2.0, -1.0])
    assert s == pytest.approx(-2.0)
    assert e == pytest.approx(-1.0)


def test_projection_on_curve_matches_radius():
    path = circle()
    # a point 1 m outside the circle centred at (0, 15) lies to the right of a left turn
    p = np.array([0.0, 15.0]) + 16.0 * np.array([np.cos(-0.5), np.sin(-0.5)])
    assert cross_track_error(path, p) == pytest.approx(-1.0, abs=2e-3)


def test_bad_waypoints():
    with pytest.raises(ConfigError):
        Path([[0.0, 0.0]])
    with pytest.raises(ConfigError):
        Path([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]])


def test_pid_by_hand():
    pid = Pid(PidGains(kp=2.0, ki=0.5, kd=0.1, integral_limit=10.0))
    assert pid(1.0, 0.1) == pytest.approx(2.0 + 0.5 * 0.1)  # no derivative on the first call
    assert pid(0.5, 0.1) == pytest.approx(1.0 + 0.5 * 0.15 + 0.1 * (-5.0))


def test_pid_integral_clamp():
    pid = Pid(PidGains(kp=0.0, ki=1.0, integral_limit=0.2))
    for _ in range(100):
        out = pid(1.0, 0.1)
    assert out == pytest.approx(0.2)


def test_negative_gain_rejected():
    with pytest.raises(ConfigError):
        PidGains(kp=-1.0)


def test_brake_stops_within_two_seconds():
    ctrl = PathController(STRAIGHT, 2.0, mode=Mode.BRAKE)
    traj = integrate(vehicle_state(v=2.0), closed_loop_fn(ctrl), T=2.0)
    assert traj.states[-1, V] < 0.05


def test_trackspeed_converges_on_straight():
    ctrl = PathController(STRAIGHT, 2.0)
    traj = integrate(vehicle_state(y=0.5, v=1.0), closed_loop_fn(ctrl), T=8.0)
    final = traj.states[-1]
    assert final[V] == pytest.approx(2.0, abs=0.05)
    assert abs(final[1]) < 0.05


def test_curve_steady_offset_matches_proportional_law():
    # without integral action the loop settles where kp * |e| equals the arc's steering angle
    path = circle()
    gains = ControllerGains()
    ctrl = PathController(path, 2.5, gains)
    traj = integrate(vehicle_state(v=2.5), closed_loop_fn(ctrl), T=15.0)
    _, e = path.project(traj.states[-500:, :2])
    expected = np.arctan(VehicleParams().L / 15.0) / gains.steering.kp
    assert np.ptp(e) < 0.01
    assert np.abs(e).mean() == pytest.approx(expected, rel=0.1)
    assert np.all(e < 0)  # settles on the outside of the bend


def test_circle_waypoints_every_ten_degrees():
    a = np.deg2rad(np.arange(0, 361, 10))
    path = Path(np.column_stack([10 * np.cos(a), 10 * np.sin(a)]))
    assert path.total_length == pytest.approx(2 * np.pi * 10, rel=5e-3)


def test_on_path_point_has_zero_error():
    path = circle()
    assert abs(cross_track_error(path, path.point_at(11.3))) < 1e-3
    assert cross_track_error(STRAIGHT, [5.0, 0.3]) == pytest.approx(0.3)


def test_on_path_at_reference_speed_gives_zero_input():
    u = control(vehicle_state(x=4.0, v=2.0), STRAIGHT, Mode.TRACKSPEED, 2.0)
    np.testing.assert_allclose(u, [0.0, 0.0], atol=1e-6)


def test_lateral_step_recovers_without_ringing():
    path = Path([[0.0, 0.0], [50.0, 0.0]])
    ctrl = PathController(path, 1.5)
    traj = integrate(vehicle_state(y=0.5, v=1.5), closed_loop_fn(ctrl), T=8.0)
    e = traj.states[:, 1]
    assert abs(e[-1]) < 0.05
    crossings = np.count_nonzero(np.diff(np.sign(e[np.abs(e) > 1e-3])))
    assert crossings <= 1


def test_mode_switch_resets_memory():
    ctrl = PathController(STRAIGHT, 2.0)
    ctrl.control(vehicle_state(y=0.5, v=1.0), 0.02)
    assert ctrl.speed_pid.prev_error is not None
    ctrl.set_mode(Mode.BRAKE)
    assert ctrl.speed_pid.prev_error is None and ctrl.speed_pid.integral == 0.0
    ctrl.control(vehicle_state(v=1.0), 0.02)
    ctrl.set_mode(Mode.BRAKE)  # same mode keeps memory
    assert ctrl.speed_pid.prev_error is not None


def test_outputs_are_saturated():
    params = VehicleParams()
    u = control(vehicle_state(y=-20.0, v=0.0), STRAIGHT, Mode.TRACKSPEED, 30.0)
    assert abs(u[0]) <= params.a_max and abs(u[1]) <= params.u_max


def test_steering_target_respects_limit():
    ctrl = PathController(STRAIGHT, 2.0)
    traj = integrate(vehicle_state(y=-5.0, v=2.0), closed_loop_fn(ctrl), T=3.0)
    assert np.all(np.abs(traj.states[:, PHI]) <= VehicleParams().phi_max + 1e-12)


def test_batch_control_matches_single():
    states = np.array([vehicle_state(y=0.2, v=1.0), vehicle_state(x=5.0, y=-0.4, v=2.5)])
    batch = PathController(STRAIGHT, 2.0).control(states, 0.02)
    for i, s in enumerate(states):
        np.testing.assert_allclose(batch[i], PathController(STRAIGHT, 2.0).control(s, 0.02))


def test_reset_then_zero_error_gives_zero_output():
    pid = Pid(PidGains(kp=1.0, ki=1.0, kd=1.0))
    pid(3.0, 0.1)
    pid.reset()
    assert pid(0.0, 0.1) == 0.0

"""Spline path following: PID speed control and PID steering on cross-track error."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from .vehicle import PHI, V, VehicleParams, clip_input


class ConfigError(ValueError):
    pass


class Mode(str, enum.Enum):
    TRACKSPEED = "trackspeed"
    BRAKE = "brake"


RESOLUTION = 0.01  # m, arc-length table spacing


class Path:
    """Natural cubic spline through waypoints, tabulated by arc length."""

    def __init__(self, waypoints):
        wp = np.asarray(waypoints, dtype=float)
        if wp.ndim != 2 or wp.shape[1] != 2 or len(wp) < 2:
            raise ConfigError("need at least two 2-D waypoints")
        seg = np.linalg.norm(np.diff(wp, axis=0), axis=1)
        if np.any(seg == 0):
            raise ConfigError("duplicate consecutive waypoints")
        self.waypoints = wp
        self.chord = np.concatenate([[0.0], np.cumsum(seg)])
        self.spline = CubicSpline(self.chord, wp, bc_type="natural")

        # integrate arc length on a fine chord grid, then resample uniformly in s
        u = np.linspace(0.0, self.chord[-1], int(np.ceil(self.chord[-1] / (RESOLUTION / 10))) + 1)
        pts = self.spline(u)
        s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
        self.total_length = float(s[-1])
        n = int(np.ceil(self.total_length / RESOLUTION)) + 1
        self.s = np.linspace(0.0, self.total_length, n)
        self._u_of_s = (s, u)
        self.points = self.spline(np.interp(self.s, s, u))
        d = self.spline(np.interp(self.s, s, u), 1)
        self.tangents = d / np.linalg.norm(d, axis=1, keepdims=True)
        self._tree = cKDTree(self.points)

    def point_at(self, s):
        s_tab, u_tab = self._u_of_s
        return self.spline(np.interp(s, s_tab, u_tab))

    def heading_at(self, s):
        s_tab, u_tab = self._u_of_s
        d = self.spline(np.interp(s, s_tab, u_tab), 1)
        return np.arctan2(d[..., 1], d[..., 0])

    def project(self, position) -> tuple[np.ndarray, np.ndarray]:
        """Arc length and signed lateral offset (positive to the left) of each position.

        Beyond either end the path continues as a straight line along the end tangent.
        """
        p = np.asarray(position, dtype=float)
        single = p.ndim == 1
        p = np.atleast_2d(p)
        n_pts = len(self.points)

        k = self._tree.query(p)[1]

        # project onto the segment that follows or precedes the nearest sample
        seg_start = np.clip(k - 1, 0, n_pts - 2)
        best_s = np.empty(len(p))
        best_e = np.full(len(p), np.inf)
        for start in (seg_start, np.clip(k, 0, n_pts - 2)):
            a, b = self.points[start], self.points[start + 1]
            ab = b - a
            t = np.clip(np.sum((p - a) * ab, axis=1) / np.sum(ab * ab, axis=1), 0.0, 1.0)
            q = a + t[:, None] * ab
            dist = np.linalg.norm(p - q, axis=1)
            tangent = ab / np.linalg.norm(ab, axis=1, keepdims=True)
            signed = np.sign(tangent[:, 0] * (p - q)[:, 1] - tangent[:, 1] * (p - q)[:, 0]) * dist
            better = dist < np.abs(best_e)
            best_e = np.where(better, signed, best_e)
            best_s = np.where(better, self.s[start] + t * (self.s[start + 1] - self.s[start]), best_s)

        for end, idx, direction in ((0, 0, -1.0), (1, n_pts - 1, 1.0)):
            tangent = self.tangents[idx]
            rel = p - self.points[idx]
            along = rel @ tangent
            beyond = along * direction > 0
            if end == 0:
                beyond &= k == 0
            else:
                beyond &= k == n_pts - 1
            lateral = tangent[0] * rel[:, 1] - tangent[1] * rel[:, 0]
            best_e = np.where(beyond, lateral, best_e)
            best_s = np.where(beyond, self.s[idx] + along, best_s)

        if single:
            return best_s[0], best_e[0]
        return best_s, best_e


def fit_path(waypoints) -> Path:
    return Path(waypoints)


def cross_track_error(path: Path, position):
    return path.project(position)[1]


@dataclass(frozen=True)
class PidGains:
    kp: float
    ki: float = 0.0
    kd: float = 0.0
    integral_limit: float = 1.0

    def __post_init__(self):
        if min(self.kp, self.ki, self.kd) < 0:
            raise ConfigError("PID gains must be nonnegative")


@dataclass(frozen=True)
class ControllerGains:
    speed: PidGains = PidGains(kp=2.5, ki=0.1, kd=0.0, integral_limit=2.0)
    steering: PidGains = PidGains(kp=0.5, ki=0.0, kd=1.0, integral_limit=0.5)
    steer_rate_gain: float = 4.0  # 1/s, steering-angle tracking loop


@dataclass
class Pid:
    gains: PidGains
    integral: np.ndarray | float = 0.0
    prev_error: np.ndarray | None = None

    def __call__(self, error, dt):
        g = self.gains
        self.integral = np.clip(self.integral + error * dt, -g.integral_limit, g.integral_limit)
        deriv = 0.0 if self.prev_error is None else (error - self.prev_error) / dt
        self.prev_error = error
        return g.kp * error + g.ki * self.integral + g.kd * deriv

    def reset(self):
        self.integral = 0.0
        self.prev_error = None
        return self


@dataclass
class PathController:
    """Speed and steering PID pair for one control loop (or one batch of simulations)."""

    path: Path
    v_r: float
    gains: ControllerGains = ControllerGains()
    params: VehicleParams = VehicleParams()
    mode: Mode = Mode.TRACKSPEED
    speed_pid: Pid = field(init=False)
    steer_pid: Pid = field(init=False)

    def __post_init__(self):
        self.mode = Mode(self.mode)
        self.speed_pid = Pid(self.gains.speed)
        self.steer_pid = Pid(self.gains.steering)

    def reset(self):
        self.speed_pid.reset()
        self.steer_pid.reset()
        return self

    def set_mode(self, mode):
        mode = Mode(mode)
        if mode != self.mode:
            self.mode = mode
            self.reset()

    def control(self, state, dt: float) -> np.ndarray:
        if not dt > 0:
            raise ValueError("dt must be positive")
        state = np.asarray(state, dtype=float)
        target = self.v_r if self.mode == Mode.TRACKSPEED else 0.0
        a = self.speed_pid(target - state[..., V], dt)

        cte = cross_track_error(self.path, state[..., :2])
        phi_target = np.clip(-self.steer_pid(cte, dt), -self.params.phi_max, self.params.phi_max)
        u = self.gains.steer_rate_gain * (phi_target - state[..., PHI])
        return clip_input(np.stack([a, u], axis=-1), self.params)


def control(state, path: Path, mode, v_r: float, gains: ControllerGains = ControllerGains(),
            dt: float = 0.02, controller: PathController | None = None) -> np.ndarray:
    """Functional entry point; pass ``controller`` to carry PID memory across calls."""
    if controller is None:
        controller = PathController(path, v_r, gains)
    controller.v_r = v_r
    controller.set_mode(mode)
    return controller.control(state, dt)


def reset(controller: PathController) -> PathController:
    return controller.reset()


def closed_loop_fn(controller: PathController, control_dt: float = 0.02):
    """Controller callback for ``vehicle.integrate`` with a zero-order hold at ``control_dt``."""
    held = {"t": None, "u": None}

    def fn(state, t):
        if held["t"] is None or t - held["t"] >= control_dt - 1e-9:
            held["u"] = controller.control(state, control_dt)
            held["t"] = t
        return held["u"]

    return fn

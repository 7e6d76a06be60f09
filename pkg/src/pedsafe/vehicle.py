"""Kinematic bicycle model with fixed-step RK4 integration.

States are arrays ``[x, y, phi, v, theta]`` (phi = steering angle, theta = heading),
inputs are ``[a, u]`` (acceleration, steering rate). Everything broadcasts over a
leading batch axis so a set of initial states can be simulated in one call.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

X, Y, PHI, V, THETA = range(5)
STATE_NAMES = ("x", "y", "phi", "v", "theta")


class SingularSteeringError(ValueError):
    pass


@dataclass(frozen=True)
class VehicleParams:
    L: float = 2.4
    phi_max: float = 0.61
    a_max: float = 2.5
    u_max: float = 1.0

    def __post_init__(self):
        if self.L <= 0:
            raise ValueError("wheelbase must be positive")
        if not 0 < self.phi_max < np.pi / 2:
            raise ValueError("phi_max must lie in (0, pi/2)")


class Trajectory(NamedTuple):
    times: np.ndarray  # (k,)
    states: np.ndarray  # (k, 5) or (k, n, 5)


def vehicle_state(x=0.0, y=0.0, phi=0.0, v=0.0, theta=0.0) -> np.ndarray:
    return np.array([x, y, phi, v, theta], dtype=float)


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - a, 2 * np.pi)


def clip_input(inp, params: VehicleParams) -> np.ndarray:
    inp = np.asarray(inp, dtype=float)
    lim = np.array([params.a_max, params.u_max])
    return np.clip(inp, -lim, lim)


def derivative(state, inp, params: VehicleParams) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    inp = np.asarray(inp, dtype=float)
    phi, v, theta = state[..., PHI], state[..., V], state[..., THETA]
    if np.abs(phi).max() >= np.pi / 2:
        raise SingularSteeringError("steering angle at or beyond pi/2")
    out = np.empty(np.broadcast_shapes(state.shape, inp.shape[:-1] + (5,)))
    out[..., X] = v * np.cos(theta)
    out[..., Y] = v * np.sin(theta)
    out[..., PHI] = inp[..., 1]
    out[..., V] = inp[..., 0]
    out[..., THETA] = v * np.tan(phi) / params.L
    return out


def constrain(state, params: VehicleParams) -> np.ndarray:
    out = np.array(state, dtype=float, copy=True)
    np.clip(out[..., PHI], -params.phi_max, params.phi_max, out=out[..., PHI])
    np.maximum(out[..., V], 0.0, out=out[..., V])
    out[..., THETA] = wrap_angle(out[..., THETA])
    return out


def rk4_step(state, inp, dt: float, params: VehicleParams) -> np.ndarray:
    inp = clip_input(inp, params)
    k1 = derivative(state, inp, params)
    k2 = derivative(state + 0.5 * dt * k1, inp, params)
    k3 = derivative(state + 0.5 * dt * k2, inp, params)
    k4 = derivative(state + dt * k3, inp, params)
    return constrain(state + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), params)


ControllerFn = Callable[[np.ndarray, float], np.ndarray]


def integrate(state, controller_fn: ControllerFn, dt: float = 0.01, T: float = 1.0,
              params: VehicleParams = VehicleParams()) -> Trajectory:
    """Simulate from ``state`` for ``T`` seconds; the input is held over each step."""
    if not dt > 0 or T < dt - 1e-12:
        raise ValueError("need dt > 0 and T >= dt")
    n = int(round(T / dt))
    state = constrain(state, params)
    out = np.empty((n + 1,) + state.shape)
    out[0] = state
    for k in range(n):
        t = k * dt
        state = rk4_step(state, controller_fn(state, t), dt, params)
        out[k + 1] = state
    return Trajectory(np.arange(n + 1) * dt, out)

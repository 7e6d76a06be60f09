"""Pedestrian dynamics: a potential-field force law driving a discrete double integrator.

The pedestrian state is ``[px, py, vx, vy]``. Goals act as sinks of constant
attraction; obstacles are point or segment sources with inverse-square repulsion.
Most functions accept either a single state of shape ``(4,)`` or a batch ``(n, 4)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class InvalidInputError(ValueError):
    pass


@dataclass(frozen=True)
class Obstacle:
    """A repulsive source: a point (``end is None``) or a line segment."""

    start: tuple[float, float]
    end: tuple[float, float] | None = None
    gain: float | None = None  # overrides GpfaParams.repulsion_gain when set


@dataclass
class EnvironmentMap:
    goals: np.ndarray
    obstacles: list[Obstacle] = field(default_factory=list)

    def __post_init__(self):
        self.goals = np.atleast_2d(np.asarray(self.goals, dtype=float))
        if self.goals.size == 0:
            raise InvalidInputError("environment needs at least one goal")
        if self.goals.shape[1] != 2:
            raise InvalidInputError("goals must be 2-D points")

    @property
    def n_goals(self) -> int:
        return len(self.goals)

    def validate(self, goal_radius: float) -> None:
        g = self.goals
        d = np.linalg.norm(g[:, None, :] - g[None, :, :], axis=-1)
        np.fill_diagonal(d, np.inf)
        if np.any(d <= goal_radius):
            raise InvalidInputError("goals must be separated by more than goal_radius")


@dataclass(frozen=True)
class GpfaParams:
    attraction_gain: float = 1.0
    repulsion_gain: float = 0.5
    repulsion_cutoff: float = 2.0
    accel_max: float = 1.5
    goal_radius: float = 0.3
    damping: float = 0.8
    v_max: float = 2.0

    def __post_init__(self):
        if min(self.attraction_gain, self.repulsion_gain, self.damping) < 0:
            raise InvalidInputError("gains must be nonnegative")
        if min(self.repulsion_cutoff, self.accel_max, self.goal_radius, self.v_max) <= 0:
            raise InvalidInputError("cutoff, accel_max, goal_radius and v_max must be positive")


@dataclass(frozen=True)
class StateSpaceModel:
    dt: float = 0.2
    process_noise_std: tuple[float, float] = (0.05, 0.2)  # (position m, velocity m/s)
    measurement_noise_std: float = 0.25

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidInputError("dt must be positive")

    @property
    def F(self) -> np.ndarray:
        return transition_matrices(self.dt)[0]

    @property
    def G(self) -> np.ndarray:
        return transition_matrices(self.dt)[1]

    @property
    def H(self) -> np.ndarray:
        return np.hstack([np.eye(2), np.zeros((2, 2))])


def transition_matrices(dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization of a 2-D double integrator."""
    I = np.eye(2)
    F = np.block([[I, dt * I], [np.zeros((2, 2)), I]])
    G = np.vstack([0.5 * dt**2 * I, dt * I])
    return F, G


@dataclass
class PredictedTrajectory:
    points: np.ndarray  # (k, 2)
    times: np.ndarray  # (k,)
    goal_index: int | None = None
    reached: bool = True

    def __len__(self):
        return len(self.times)

    def to_dict(self) -> dict:
        return {
            "times": np.round(self.times, 6).tolist(),
            "points": np.round(self.points, 6).tolist(),
            "goal_index": self.goal_index,
            "reached": self.reached,
        }


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise InvalidInputError("non-finite input")


def _unit(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return np.divide(v, n, out=np.zeros_like(v), where=n > 0), n[..., 0]


def _nearest_on_obstacle(p: np.ndarray, obs: Obstacle) -> np.ndarray:
    a = np.asarray(obs.start, dtype=float)
    if obs.end is None:
        return np.broadcast_to(a, p.shape)
    b = np.asarray(obs.end, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.broadcast_to(a, p.shape)
    s = np.clip(((p - a) @ ab) / denom, 0.0, 1.0)
    return a + s[..., None] * ab


def gpfa_accel(state, goal, env: EnvironmentMap, params: GpfaParams) -> np.ndarray:
    """Acceleration from the goal sink, obstacle sources and viscous damping.

    ``goal`` may be a single point or one point per state in the batch.
    The result is clipped to ``params.accel_max`` in norm.
    """
    state = np.asarray(state, dtype=float)
    goal = np.asarray(goal, dtype=float)
    _check_finite(state, goal)
    p, v = state[..., :2], state[..., 2:]

    direction, dist = _unit(goal - p)
    attraction = params.attraction_gain * direction
    attraction = np.where((dist <= params.goal_radius)[..., None], 0.0, attraction)

    repulsion = np.zeros_like(p)
    for obs in env.obstacles:
        gain = params.repulsion_gain if obs.gain is None else obs.gain
        away, d = _unit(p - _nearest_on_obstacle(p, obs))
        # floor the distance so a pedestrian on top of a source gets a finite push
        mag = gain / np.maximum(d, 1e-3) ** 2
        repulsion += np.where((d < params.repulsion_cutoff)[..., None], mag[..., None] * away, 0.0)

    acc = attraction + repulsion - params.damping * v
    return _clip_norm(acc, params.accel_max)


def _clip_norm(v: np.ndarray, limit: float) -> np.ndarray:
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    scale = np.where(n > limit, limit / np.where(n > 0, n, 1.0), 1.0)
    return v * scale


def _advance(state, accel, dt, v_max, noise=None):
    F, G = transition_matrices(dt)
    nxt = state @ F.T + accel @ G.T
    if noise is not None:
        nxt = nxt + noise
    nxt[..., 2:] = _clip_norm(nxt[..., 2:], v_max)
    return nxt


def step(state, goal, model: StateSpaceModel, env: EnvironmentMap, params: GpfaParams,
         rng_seed=None) -> np.ndarray:
    """One transition ``x' = F x + G u + w`` with GPFA control ``u``.

    ``rng_seed`` may be an int, a ``numpy.random.Generator`` or None (no noise).
    """
    state = np.asarray(state, dtype=float)
    accel = gpfa_accel(state, goal, env, params)
    noise = None
    if rng_seed is not None:
        rng = np.random.default_rng(rng_seed)
        std = np.repeat(np.asarray(model.process_noise_std, dtype=float), 2)
        noise = rng.normal(size=state.shape) * std
    return _advance(state, accel, model.dt, params.v_max, noise)


def measure(state, model: StateSpaceModel, rng_seed=None) -> np.ndarray:
    """Position measurement ``y = H x + v``."""
    state = np.asarray(state, dtype=float)
    y = state[..., :2].copy()
    if rng_seed is not None and model.measurement_noise_std > 0:
        rng = np.random.default_rng(rng_seed)
        y = y + rng.normal(scale=model.measurement_noise_std, size=y.shape)
    return y


def rollout(start, goal, model: StateSpaceModel, env: EnvironmentMap, params: GpfaParams,
            dt: float | None = None, max_horizon: float = 10.0,
            velocity: Sequence[float] | None = None) -> PredictedTrajectory:
    """Noise-free GPFA forward simulation from ``start`` until the goal is reached.

    If the horizon runs out first the trajectory is returned with ``reached=False``.
    """
    dt = model.dt if dt is None else dt
    if not dt > 0 or max_horizon < dt:
        raise InvalidInputError("need dt > 0 and max_horizon >= dt")
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    v0 = np.zeros(2) if velocity is None else np.asarray(velocity, dtype=float)
    _check_finite(start, goal, v0)

    state = np.concatenate([start, v0])
    points = [start.copy()]
    n_max = int(np.floor(max_horizon / dt + 1e-9))
    reached = np.linalg.norm(start - goal) <= params.goal_radius
    k = 0
    while not reached and k < n_max:
        state = _advance(state, gpfa_accel(state, goal, env, params), dt, params.v_max)
        points.append(state[:2].copy())
        k += 1
        reached = np.linalg.norm(state[:2] - goal) <= params.goal_radius
    return PredictedTrajectory(np.array(points), np.arange(len(points)) * dt, reached=bool(reached))

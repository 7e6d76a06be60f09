"""Multi-hypothesis particle filter over pedestrian goals."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .pedestrian import (
    EnvironmentMap,
    GpfaParams,
    InvalidInputError,
    PredictedTrajectory,
    StateSpaceModel,
    rollout,
    step,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FilterConfig:
    particles_per_intent: int = 200
    likelihood_std: float = 0.25
    init_position_std: float = 0.25
    init_velocity_std: float = 0.1
    rollout_horizon: float = 10.0
    ess_warn_fraction: float = 0.1


@dataclass
class FilterState:
    """Particle population; arrays are treated as immutable by every operation."""

    states: np.ndarray  # (n, 4)
    intents: np.ndarray  # (n,) int
    weights: np.ndarray  # (n,)
    time: float
    n_intents: int
    config: FilterConfig
    seed: int
    draws: int = 0  # number of random draws consumed so far
    degenerate: bool = False

    def next_rng(self) -> tuple[np.random.Generator, int]:
        return np.random.default_rng([self.seed, self.draws]), self.draws + 1

    def __len__(self):
        return len(self.weights)

    def intent_distribution(self) -> np.ndarray:
        return np.bincount(self.intents, weights=self.weights, minlength=self.n_intents)

    def effective_sample_size(self) -> float:
        return 1.0 / float(np.sum(self.weights**2))


def init_filter(first_measurement, env: EnvironmentMap, config: FilterConfig = FilterConfig(),
                rng_seed=0, time: float = 0.0) -> FilterState:
    if env.n_goals < 1:
        raise InvalidInputError("no goals configured")
    rng = np.random.default_rng([rng_seed, 0])
    n = env.n_goals * config.particles_per_intent
    y = np.asarray(first_measurement, dtype=float)
    pos = y + rng.normal(scale=config.init_position_std, size=(n, 2))
    vel = rng.normal(scale=config.init_velocity_std, size=(n, 2))
    intents = np.repeat(np.arange(env.n_goals), config.particles_per_intent)
    return FilterState(np.hstack([pos, vel]), intents, np.full(n, 1.0 / n), time,
                       env.n_goals, config, seed=int(rng_seed), draws=1)


def predict(filt: FilterState, model: StateSpaceModel, env: EnvironmentMap, params: GpfaParams,
            dt: float | None = None) -> FilterState:
    dt = model.dt if dt is None else dt
    if dt == 0:
        return filt
    if dt < 0:
        raise InvalidInputError("dt must be nonnegative")
    if dt != model.dt:
        model = replace(model, dt=dt)
    rng, draws = filt.next_rng()
    states = step(filt.states, env.goals[filt.intents], model, env, params, rng_seed=rng)
    return replace(filt, states=states, time=filt.time + dt, draws=draws)


def update(filt: FilterState, measurement) -> tuple[FilterState, np.ndarray]:
    y = np.asarray(measurement, dtype=float)
    if not np.all(np.isfinite(y)):
        raise InvalidInputError("measurement must be finite")
    if filt.effective_sample_size() < filt.config.ess_warn_fraction * len(filt):
        log.warning("particle population degenerate before update (ESS %.1f)",
                    filt.effective_sample_size())
    d2 = np.sum((filt.states[:, :2] - y) ** 2, axis=1)
    w = filt.weights * np.exp(-d2 / (2.0 * filt.config.likelihood_std**2))
    total = w.sum()
    degenerate = not (total > 0 and np.isfinite(total))
    if degenerate:
        log.warning("all particle likelihoods underflowed; resetting to uniform weights")
        w = np.full(len(w), 1.0 / len(w))
    else:
        w = w / total
    out = replace(filt, weights=w, degenerate=degenerate)
    return out, out.intent_distribution()


def systematic_indices(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = len(weights)
    positions = (rng.random() + np.arange(n)) / n
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0
    return np.searchsorted(cumulative, positions, side="right")


def resample(filt: FilterState, rng_seed=None) -> FilterState:
    """Systematic resampling; children inherit state and intent label."""
    draws = filt.draws
    if rng_seed is None:
        rng, draws = filt.next_rng()
    else:
        rng = np.random.default_rng(rng_seed)
    idx = systematic_indices(filt.weights, rng)
    n = len(idx)
    return replace(filt, states=filt.states[idx], intents=filt.intents[idx],
                   weights=np.full(n, 1.0 / n), draws=draws)


def map_intent(distribution: np.ndarray) -> int:
    # np.argmax returns the first maximum, i.e. the lowest goal index on ties
    return int(np.argmax(distribution))


def estimate_step(filt: FilterState, measurement, model: StateSpaceModel, env: EnvironmentMap,
                  params: GpfaParams, dt: float | None = None
                  ) -> tuple[FilterState, np.ndarray, PredictedTrajectory]:
    """predict, update, resample, then roll out the MAP intent from the measurement."""
    filt = predict(filt, model, env, params, dt)
    filt, dist = update(filt, measurement)
    best = map_intent(dist)
    # velocity estimate from the MAP hypothesis, taken before resampling flattens weights
    mask = filt.intents == best
    w = filt.weights[mask]
    velocity = (w @ filt.states[mask, 2:]) / w.sum() if w.sum() > 0 else np.zeros(2)
    filt = resample(filt)
    traj = rollout(measurement, env.goals[best], model, env, params,
                   max_horizon=filt.config.rollout_horizon, velocity=velocity)
    traj.goal_index = best
    return filt, dist, traj


def replay_track(times, positions, env: EnvironmentMap, model: StateSpaceModel = StateSpaceModel(),
                 params: GpfaParams = GpfaParams(), config: FilterConfig = FilterConfig(),
                 rng_seed=0) -> list[dict]:
    """Run the filter over a recorded track; one record per measurement.

    The first measurement only initializes the filter, so its prediction is the point itself.
    """
    times = np.asarray(times, dtype=float)
    positions = np.asarray(positions, dtype=float)
    if times.ndim != 1 or positions.shape != (len(times), 2):
        raise InvalidInputError("track needs matching times (n,) and positions (n, 2)")
    if len(times) == 0:
        raise InvalidInputError("empty track")
    if np.any(np.diff(times) <= 0):
        raise InvalidInputError("track timestamps must be strictly increasing")
    filt = init_filter(positions[0], env, config, rng_seed, time=float(times[0]))
    dist = filt.intent_distribution()
    traj = PredictedTrajectory(positions[:1].copy(), np.zeros(1), None, False)
    out = []
    for k, (t, y) in enumerate(zip(times, positions)):
        if k > 0:
            filt, dist, traj = estimate_step(filt, y, model, env, params, dt=float(t - times[k - 1]))
        out.append({"t": float(t), "measurement": y.tolist(), "intent": dist.tolist(),
                    "map_intent": map_intent(dist), "predicted": traj.to_dict()})
    return out

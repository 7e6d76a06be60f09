"""Simulation-based reach tubes bloated by a learned sensitivity function.

Offline, pairs of nearby closed-loop trajectories are simulated and a per-dimension
piecewise-exponential bound on their divergence is fitted. Online, the initial set is
partitioned, the partition centers are simulated, and every trace is bloated with
that bound; the per-step interval hull of the bloated boxes forms the tube.
"""
from __future__ import annotations

import json
import time as _time
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Protocol, Sequence

import numpy as np

from .control import ConfigError, ControllerGains, Mode, Path, PathController, closed_loop_fn
from .vehicle import THETA, VehicleParams, integrate, wrap_angle

FORMAT_NAME = "pedsafe-sensitivity"
FORMAT_VERSION = 1
LEVELS = ("low", "medium", "high")

DEFAULT_RADII = {
    #          x     y     phi   v     theta
    "low": (0.10, 0.10, 0.01, 0.05, 0.02),
    "medium": (0.25, 0.25, 0.02, 0.10, 0.05),
    "high": (0.50, 0.50, 0.04, 0.20, 0.10),
}


class ReachError(RuntimeError):
    pass


@dataclass(frozen=True)
class InitialSet:
    center: np.ndarray
    radii: np.ndarray
    confidence: str = "medium"

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "radii", np.asarray(self.radii, dtype=float))
        if np.any(self.radii < 0):
            raise ValueError("radii must be nonnegative")


def nested_initial_sets(center, radii: dict | None = None) -> list[InitialSet]:
    radii = DEFAULT_RADII if radii is None else radii
    sets = [InitialSet(center, radii[lvl], lvl) for lvl in LEVELS]
    for small, big in zip(sets, sets[1:]):
        if np.any(small.radii > big.radii):
            raise ValueError("confidence radii must be nested")
    return sets


@dataclass
class SensitivityFunction:
    """beta_d(delta, t) = delta * exp(sum_j gamma[d, j] * overlap(t, bin_j))."""

    bin_edges: np.ndarray  # (nb + 1,)
    gammas: np.ndarray  # (dim, nb)
    mode: Mode
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.bin_edges = np.asarray(self.bin_edges, dtype=float)
        self.gammas = np.atleast_2d(np.asarray(self.gammas, dtype=float))
        self.mode = Mode(self.mode)

    @property
    def horizon(self) -> float:
        return float(self.bin_edges[-1])

    @property
    def bin_width(self) -> float:
        return float(self.bin_edges[1] - self.bin_edges[0])

    def log_factor(self, t) -> np.ndarray:
        """Cumulative exponent at times ``t``; shape ``t.shape + (dim,)``."""
        t = np.asarray(t, dtype=float)
        lo, hi = self.bin_edges[:-1], self.bin_edges[1:]
        overlap = np.clip(t[..., None] - lo, 0.0, hi - lo)
        return overlap @ self.gammas.T

    def __call__(self, delta, t) -> np.ndarray:
        """Bloat for initial half-widths ``delta`` (..., dim) at times ``t`` (k,) -> (k, ..., dim)."""
        delta = np.asarray(delta, dtype=float)
        factor = np.exp(self.log_factor(t))
        factor = factor.reshape(factor.shape[:1] + (1,) * (delta.ndim - 1) + factor.shape[1:])
        return delta * factor

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "mode": self.mode.value,
            "bin_edges": self.bin_edges.tolist(),
            "gammas": self.gammas.tolist(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SensitivityFunction":
        if d.get("format") != FORMAT_NAME:
            raise ValueError("not a sensitivity function file")
        if d.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported sensitivity file version {d.get('version')}")
        return cls(d["bin_edges"], d["gammas"], d["mode"], d.get("metadata", {}))

    def save(self, path) -> None:
        FsPath(path).parent.mkdir(parents=True, exist_ok=True)
        FsPath(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "SensitivityFunction":
        return cls.from_dict(json.loads(FsPath(path).read_text()))


class PairSampler(Protocol):
    """What ``learn_sensitivity`` needs from a plant."""

    dt: float

    def sample_pairs(self, rng: np.random.Generator, k: int) -> tuple[np.ndarray, np.ndarray]: ...

    def simulate(self, states: np.ndarray, mode: Mode, horizon: float) -> np.ndarray: ...

    def difference(self, a: np.ndarray, b: np.ndarray) -> np.ndarray: ...


def fit_piecewise_exponential(times: np.ndarray, log_ratios: np.ndarray,
                              bin_edges: np.ndarray) -> np.ndarray:
    """Least-squares exponent per bin, raised until every sample lies below the bound.

    ``log_ratios`` is (steps, samples); NaN entries are ignored.
    """
    gammas = np.zeros(len(bin_edges) - 1)
    level = 0.0
    for j, (lo, hi) in enumerate(zip(bin_edges[:-1], bin_edges[1:])):
        sel = (times > lo + 1e-12) & (times <= hi + 1e-12)
        tau = np.broadcast_to((times[sel] - lo)[:, None], log_ratios[sel].shape)
        y = log_ratios[sel] - level
        ok = np.isfinite(y)
        if not ok.any():
            gammas[j] = 0.0
        else:
            tau, y = tau[ok], y[ok]
            g = float(tau @ y / (tau @ tau))
            gammas[j] = max(g, float(np.max(y / tau)))
        level += gammas[j] * (hi - lo)
    return gammas


def learn_sensitivity(mode, sampler: PairSampler, K_pairs: int = 200, horizon: float = 5.0,
                      bin_width: float = 0.5, rng_seed=0) -> SensitivityFunction:
    mode = Mode(mode)
    if K_pairs < 20:
        raise ConfigError("need at least 20 trajectory pairs")
    n_bins = int(np.ceil(horizon / bin_width - 1e-9))
    bin_edges = np.minimum(np.arange(n_bins + 1) * bin_width, horizon)

    rng = np.random.default_rng(rng_seed)
    xa, xb = sampler.sample_pairs(rng, K_pairs)
    traj = sampler.simulate(np.concatenate([xa, xb]), mode, horizon)  # (steps, 2K, dim)
    times = np.arange(traj.shape[0]) * sampler.dt
    diff = np.abs(sampler.difference(traj[:, :K_pairs], traj[:, K_pairs:]))  # (steps, K, dim)

    dim = diff.shape[-1]
    gammas = np.zeros((dim, n_bins))
    used = []
    for d in range(dim):
        d0 = diff[0, :, d]
        keep = d0 > 0
        if not keep.any():
            raise ConfigError(f"no usable trajectory pairs for state dimension {d}")
        with np.errstate(divide="ignore"):
            logr = np.log(diff[:, keep, d] / d0[keep])
        logr[~np.isfinite(logr)] = np.nan
        gammas[d] = fit_piecewise_exponential(times, logr, bin_edges)
        used.append(int(keep.sum()))

    meta = {"pairs": int(K_pairs), "usable_pairs": used, "horizon": float(horizon),
            "bin_width": float(bin_width), "seed": rng_seed if isinstance(rng_seed, int) else None}
    meta.update(getattr(sampler, "describe", lambda: {})())
    return SensitivityFunction(bin_edges, gammas, mode, meta)


def simulate_closed_loop(states, path: Path, v_r: float, mode, T: float,
                         gains: ControllerGains = ControllerGains(),
                         params: VehicleParams = VehicleParams(),
                         dt: float = 0.01, control_dt: float = 0.02) -> np.ndarray:
    """Batch closed-loop simulation; returns (steps, n, 5) with unwrapped heading."""
    ctrl = PathController(path, v_r, gains, params, mode=Mode(mode))
    traj = integrate(np.asarray(states, dtype=float), closed_loop_fn(ctrl, control_dt), dt, T, params)
    states = traj.states.copy()
    states[..., THETA] = np.unwrap(states[..., THETA], axis=0)
    return states


@dataclass
class VehicleSampler:
    """Operating points near the path, each paired with a corner-aligned offset."""

    path: Path
    v_r: float
    offset_scale: np.ndarray
    gains: ControllerGains = ControllerGains()
    params: VehicleParams = VehicleParams()
    lateral_spread: float = 0.3
    heading_spread: float = 0.05
    steer_spread: float = 0.2
    speed_margin: float = 0.5
    dt: float = 0.01
    control_dt: float = 0.02

    def sample_pairs(self, rng, k):
        s = rng.uniform(0.0, self.path.total_length, k)
        base = self.path.point_at(s)
        heading = self.path.heading_at(s)
        normal = np.stack([-np.sin(heading), np.cos(heading)], axis=1)
        pos = base + rng.uniform(-self.lateral_spread, self.lateral_spread, (k, 1)) * normal
        xa = np.column_stack([
            pos,
            rng.uniform(-self.steer_spread, self.steer_spread, k),
            rng.uniform(0.0, self.v_r + self.speed_margin, k),
            heading + rng.uniform(-self.heading_spread, self.heading_spread, k),
        ])
        scale = rng.uniform(0.05, 1.0, (k, 1))
        signs = rng.choice([-1.0, 1.0], size=(k, len(self.offset_scale)))
        xb = xa + scale * signs * np.asarray(self.offset_scale)
        return xa, xb

    def simulate(self, states, mode, horizon):
        return simulate_closed_loop(states, self.path, self.v_r, mode, horizon, self.gains,
                                    self.params, self.dt, self.control_dt)

    def difference(self, a, b):
        d = b - a
        d[..., THETA] = wrap_angle(d[..., THETA])
        return d

    def describe(self) -> dict:
        return {"plant": "bicycle", "v_r": float(self.v_r),
                "offset_scale": np.asarray(self.offset_scale, dtype=float).tolist()}


def partition_grid(radii, m_cap: int) -> tuple[np.ndarray, np.ndarray]:
    """Cell counts per dimension and normalized cell-center offsets in [-1, 1].

    Splits along the two largest-radius dimensions into at most ``m_cap`` equal cells.
    """
    if m_cap < 1:
        raise ValueError("m_cap must be >= 1")
    radii = np.asarray(radii, dtype=float)
    best = (1, 1)
    for n2 in range(1, m_cap + 1):
        n1 = m_cap // n2
        if n1 < n2:
            break
        if n1 * n2 > best[0] * best[1] or (n1 * n2 == best[0] * best[1] and n1 - n2 < best[0] - best[1]):
            best = (n1, n2)
    order = np.argsort(-radii, kind="stable")
    counts = np.ones(len(radii), dtype=int)
    for dim, n in zip(order[:2], best):
        if radii[dim] > 0:
            counts[dim] = n
    axes = [(2 * np.arange(n) + 1) / n - 1.0 for n in counts]
    offsets = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(radii))
    return counts, offsets


def cell_half_widths(radii, m_cap: int) -> np.ndarray:
    counts, _ = partition_grid(radii, m_cap)
    return np.asarray(radii, dtype=float) / counts


@dataclass
class ReachTube:
    times: np.ndarray  # (k,)
    lo: np.ndarray  # (k, 5)
    hi: np.ndarray  # (k, 5)
    mode: Mode
    confidence: str
    compute_time: float = 0.0

    def __len__(self):
        return len(self.times)

    def contains(self, other: "ReachTube", tol: float = 1e-12) -> bool:
        return bool(np.all(self.lo <= other.lo + tol) and np.all(other.hi <= self.hi + tol))

    def truncate(self, T: float) -> "ReachTube":
        k = int(np.searchsorted(self.times, T + 1e-9))
        return ReachTube(self.times[:k], self.lo[:k], self.hi[:k], self.mode, self.confidence,
                         self.compute_time)


@dataclass
class ReachContext:
    """Everything a tube computation needs besides the initial set."""

    path: Path
    v_r: float
    betas: dict
    gains: ControllerGains = ControllerGains()
    params: VehicleParams = VehicleParams()
    m_cap: int = 8
    dt: float = 0.01
    control_dt: float = 0.02

    def beta(self, mode) -> SensitivityFunction:
        mode = Mode(mode)
        if mode not in self.betas:
            raise ReachError(f"no sensitivity function trained for mode {mode.value}")
        b = self.betas[mode]
        if b.mode != mode:
            raise ReachError("sensitivity function was trained for a different mode")
        return b


def _tubes(center, radii_list: Sequence[np.ndarray], labels, mode, ctx: ReachContext,
           T_look: float, dt: float | None) -> list[ReachTube]:
    t0 = _time.perf_counter()
    mode = Mode(mode)
    beta = ctx.beta(mode)
    if T_look > beta.horizon + 1e-9:
        raise ReachError(f"T_look {T_look} exceeds trained horizon {beta.horizon}")
    dt = ctx.dt if dt is None else dt
    stride = int(round(dt / ctx.dt))
    if stride < 1 or abs(stride * ctx.dt - dt) > 1e-9:
        raise ValueError("tube dt must be a multiple of the integration step")

    center = np.asarray(center, dtype=float)
    ref = np.asarray(radii_list[0], dtype=float)  # the smallest set fixes the centers
    counts, offsets = partition_grid(radii_list[-1], ctx.m_cap)
    starts = center + offsets * ref
    traces = simulate_closed_loop(starts, ctx.path, ctx.v_r, mode, T_look, ctx.gains, ctx.params,
                                  ctx.dt, ctx.control_dt)[::stride]  # (k, m, 5)
    # keep every partition trace on the heading branch of the first one
    shift = 2 * np.pi * np.round((traces[:1, :, THETA] - traces[:1, :1, THETA]) / (2 * np.pi))
    traces[..., THETA] -= shift
    times = np.arange(traces.shape[0]) * dt
    sim_time = _time.perf_counter() - t0

    out = []
    factor = np.exp(beta.log_factor(times))[:, None, :]  # (k, 1, dim)
    for radii, label in zip(radii_list, labels):
        t1 = _time.perf_counter()
        radii = np.asarray(radii, dtype=float)
        # cell half-width plus the displacement between this level's cell center and the
        # shared simulation center, so the cells cover this level's set
        half = radii / counts + np.abs(offsets) * (radii - ref)  # (m, dim)
        bloat = half[None] * factor
        lo = np.min(traces - bloat, axis=1)
        hi = np.max(traces + bloat, axis=1)
        out.append(ReachTube(times, lo, hi, mode, label,
                             sim_time + _time.perf_counter() - t1))
    return out


def compute_reach_tube(theta: InitialSet, mode, ctx: ReachContext, T_look: float = 3.0,
                       dt: float | None = None) -> ReachTube:
    if ctx.m_cap < 1:
        raise ValueError("m_cap must be >= 1")
    return _tubes(theta.center, [theta.radii], [theta.confidence], mode, ctx, T_look, dt)[0]


def nested_tubes(center, confidence_radii: dict | None, mode, ctx: ReachContext,
                 T_look: float = 3.0, dt: float | None = None) -> dict[str, ReachTube]:
    """Low/medium/high tubes from one batch of simulations; boxwise nested by construction."""
    confidence_radii = DEFAULT_RADII if confidence_radii is None else confidence_radii
    radii = [np.asarray(confidence_radii[lvl], dtype=float) for lvl in LEVELS]
    for small, big in zip(radii, radii[1:]):
        if np.any(small > big):
            raise ValueError("confidence radii must be nested")
    tubes = _tubes(center, radii, LEVELS, mode, ctx, T_look, dt)
    return dict(zip(LEVELS, tubes))


def containment_mask(tube: ReachTube, truth_times, truth_states, t0: float = 0.0,
                     full_state: bool = False) -> np.ndarray:
    """Per-sample containment for truth samples inside the tube's time window."""
    truth_times = np.asarray(truth_times, dtype=float) - t0
    truth_states = np.asarray(truth_states, dtype=float)
    dt = tube.times[1] - tube.times[0] if len(tube) > 1 else 1.0
    window = (truth_times >= -dt / 2) & (truth_times <= tube.times[-1] + dt / 2)
    if not window.any():
        raise ReachError("truth trajectory does not overlap the tube window")
    idx = np.clip(np.rint(truth_times[window] / dt).astype(int), 0, len(tube) - 1)
    x = truth_states[window]
    lo, hi = tube.lo[idx], tube.hi[idx]
    dims = [0, 1]
    if full_state and x.shape[1] >= 5:
        dims = [0, 1, 2, 3, 4]
        x = x.copy()
        x[:, THETA] = lo[:, THETA] + np.mod(x[:, THETA] - lo[:, THETA], 2 * np.pi)
    return np.all((x[:, dims] >= lo[:, dims]) & (x[:, dims] <= hi[:, dims]), axis=1)


def containment_accuracy(tube: ReachTube, truth_times, truth_states, t0: float = 0.0,
                         full_state: bool = False) -> float:
    return float(np.mean(containment_mask(tube, truth_times, truth_states, t0, full_state)))

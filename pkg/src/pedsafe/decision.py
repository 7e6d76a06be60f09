"""Mode selection by intersecting vehicle reach tubes with pedestrian unsafe sets."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .control import Mode
from .pedestrian import PredictedTrajectory
from .reach import LEVELS, ReachContext, ReachTube, nested_tubes


class DecisionError(ValueError):
    pass


@dataclass
class UnsafeTube:
    times: np.ndarray  # (k,)
    centers: np.ndarray  # (k, 2)
    radius: float

    def __len__(self):
        return len(self.times)


@dataclass
class Decision:
    mode: Mode
    confidence_used: str
    first_conflict_time: float | None = None
    unavoidable: bool = False
    pedestrian_conflicts: list[bool] = field(default_factory=list)
    level_safe: dict[str, bool] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "confidence_used": self.confidence_used,
            "first_conflict_time": self.first_conflict_time,
            "unavoidable": self.unavoidable,
            "pedestrian_conflicts": self.pedestrian_conflicts,
            "level_safe": self.level_safe,
        }


def pedestrian_unsafe_set(traj: PredictedTrajectory, r_ped: float, dt: float, T_look: float,
                          elapsed: float = 0.0) -> UnsafeTube:
    """Bloat a predicted trajectory into discs on the grid ``0, dt, ..., T_look``.

    ``elapsed`` is the time since the trajectory was predicted. Past its last point
    the pedestrian is held at the final (goal) location.
    """
    if len(traj) == 0:
        raise DecisionError("empty pedestrian trajectory")
    if not r_ped > 0:
        raise DecisionError("r_ped must be positive")
    times = np.arange(int(round(T_look / dt)) + 1) * dt
    query = times + elapsed
    centers = np.column_stack([np.interp(query, traj.times, traj.points[:, i]) for i in (0, 1)])
    return UnsafeTube(times, centers, float(r_ped))


def conflict_mask(tube: ReachTube, unsafe: UnsafeTube, footprint_radius: float) -> np.ndarray:
    if len(tube) != len(unsafe) or not np.allclose(tube.times, unsafe.times, atol=1e-9):
        raise DecisionError("vehicle tube and unsafe tube are on different time grids")
    lo, hi = tube.lo[:, :2], tube.hi[:, :2]
    nearest = np.clip(unsafe.centers, lo, hi)
    dist = np.linalg.norm(unsafe.centers - nearest, axis=1)
    # closed sets: touching counts as a conflict
    return dist <= unsafe.radius + footprint_radius


def check_conflict(tube: ReachTube, unsafe: UnsafeTube, footprint_radius: float) -> float | None:
    hit = conflict_mask(tube, unsafe, footprint_radius)
    if not hit.any():
        return None
    return float(tube.times[np.argmax(hit)])


def _first_conflict(tube, unsafe_sets, footprint_radius):
    times = [check_conflict(tube, u, footprint_radius) for u in unsafe_sets]
    hits = [t for t in times if t is not None]
    return (min(hits) if hits else None), [t is not None for t in times]


@dataclass(frozen=True)
class DecisionConfig:
    risk_level: str = "medium"
    T_look: float = 3.0
    r_ped: float = 0.5
    footprint_radius: float = 1.5
    check_brake: bool = True
    tube_dt: float | None = None  # defaults to the reach integration step

    def __post_init__(self):
        if self.risk_level not in LEVELS:
            raise DecisionError(f"unknown risk level {self.risk_level!r}")


def decide(center, ped_trajs: list, ctx: ReachContext, config: DecisionConfig = DecisionConfig(),
           confidence_radii: dict | None = None, tubes: dict[str, ReachTube] | None = None
           ) -> tuple[Decision, dict[str, ReachTube]]:
    """Choose trackspeed or brake for the vehicle estimate ``center``.

    ``ped_trajs`` holds ``(trajectory, elapsed)`` pairs or bare trajectories. Precomputed
    trackspeed ``tubes`` (at least ``T_look`` long) may be passed in to skip the simulation.
    Levels are checked largest first; a safe larger set proves every smaller one safe.
    """
    if tubes is None:
        tubes = nested_tubes(center, confidence_radii, Mode.TRACKSPEED, ctx, config.T_look,
                             config.tube_dt)
    tubes = {k: t.truncate(config.T_look) for k, t in tubes.items()}
    dt = tubes[LEVELS[0]].times[1] - tubes[LEVELS[0]].times[0]
    unsafe = []
    for item in ped_trajs:
        traj, elapsed = item if isinstance(item, tuple) else (item, 0.0)
        unsafe.append(pedestrian_unsafe_set(traj, config.r_ped, dt, config.T_look, elapsed))

    level_safe: dict[str, bool] = {}
    conflict_time, flags = None, [False] * len(unsafe)
    order = list(reversed(LEVELS))
    for i, level in enumerate(order):
        t_hit, hit_flags = _first_conflict(tubes[level], unsafe, config.footprint_radius)
        if t_hit is None:
            for smaller in order[i:]:
                level_safe[smaller] = True
            break
        level_safe[level] = False
        if level == config.risk_level:
            conflict_time, flags = t_hit, hit_flags
        if level == LEVELS[0]:
            break

    if level_safe[config.risk_level]:
        return Decision(Mode.TRACKSPEED, config.risk_level, None, False, flags, level_safe), tubes

    unavoidable = False
    if config.check_brake:
        radii = confidence_radii
        brake = nested_tubes(center, radii, Mode.BRAKE, ctx, config.T_look, config.tube_dt)
        t_brake, _ = _first_conflict(brake[config.risk_level], unsafe, config.footprint_radius)
        unavoidable = t_brake is not None
        tubes = {**tubes, **{f"brake_{k}": v for k, v in brake.items()}}
    return Decision(Mode.BRAKE, config.risk_level, conflict_time, unavoidable, flags,
                    level_safe), tubes

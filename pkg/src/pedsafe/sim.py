"""Multi-rate closed-loop simulation of the vehicle, pedestrian, estimator and monitor.

A 100 Hz master tick drives everything; the controller, decision module and intent
estimator run on integer subdivisions of it. Within a tick the order is: pedestrian
estimator, decision module, controller, then physics.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

from .config import ScenarioConfig
from .control import Mode, Path, PathController
from .decision import decide
from .intent import estimate_step, init_filter
from .pedestrian import PredictedTrajectory, StateSpaceModel, measure, rollout, step
from .reach import (LEVELS, ReachContext, ReachError, SensitivityFunction, VehicleSampler,
                    cell_half_widths, learn_sensitivity, nested_tubes)
from .vehicle import V, rk4_step, vehicle_state

WALLCLOCK_KEYS = ("compute_time", "wall_time")


class MissingArtifactError(FileNotFoundError):
    pass


def beta_filename(mode) -> str:
    return f"beta_{Mode(mode).value}.json"


def load_betas(beta_dir) -> dict:
    betas = {}
    for mode in Mode:
        p = FsPath(beta_dir) / beta_filename(mode)
        if not p.exists():
            raise MissingArtifactError(f"missing sensitivity file {p}")
        betas[mode] = SensitivityFunction.load(p)
    return betas


def sensitivity_sampler(cfg: ScenarioConfig) -> VehicleSampler:
    """Training-pair sampler for the scenario's path, sized to its widest partition cell."""
    H = cell_half_widths(cfg.confidence_radii()["high"], cfg.reach.m_cap)
    rates = cfg.rates
    return VehicleSampler(Path(cfg.path.waypoints), cfg.path.v_r, H, cfg.controller.gains(),
                          cfg.vehicle.params(), dt=1.0 / rates.base, control_dt=1.0 / rates.controller)


def train_betas(cfg: ScenarioConfig, K_pairs: int = 200, horizon: float = 5.0, seed: int = 0,
                modes=tuple(Mode)) -> dict:
    sampler = sensitivity_sampler(cfg)
    return {Mode(m): learn_sensitivity(m, sampler, K_pairs, horizon, rng_seed=seed) for m in modes}


def context_for(cfg: ScenarioConfig, betas: dict) -> ReachContext:
    rates = cfg.rates
    return ReachContext(Path(cfg.path.waypoints), cfg.path.v_r, betas, cfg.controller.gains(),
                        cfg.vehicle.params(), cfg.reach.m_cap, 1.0 / rates.base, 1.0 / rates.controller)


def _floor(a, nd=4):
    return (np.floor(np.asarray(a) * 10**nd) / 10**nd).tolist()


def _ceil(a, nd=4):
    return (np.ceil(np.asarray(a) * 10**nd) / 10**nd).tolist()


def _r(a, nd=6):
    return np.round(np.asarray(a, dtype=float), nd).tolist()


@dataclass
class RunLog:
    header: dict
    records: list = field(default_factory=list)

    def to_jsonl(self, path) -> None:
        FsPath(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            fh.write(json.dumps(self.header) + "\n")
            for rec in self.records:
                fh.write(json.dumps(rec) + "\n")

    def dumps(self, wallclock: bool = True) -> str:
        lines = [self.header] + self.records
        if not wallclock:
            lines = [_strip(r) for r in lines]
        return "\n".join(json.dumps(r) for r in lines)

    @classmethod
    def from_jsonl(cls, path) -> "RunLog":
        with open(path) as fh:
            lines = [json.loads(line) for line in fh if line.strip()]
        if not lines or lines[0].get("type") != "header":
            raise ValueError(f"{path} is not a run log")
        return cls(lines[0], lines[1:])

    @property
    def times(self) -> np.ndarray:
        return np.array([r["t"] for r in self.records])

    @property
    def vehicle(self) -> np.ndarray:
        return np.array([r["vehicle"] for r in self.records])

    @property
    def modes(self) -> list[str]:
        return [r["mode"] for r in self.records]

    def dm_records(self) -> list[dict]:
        return [r for r in self.records if "decision" in r]

    def brake_decisions(self) -> list[dict]:
        return [r["decision"] for r in self.dm_records() if r["decision"]["mode"] == Mode.BRAKE.value]

    def min_pedestrian_distance(self) -> float:
        d = [np.hypot(r["vehicle"][0] - r["pedestrian"][0], r["vehicle"][1] - r["pedestrian"][1])
             for r in self.records if r.get("pedestrian") is not None]
        return float(min(d)) if d else float("inf")


def _strip(rec):
    if isinstance(rec, dict):
        return {k: _strip(v) for k, v in rec.items() if k not in WALLCLOCK_KEYS}
    if isinstance(rec, list):
        return [_strip(v) for v in rec]
    return rec


def _tube_summary(tubes: dict, stride: int) -> dict:
    out = {}
    for lvl in LEVELS:
        t = tubes[lvl]
        out[lvl] = {"lo": _floor(t.lo[::stride, :2]), "hi": _ceil(t.hi[::stride, :2])}
    return out


def run_scenario(cfg: ScenarioConfig, betas: dict, seed: int | None = None) -> RunLog:
    seed = cfg.run.seed if seed is None else int(seed)
    for mode in Mode:
        if mode not in betas:
            raise MissingArtifactError(f"no sensitivity function for mode {mode.value}")
    if max(b.horizon for b in betas.values()) < cfg.reach.log_horizon - 1e-9:
        raise ReachError("sensitivity horizon shorter than the logged tube horizon")

    rates = cfg.rates
    base_dt = 1.0 / rates.base
    every = {k: rates.base // getattr(rates, k) for k in ("controller", "dm", "pie")}
    control_dt = every["controller"] * base_dt
    pie_dt = every["pie"] * base_dt

    ctx = context_for(cfg, betas)
    path, vparams, gains = ctx.path, ctx.params, ctx.gains
    dcfg = cfg.decision_config()
    radii = cfg.confidence_radii()

    env = cfg.environment.build()
    gpfa = cfg.gpfa_params()
    ped_model = cfg.pedestrian_model.model()
    if abs(ped_model.dt - pie_dt) > 1e-9:
        raise ValueError("pedestrian model dt must equal the intent-estimation period")
    fcfg = cfg.filter_config()

    ss = np.random.SeedSequence(seed)
    rng_est, rng_inp, rng_ped, rng_meas, rng_filt = (np.random.default_rng(s) for s in ss.spawn(5))
    filter_seed = int(rng_filt.integers(2**31))

    if cfg.vehicle.initial is not None:
        x = np.asarray(cfg.vehicle.initial, dtype=float)
    else:
        p0 = path.point_at(0.0)
        x = vehicle_state(p0[0], p0[1], 0.0, 0.0, float(path.heading_at(0.0)))
    ctrl = PathController(path, cfg.path.v_r, gains, vparams)
    est_std = np.asarray(cfg.noise.vehicle_estimate_std, dtype=float)
    inp_std = np.asarray(cfg.noise.vehicle_input_std, dtype=float)
    ped_noise = StateSpaceModel(ped_model.dt, tuple(cfg.pedestrian.behavior_noise), 0.0)

    ped_cfg = cfg.pedestrian
    ped_goal = env.goals[ped_cfg.intent]
    ped_prev = ped_next = np.array([*ped_cfg.start, 0.0, 0.0], dtype=float)
    ped_t_next = 0.0
    filt = None
    ped_trajs: list = []  # (trajectory, stamp)
    last = {"intent": None, "map_intent": None}
    u = np.zeros(2)

    header = {
        "type": "header",
        "schema_version": cfg.schema_version,
        "seed": seed,
        "config": cfg.to_dict(),
        "betas": {m.value: b.metadata for m, b in betas.items()},
        "tube_dt": base_dt * cfg.reach.log_stride,
    }
    log = RunLog(header)
    n_max = int(round(cfg.run.max_duration / base_dt))

    for k in range(n_max + 1):
        t = k * base_dt
        rec: dict = {"t": round(t, 6)}

        if ped_cfg.enabled:
            if k % every["pie"] == 0:
                # advance the true pedestrian one model step, interpolating in between
                ped_prev = ped_next
                ped_t_next = t + pie_dt
                arrived = np.linalg.norm(ped_prev[:2] - ped_goal) <= gpfa.goal_radius
                if t + 1e-9 >= ped_cfg.start_time and not arrived:
                    ped_next = step(ped_prev, ped_goal, ped_noise, env, gpfa, rng_seed=rng_ped)
                else:
                    ped_next = np.concatenate([ped_prev[:2], [0.0, 0.0]])

                y = measure(ped_prev, ped_model, rng_seed=rng_meas)
                if filt is None:
                    filt = init_filter(y, env, fcfg, rng_seed=filter_seed, time=t)
                    traj = PredictedTrajectory(y[None, :], np.zeros(1), None, False)
                    dist = filt.intent_distribution()
                else:
                    filt, dist, traj = estimate_step(filt, y, ped_model, env, gpfa, dt=pie_dt)
                trajs = [traj]
                if cfg.decision.intent_threshold is not None and traj.goal_index is not None:
                    for j, pj in enumerate(dist):
                        if j != traj.goal_index and pj >= cfg.decision.intent_threshold:
                            extra = rollout(y, env.goals[j], ped_model, env, gpfa,
                                            max_horizon=fcfg.rollout_horizon, velocity=None)
                            extra.goal_index = j
                            trajs.append(extra)
                ped_trajs = [(tr, t) for tr in trajs]
                last["intent"] = _r(dist)
                last["map_intent"] = traj.goal_index
                rec["measurement"] = _r(y)
                rec["intent"] = last["intent"]
                rec["map_intent"] = traj.goal_index
                rec["predicted"] = traj.to_dict()
            frac = (t - (ped_t_next - pie_dt)) / pie_dt
            ped_pos = ped_prev[:2] + frac * (ped_next[:2] - ped_prev[:2])
            rec["pedestrian"] = _r(ped_pos)

        if k % every["dm"] == 0:
            t0 = time.perf_counter()
            estimate = x + rng_est.normal(size=5) * est_std
            tubes = nested_tubes(estimate, radii, Mode.TRACKSPEED, ctx, cfg.reach.log_horizon)
            pairs = [(tr, t - stamp) for tr, stamp in ped_trajs]
            decision, all_tubes = decide(estimate, pairs, ctx, dcfg, radii, tubes=tubes)
            ctrl.set_mode(decision.mode)
            rec["estimate"] = _r(estimate)
            rec["decision"] = decision.to_dict()
            rec["tubes"] = _tube_summary(tubes, cfg.reach.log_stride)
            rec["compute_time"] = time.perf_counter() - t0

        if k % every["controller"] == 0:
            u = ctrl.control(x, control_dt) + rng_inp.normal(size=2) * inp_std
            rec["input"] = _r(u)

        rec["vehicle"] = _r(x)
        rec["mode"] = ctrl.mode.value
        log.records.append(rec)

        s, _ = path.project(x[:2])
        if s >= path.total_length:
            break
        x = rk4_step(x, u, base_dt, vparams)

    return log


def evaluate_accuracy(logs, T_look_grid=(3.0, 3.5, 4.0, 4.5, 5.0), min_runs: int = 20,
                      dm_stride: int = 1) -> dict:
    """Replay logged trackspeed tubes against the logged true vehicle positions.

    Only windows with a constant trackspeed mode that the run fully covers are scored.
    """
    import warnings

    logs = list(logs)
    if len(logs) < min_runs:
        warnings.warn(f"only {len(logs)} runs; at least {min_runs} recommended", stacklevel=2)
    grid = [float(T) for T in T_look_grid]
    hits = {lvl: np.zeros(len(grid)) for lvl in LEVELS}
    total = np.zeros(len(grid))
    windows = np.zeros(len(grid), dtype=int)
    for lg in logs:
        times = lg.times
        truth = lg.vehicle[:, :2]
        tracking = np.array([m == Mode.TRACKSPEED.value for m in lg.modes])
        # number of consecutive trackspeed ticks starting at each index
        run_len = np.zeros(len(tracking) + 1, dtype=int)
        for i in range(len(tracking) - 1, -1, -1):
            run_len[i] = run_len[i + 1] + 1 if tracking[i] else 0
        base_dt = times[1] - times[0]
        tube_dt = lg.header["tube_dt"]
        dm_idx = [i for i, r in enumerate(lg.records) if "tubes" in r][::dm_stride]
        for i in dm_idx:
            rec = lg.records[i]
            for g, T in enumerate(grid):
                n_ticks = int(round(T / base_dt))
                if run_len[i] < n_ticks + 1:
                    continue
                n_steps = int(round(T / tube_dt)) + 1
                idx = i + np.rint(np.arange(n_steps) * tube_dt / base_dt).astype(int)
                p = truth[idx]
                windows[g] += 1
                total[g] += n_steps
                for lvl in LEVELS:
                    lo = np.asarray(rec["tubes"][lvl]["lo"][:n_steps])
                    hi = np.asarray(rec["tubes"][lvl]["hi"][:n_steps])
                    hits[lvl][g] += np.sum(np.all((p >= lo) & (p <= hi), axis=1))
    with np.errstate(invalid="ignore"):
        table = {lvl: (hits[lvl] / total).tolist() for lvl in LEVELS}
    return {"T_look": grid, "accuracy": table, "windows": windows.tolist(), "runs": len(logs)}


def format_accuracy(report: dict) -> str:
    head = "T_look (s)  " + "  ".join(f"{T:7.1f}" for T in report["T_look"])
    rows = [head]
    for lvl in reversed(LEVELS):
        cells = "  ".join(f"{100 * a:7.3f}" for a in report["accuracy"][lvl])
        rows.append(f"{lvl:<10}  {cells}")
    return "\n".join(rows)


def bench_compute_time(ctx: ReachContext, center, radii, T_look_grid=(3.0, 3.5, 4.0, 4.5, 5.0),
                       repetitions: int = 20, mode=Mode.TRACKSPEED) -> dict:
    """Median wall-clock time of a single-level tube computation per look-ahead."""
    from .reach import InitialSet, compute_reach_tube

    grid = [float(T) for T in T_look_grid]
    theta = InitialSet(center, radii)
    compute_reach_tube(theta, mode, ctx, grid[0])  # warm caches
    samples = {T: [] for T in grid}
    for _ in range(repetitions):
        # round-robin so slow drifts in machine load hit every cell alike
        for T in grid:
            t0 = time.perf_counter()
            compute_reach_tube(theta, mode, ctx, T)
            samples[T].append(time.perf_counter() - t0)
    medians = np.array([np.median(samples[T]) for T in grid])
    slope, intercept = np.polyfit(grid, medians, 1)
    pred = slope * np.asarray(grid) + intercept
    ss_res = float(np.sum((medians - pred) ** 2))
    ss_tot = float(np.sum((medians - medians.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return {"T_look": grid, "median_s": medians.tolist(), "slope": float(slope),
            "intercept": float(intercept), "r2": r2, "repetitions": repetitions}

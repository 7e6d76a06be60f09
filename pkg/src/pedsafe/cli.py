"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 missing artifacts, 4 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import glob
import json
import logging
import sys
from pathlib import Path as FsPath

import numpy as np

from .config import ScenarioConfig, builtin_scenario, load_config, load_map
from .control import ConfigError, Mode
from .intent import FilterConfig, replay_track
from .pedestrian import GpfaParams, InvalidInputError
from .reach import InitialSet
from .sim import (
    MissingArtifactError,
    RunLog,
    bench_compute_time,
    context_for,
    evaluate_accuracy,
    format_accuracy,
    load_betas,
    run_scenario,
    train_betas,
)

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_RUNTIME = 0, 2, 3, 4

log = logging.getLogger("pedsafe")


def _scenario(arg: str | None) -> ScenarioConfig:
    """A config path, or the name of a shipped scenario."""
    if arg is None:
        return builtin_scenario("crossing")
    p = FsPath(arg)
    if p.exists():
        return load_config(p)
    if p.suffix == "" and arg in ("crossing", "parallel"):
        return builtin_scenario(arg)
    raise ConfigError(f"config file {arg} not found")


def _floats(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc
    if not vals:
        raise ConfigError("empty number list")
    return vals


def _write_json(path, obj) -> None:
    FsPath(path).parent.mkdir(parents=True, exist_ok=True)
    FsPath(path).write_text(json.dumps(obj, indent=2) + "\n")


def cmd_learn_sensitivity(args) -> int:
    cfg = _scenario(args.config)
    if args.horizon <= 0:
        raise ConfigError("horizon must be positive")
    mode = Mode(args.mode)
    beta = train_betas(cfg, args.pairs, args.horizon, args.seed, modes=(mode,))[mode]
    beta.save(args.out)
    log.info("wrote %s (%d bins)", args.out, len(beta.bin_edges) - 1)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _scenario(args.config)
    betas = load_betas(args.beta_dir)
    run = run_scenario(cfg, betas, args.seed)
    run.to_jsonl(args.out)
    brakes = run.brake_decisions()
    print(f"{cfg.name}: {len(run.records)} ticks, {len(brakes)} brake decisions, "
          f"min pedestrian distance {run.min_pedestrian_distance():.2f} m")
    return EXIT_OK


def cmd_evaluate_accuracy(args) -> int:
    paths = sorted(glob.glob(args.logs))
    if not paths:
        raise MissingArtifactError(f"no run logs match {args.logs}")
    grid = _floats(args.tlook)
    report = evaluate_accuracy((RunLog.from_jsonl(p) for p in paths), grid)
    report["logs"] = paths
    _write_json(args.out, report)
    print(format_accuracy(report))
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _scenario(args.config)
    grid = _floats(args.tlook)
    if args.reps < 1:
        raise ConfigError("reps must be >= 1")
    betas = load_betas(args.beta_dir)
    ctx = context_for(cfg, betas)
    if cfg.vehicle.initial is not None:
        center = np.asarray(cfg.vehicle.initial, dtype=float)
    else:
        p0 = ctx.path.point_at(0.0)
        center = np.array([p0[0], p0[1], 0.0, cfg.path.v_r, float(ctx.path.heading_at(0.0))])
    radii = cfg.confidence_radii()[cfg.reach.risk_level]
    InitialSet(center, radii, cfg.reach.risk_level)  # validates the set before timing
    report = bench_compute_time(ctx, center, radii, grid, args.reps)
    report["confidence"] = cfg.reach.risk_level
    _write_json(args.out, report)
    for T, m in zip(report["T_look"], report["median_s"]):
        print(f"T_look {T:4.1f} s  median {m * 1000:7.1f} ms")
    print(f"slope {report['slope'] * 1000:.1f} ms/s  R^2 {report['r2']:.3f}")
    return EXIT_OK


def _read_track(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"t", "x", "y"} <= set(reader.fieldnames):
            raise ConfigError(f"{path}: track needs a header with columns t,x,y")
        rows = [(float(r["t"]), float(r["x"]), float(r["y"])) for r in reader]
    if not rows:
        raise ConfigError(f"{path}: empty track")
    a = np.array(rows)
    return a[:, 0], a[:, 1:]


def cmd_predict_intent(args) -> int:
    if not FsPath(args.track).exists():
        raise MissingArtifactError(f"track file {args.track} not found")
    if not FsPath(args.map).exists():
        raise ConfigError(f"map file {args.map} not found")
    m = load_map(args.map)
    times, pos = _read_track(args.track)
    try:
        records = replay_track(times, pos, m.environment.build(), m.pedestrian_model.model(),
                               GpfaParams(**m.gpfa), FilterConfig(**m.filter), rng_seed=m.seed)
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from exc
    FsPath(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    final = records[-1]
    print(f"{len(records)} measurements, final MAP intent {final['map_intent']} "
          f"(p = {max(final['intent']):.3f})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pedsafe", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn-sensitivity", help="fit a sensitivity function offline")
    p.add_argument("--mode", required=True, choices=[m.value for m in Mode])
    p.add_argument("--pairs", type=int, default=200)
    p.add_argument("--horizon", type=float, default=5.0)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="scenario whose path and controller are used (default: crossing)")
    p.set_defaults(func=cmd_learn_sensitivity)

    p = sub.add_parser("run", help="simulate one scenario and write a JSON-lines log")
    p.add_argument("--config", required=True, help="scenario file or shipped scenario name")
    p.add_argument("--beta-dir", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate-accuracy", help="tube containment over logged runs")
    p.add_argument("--logs", required=True, help="glob of run logs")
    p.add_argument("--out", required=True)
    p.add_argument("--tlook", default="3.0,3.5,4.0,4.5,5.0")
    p.set_defaults(func=cmd_evaluate_accuracy)

    p = sub.add_parser("bench", help="time tube computation against look-ahead")
    p.add_argument("--beta-dir", required=True)
    p.add_argument("--tlook", default="3.0,3.5,4.0,4.5,5.0")
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("predict-intent", help="replay the intent filter over a recorded track")
    p.add_argument("--track", required=True, help="CSV with columns t,x,y")
    p.add_argument("--map", required=True, help="TOML with an [environment] section")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict_intent)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except Exception as exc:  # noqa: BLE001 - anything else is a runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

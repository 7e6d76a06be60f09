"""The closed loop end to end: a crossing pedestrian and a parallel one.

Both shipped scenarios are simulated with the same learned sensitivity functions. For the
crossing pedestrian the monitor should brake ahead of the closest approach; for the
pedestrian walking along the sidewalk it should never brake. Each run takes ~20 s.

Run: python3 demos/scenario_walkthrough.py
"""
from pedsafe.config import builtin_scenario
from pedsafe.sim import run_scenario, train_betas

betas = train_betas(builtin_scenario("crossing"), K_pairs=200, horizon=5.0, seed=0)

for name in ("crossing", "parallel"):
    cfg = builtin_scenario(name)
    log = run_scenario(cfg, betas, seed=0)
    dm = log.dm_records()
    brakes = [r for r in dm if r["decision"]["mode"] == "brake"]
    print(f"\n{name}: {log.records[-1]['t']:.1f} s simulated, {len(dm)} monitor ticks, "
          f"{len(brakes)} brake decisions")
    print(f"  closest approach {log.min_pedestrian_distance():.2f} m "
          f"(footprint + pedestrian radius = {cfg.decision.footprint_radius + cfg.decision.r_ped} m)")
    for r in brakes[:3]:
        d = r["decision"]
        print(f"  t={r['t']:5.1f}  conflict in {d['first_conflict_time']:.2f} s, "
              f"levels safe {d['level_safe']}, unavoidable {d['unavoidable']}")
    # MAP intent string, one character per estimator tick
    maps = "".join(str(r["map_intent"]) if r["map_intent"] is not None else "-"
                   for r in log.records if "map_intent" in r)
    print(f"  MAP intent per 0.2 s: {maps[:60]}")

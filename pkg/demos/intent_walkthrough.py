"""Watching the intent filter make up its mind.

A pedestrian starts at the origin with three possible goals. We simulate one walk
towards the third goal, feed noisy position fixes to the particle filter at 5 Hz and
print how the posterior over goals evolves, together with the predicted path.

Run: python3 demos/intent_walkthrough.py
"""
import logging

import numpy as np

from pedsafe.intent import FilterConfig, estimate_step, init_filter
from pedsafe.pedestrian import EnvironmentMap, GpfaParams, Obstacle, StateSpaceModel, measure, step

logging.basicConfig(level=logging.ERROR)

goals = np.array([[10.0, 0.0], [-5.0, 8.66], [-5.0, -8.66]])
env = EnvironmentMap(goals, [Obstacle((-1.0, -4.0))])  # a bollard beside the true route
params = GpfaParams()
model = StateSpaceModel()  # dt 0.2 s, measurement noise 0.25 m

# the "real" walker gets a little velocity noise so it is not the filter's own model
walker = StateSpaceModel(process_noise_std=(0.0, 0.05), measurement_noise_std=0.25)
rng = np.random.default_rng(0)
true_goal = 2

truth = np.zeros(4)
filt = None
print(" t [s]   p(goal 0)  p(goal 1)  p(goal 2)   MAP  predicted end point")
for k in range(51):
    y = measure(truth, walker, rng)
    if filt is None:
        # the first fix only seeds the particles; every goal is equally likely
        filt = init_filter(y, env, FilterConfig(), rng_seed=0)
        dist, end = filt.intent_distribution(), y
        best = "-"
    else:
        filt, dist, traj = estimate_step(filt, y, model, env, params)
        best, end = traj.goal_index, traj.points[-1]
    if k % 4 == 0:
        print(f"{k * model.dt:5.1f}   {dist[0]:9.3f}  {dist[1]:9.3f}  {dist[2]:9.3f}   {best!s:>3}  "
              f"({end[0]:6.2f}, {end[1]:6.2f})")
    truth = step(truth, goals[true_goal], walker, env, params, rng)

print(f"\ntrue goal {true_goal} at {goals[true_goal]}, walker ended at {truth[:2].round(2)}")

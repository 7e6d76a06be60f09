import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pedsafe.control import ConfigError, Mode
from pedsafe.reach import (
    DEFAULT_RADII,
    LEVELS,
    InitialSet,
    ReachContext,
    ReachError,
    SensitivityFunction,
    compute_reach_tube,
    containment_accuracy,
    fit_piecewise_exponential,
    learn_sensitivity,
    nested_tubes,
    partition_grid,
    simulate_closed_loop,
)
from pedsafe.vehicle import vehicle_state


class DecaySampler:
    """x' = -rate * x in each dimension, solved exactly."""

    dt = 0.01

    def __init__(self, rate=1.0, dim=2):
        self.rate, self.dim = rate, dim

    def sample_pairs(self, rng, k):
        xa = rng.uniform(-1, 1, (k, self.dim))
        return xa, xa + rng.uniform(0.01, 0.1, (k, self.dim))

    def simulate(self, states, mode, horizon):
        t = np.arange(int(round(horizon / self.dt)) + 1) * self.dt
        return states[None] * np.exp(-self.rate * t)[:, None, None]

    def difference(self, a, b):
        return b - a


def test_learns_decay_rate():
    beta = learn_sensitivity(Mode.TRACKSPEED, DecaySampler(1.0), K_pairs=40, horizon=2.0)
    np.testing.assert_allclose(beta.gammas, -1.0, rtol=0.1)


def test_learned_bound_covers_training_pairs():
    sampler = DecaySampler(0.5)
    beta = learn_sensitivity(Mode.BRAKE, sampler, K_pairs=40, horizon=2.0, rng_seed=4)
    rng = np.random.default_rng(4)
    xa, xb = sampler.sample_pairs(rng, 40)
    t = np.arange(201) * sampler.dt
    d0 = np.abs(xb - xa)
    traj = sampler.simulate(np.concatenate([xa, xb]), Mode.BRAKE, 2.0)
    diff = np.abs(traj[:, 40:] - traj[:, :40])
    assert np.all(diff <= beta(d0, t) * (1 + 1e-9))


def test_beta_zero_delta_is_zero(betas):
    t = np.linspace(0, 5, 51)
    for b in betas.values():
        out = b(np.zeros(5), t)
        assert np.all(out == 0.0)
        np.testing.assert_array_equal(b(np.ones(5), [0.0])[0], np.ones(5))


def test_fit_piecewise_by_hand():
    times = np.arange(0, 1.01, 0.25)
    # slope 2 on the first half, -1 on the second, continuous
    logr = np.where(times <= 0.5, 2 * times, 1.0 - (times - 0.5))[:, None]
    g = fit_piecewise_exponential(times, logr, np.array([0.0, 0.5, 1.0]))
    np.testing.assert_allclose(g, [2.0, -1.0], atol=1e-12)


def test_too_few_pairs_is_config_error():
    with pytest.raises(ConfigError):
        learn_sensitivity(Mode.TRACKSPEED, DecaySampler(), K_pairs=10)


def test_save_load_roundtrip(tmp_path, betas):
    b = betas[Mode.TRACKSPEED]
    p = tmp_path / "beta.json"
    b.save(p)
    back = SensitivityFunction.load(p)
    np.testing.assert_array_equal(back.gammas, b.gammas)
    np.testing.assert_array_equal(back.bin_edges, b.bin_edges)
    assert back.mode == Mode.TRACKSPEED
    assert back.metadata["pairs"] == 200
    d = json.loads(p.read_text())
    d["version"] = 99
    p.write_text(json.dumps(d))
    with pytest.raises(ValueError):
        SensitivityFunction.load(p)


def test_partition_grid_cap():
    counts, offsets = partition_grid(DEFAULT_RADII["high"], 8)
    assert np.prod(counts) == 8 == len(offsets)
    assert sorted(counts.tolist(), reverse=True)[:2] == [4, 2]
    assert np.all(np.abs(offsets) < 1)
    counts, offsets = partition_grid(np.zeros(5), 8)
    assert len(offsets) == 1


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=5, max_size=5), st.integers(1, 12))
def test_partition_cells_cover_the_box(radii, m_cap):
    radii = np.asarray(radii)
    counts, offsets = partition_grid(radii, m_cap)
    assert len(offsets) <= m_cap
    half = radii / counts
    lo = (offsets * radii - half).min(axis=0)
    hi = (offsets * radii + half).max(axis=0)
    np.testing.assert_allclose(lo, -radii, atol=1e-12)
    np.testing.assert_allclose(hi, radii, atol=1e-12)


def test_zero_radius_tube_equals_center_trace(ctx):
    center = vehicle_state(2.0, 0.1, 0.0, 2.3, 0.02)
    tube = compute_reach_tube(InitialSet(center, np.zeros(5)), Mode.TRACKSPEED, ctx, 3.0)
    trace = simulate_closed_loop(center[None], ctx.path, ctx.v_r, Mode.TRACKSPEED, 3.0,
                                 ctx.gains, ctx.params)[:, 0]
    np.testing.assert_array_equal(tube.lo, trace)
    np.testing.assert_array_equal(tube.hi, trace)


def test_nested_levels(ctx):
    tubes = nested_tubes(vehicle_state(5.0, -0.2, 0.01, 2.5, 0.0), None, Mode.TRACKSPEED, ctx, 3.0)
    for small, big in zip(LEVELS, LEVELS[1:]):
        assert tubes[big].contains(tubes[small])
    assert len(tubes["low"]) == 301


def test_equal_radii_give_identical_tubes(ctx):
    r = np.asarray(DEFAULT_RADII["medium"])
    center = vehicle_state(5.0, 0.0, 0.0, 2.5, 0.0)
    tubes = nested_tubes(center, {lvl: r for lvl in LEVELS}, Mode.BRAKE, ctx, 2.0)
    np.testing.assert_array_equal(tubes["low"].lo, tubes["high"].lo)
    np.testing.assert_array_equal(tubes["low"].hi, tubes["high"].hi)


def test_tube_contains_its_initial_set(ctx):
    center = vehicle_state(3.0, 0.2, 0.0, 2.0, 0.05)
    r = np.asarray(DEFAULT_RADII["medium"])
    tube = compute_reach_tube(InitialSet(center, r), Mode.TRACKSPEED, ctx, 1.0)
    assert np.all(tube.lo[0] <= center - r + 1e-12)
    assert np.all(tube.hi[0] >= center + r - 1e-12)


def test_samples_stay_in_tube(ctx):
    center = vehicle_state(4.0, 0.1, 0.0, 2.4, 0.01)
    r = np.asarray(DEFAULT_RADII["medium"])
    tube = compute_reach_tube(InitialSet(center, r), Mode.TRACKSPEED, ctx, 3.0)
    rng = np.random.default_rng(0)
    x0 = center + rng.uniform(-1, 1, (300, 5)) * r
    truth = simulate_closed_loop(x0, ctx.path, ctx.v_r, Mode.TRACKSPEED, 3.0, ctx.gains, ctx.params)
    acc = np.mean([containment_accuracy(tube, tube.times, truth[:, i]) for i in range(300)])
    assert acc >= 0.92


def test_horizon_and_mode_errors(ctx, betas):
    theta = InitialSet(vehicle_state(v=2.0), DEFAULT_RADII["low"])
    with pytest.raises(ReachError):
        compute_reach_tube(theta, Mode.TRACKSPEED, ctx, 6.0)
    partial = ReachContext(ctx.path, ctx.v_r, {Mode.TRACKSPEED: betas[Mode.TRACKSPEED]})
    with pytest.raises(ReachError):
        compute_reach_tube(theta, Mode.BRAKE, partial, 1.0)
    swapped = ReachContext(ctx.path, ctx.v_r, {Mode.BRAKE: betas[Mode.TRACKSPEED]})
    with pytest.raises(ReachError):
        compute_reach_tube(theta, Mode.BRAKE, swapped, 1.0)


def test_tube_dt_must_divide(ctx):
    theta = InitialSet(vehicle_state(v=2.0), DEFAULT_RADII["low"])
    tube = compute_reach_tube(theta, Mode.TRACKSPEED, ctx, 1.0, dt=0.1)
    np.testing.assert_allclose(tube.times, np.arange(11) * 0.1)
    with pytest.raises(ValueError):
        compute_reach_tube(theta, Mode.TRACKSPEED, ctx, 1.0, dt=0.015)


def test_containment_needs_overlap(ctx):
    theta = InitialSet(vehicle_state(v=2.0), DEFAULT_RADII["low"])
    tube = compute_reach_tube(theta, Mode.TRACKSPEED, ctx, 1.0)
    with pytest.raises(ReachError):
        containment_accuracy(tube, [10.0, 11.0], np.zeros((2, 5)))

import math

import numpy as np
import pytest

from conftest import make_config, zero_coefficients
from spdeavg.coupled import (energy_residual, integrate_auxiliary,
                             integrate_full, run_batch)
from spdeavg.errors import BlowupError, ConfigurationError, UsageError
from spdeavg.model import CoefficientSet, make_fixture
from spdeavg.noise import NoiseStream
from spdeavg.spectral import eigenvalues
from spdeavg.stats import fit_loglog_slope

PI = math.pi


def streams(seed=0, replica=0):
    return NoiseStream(seed, (replica, 1)), NoiseStream(seed, (replica, 2))


def replica_pairs(seed, count):
    return [streams(seed, r) for r in range(count)]


# --- homogeneous dynamics ---------------------------------------------------

def test_zero_coefficients_pure_rotation():
    # quarter turn of mode 1: position 1 -> 0, velocity 0 -> -1
    n_steps = 2000
    cfg = make_config(zero_coefficients(), n_modes=4, t_final=PI / 2,
                      dt=PI / 2 / n_steps, epsilon=1.0, stride=n_steps)
    samples = integrate_full(cfg, streams())
    final = samples[-1]
    assert final.slow.position.coeffs[0] == pytest.approx(0.0, abs=1e-12)
    assert final.slow.velocity.coeffs[0] == pytest.approx(-1.0, rel=1e-12)


def test_zero_coefficients_energy_residual_tiny():
    cfg = make_config(zero_coefficients(), n_modes=8, t_final=1.0, dt=1e-3,
                      epsilon=0.1, y_amp=1.0, stride=100)
    samples = integrate_full(cfg, streams())
    slow_res, fast_res = energy_residual(samples, cfg)
    assert np.max(slow_res) <= 1e-10
    assert np.max(fast_res) <= 1e-10


def test_fast_heat_decay_exact():
    # g = b = 0: fast mode 1 decays by exp(-alpha_1 t/eps) exactly
    cfg = make_config(zero_coefficients(), n_modes=4, t_final=0.5, dt=1e-3,
                      epsilon=1.0, x_amp=0.0, y_amp=1.0, stride=500)
    samples = integrate_full(cfg, streams())
    expected = math.exp(-0.5)
    assert samples[-1].fast.coeffs[0] == pytest.approx(expected, rel=1e-12)


# --- determinism and batching ----------------------------------------------

def test_identical_streams_reproduce_bit_for_bit(linear_fixture):
    cfg = make_config(linear_fixture, t_final=0.2, stride=50)
    a = integrate_full(cfg, streams(seed=5))
    b = integrate_full(cfg, streams(seed=5))
    for sa, sb in zip(a, b):
        np.testing.assert_array_equal(sa.slow.position.coeffs, sb.slow.position.coeffs)
        np.testing.assert_array_equal(sa.fast.coeffs, sb.fast.coeffs)


def test_batched_rows_match_single_runs(linear_fixture):
    cfg = make_config(linear_fixture, t_final=0.1, stride=100)
    batch = run_batch(cfg, replica_pairs(3, 4), record_steps=[cfg.n_steps])
    for r in range(4):
        single = run_batch(cfg, [streams(3, r)], record_steps=[cfg.n_steps])
        np.testing.assert_array_equal(batch.pos[0, r], single.pos[0, 0])
        np.testing.assert_array_equal(batch.vel[0, r], single.vel[0, 0])
        np.testing.assert_array_equal(batch.fast[0, r], single.fast[0, 0])


def test_batched_nonlinear_rows_match_single_runs(bounded_fixture):
    cfg = make_config(bounded_fixture, t_final=0.05, stride=50)
    batch = run_batch(cfg, replica_pairs(9, 3), record_steps=[cfg.n_steps])
    for r in range(3):
        single = run_batch(cfg, [streams(9, r)], record_steps=[cfg.n_steps])
        np.testing.assert_array_equal(batch.pos[0, r], single.pos[0, 0])
        np.testing.assert_array_equal(batch.fast[0, r], single.fast[0, 0])


def test_mismatched_stream_tags_rejected(linear_fixture):
    cfg = make_config(linear_fixture, t_final=0.1)
    with pytest.raises(ConfigurationError):
        integrate_full(cfg, (NoiseStream(0, (0, 2)), NoiseStream(0, (0, 1))))
    with pytest.raises(ConfigurationError):
        integrate_full(cfg, (NoiseStream(0, (0, 1)), NoiseStream(0, (1, 2))))


# --- fast component tracks the quasi-stationary mean ------------------------

def test_fast_mode_tracks_moving_mean(linear_fixture):
    gamma = 0.5
    cfg = make_config(linear_fixture, t_final=1.0, dt=1e-3, epsilon=1e-2,
                      track_energy=False)
    m = 200
    half = cfg.n_steps // 2
    record = list(range(half, cfg.n_steps + 1))
    res = run_batch(cfg, replica_pairs(17, m), record_steps=record)
    alpha1 = eigenvalues(cfg.n_modes, PI)[0]
    target = res.pos[:, :, 0] / (alpha1 + gamma)     # moving mean of mode 1
    disc = np.mean(res.fast[:, :, 0] - target, axis=0)  # per-replica time avg
    mean = disc.mean()
    stderr = disc.std(ddof=1) / math.sqrt(m)
    assert abs(mean) <= 3 * stderr + 5e-3 * cfg.epsilon / 1e-2


# --- time regularity --------------------------------------------------------

@pytest.mark.parametrize("epsilon", [0.1, 0.01])
def test_time_regularity_slope(linear_fixture, epsilon):
    cfg = make_config(linear_fixture, t_final=0.6, dt=1e-3, epsilon=epsilon,
                      track_energy=False)
    h_values = [0.02, 0.04, 0.08]
    t0 = 0.5
    steps = [round(t0 / cfg.dt)] + [round((t0 + h) / cfg.dt) for h in h_values]
    res = run_batch(cfg, replica_pairs(23, 128), record_steps=steps)
    gaps = [float(np.mean(np.sum((res.pos[1 + i] - res.pos[0]) ** 2, axis=-1)))
            for i in range(len(h_values))]
    slope = fit_loglog_slope(h_values, gaps).slope
    assert 1.7 <= slope <= 2.3


# --- auxiliary block-frozen pair ---------------------------------------------

def test_auxiliary_requires_divisible_block(linear_fixture):
    cfg = make_config(linear_fixture, t_final=0.2)
    with pytest.raises(ConfigurationError):
        integrate_auxiliary(cfg, 0.0015, streams())


def test_auxiliary_gap_grows_with_block(linear_fixture):
    cfg = make_config(linear_fixture, t_final=0.5, dt=1e-3, epsilon=1e-2,
                      track_energy=False)
    gaps = {}
    for delta in (cfg.dt, 8 * cfg.dt):
        res = run_batch(cfg, replica_pairs(31, 64),
                        record_steps=[cfg.n_steps],
                        delta_steps=round(delta / cfg.dt))
        gaps[delta] = float(np.mean(np.sum((res.fast[0] - res.hat_fast[0]) ** 2,
                                           axis=-1)))
    assert gaps[cfg.dt] < gaps[8 * cfg.dt]


def test_auxiliary_shares_noise_with_full(linear_fixture):
    # with delta = horizon the frozen argument is X_0 for the whole run;
    # the pair still sees identical increments, so their gap stays small
    cfg = make_config(linear_fixture, t_final=0.1, dt=1e-3, track_energy=False)
    aux, full = integrate_auxiliary(cfg, 0.1, streams(41))
    assert aux[-1].t == full[-1].t
    gap = np.sum((aux[-1].fast.coeffs - full[-1].fast.coeffs) ** 2)
    assert gap < 0.05 * max(1.0, np.sum(full[-1].fast.coeffs ** 2))


def test_block_freeze_slopes(linear_fixture):
    # the gap bound is uniform in t; measure its sup over block breakpoints,
    # where the full-block freeze lag applies for every delta
    cfg = make_config(linear_fixture, t_final=1.0, dt=1e-3, epsilon=1e-2,
                      track_energy=False)
    alphas = eigenvalues(cfg.n_modes, PI)
    deltas = [0.02, 0.04, 0.08]
    fast_gap, slow_gap, vel_gap = [], [], []
    for delta in deltas:
        m = round(delta / cfg.dt)
        record = list(range(m, cfg.n_steps + 1, m))
        res = run_batch(cfg, replica_pairs(47, 128),
                        record_steps=record, delta_steps=m)
        fast_gap.append(np.max(np.mean(
            np.sum((res.fast - res.hat_fast) ** 2, -1), -1)))
        slow_gap.append(np.max(np.mean(
            np.sum(alphas * (res.pos - res.hat_pos) ** 2, -1), -1)))
        vel_gap.append(np.max(np.mean(
            np.sum((res.vel - res.hat_vel) ** 2, -1), -1)))
    assert 1.6 <= fit_loglog_slope(deltas, fast_gap).slope <= 2.4
    assert 1.6 <= fit_loglog_slope(deltas, slow_gap).slope <= 2.4
    assert 1.6 <= fit_loglog_slope(deltas, vel_gap).slope <= 2.4


# --- energy identities -------------------------------------------------------

def test_energy_residual_shrinks_with_dt(linear_fixture):
    residuals = []
    for dt in (4e-3, 2e-3, 1e-3):
        cfg = make_config(linear_fixture, n_modes=8, t_final=0.5, dt=dt,
                          epsilon=0.1, stride=25)
        res = run_batch(cfg, replica_pairs(53, 32))
        worst = _mean_max_residuals(cfg, res)
        residuals.append(worst)
    assert residuals[0] / residuals[1] >= 1.5
    assert residuals[1] / residuals[2] >= 1.5


def _mean_max_residuals(cfg, res):
    alphas = eigenvalues(cfg.n_modes, cfg.domain_length)
    lhs_slow = np.sum(alphas * res.pos**2 + res.vel**2, axis=-1)
    rhs_slow = (lhs_slow[0] + res.energy["slow_drift"] + res.energy["slow_mart"]
                + res.energy["slow_qv"])
    rel_slow = np.abs(lhs_slow - rhs_slow) / (1.0 + np.maximum(np.abs(lhs_slow),
                                                               np.abs(rhs_slow)))
    lhs_fast = np.sum(res.fast**2, axis=-1)
    rhs_fast = (lhs_fast[0] + res.energy["fast_diss"] + res.energy["fast_drift"]
                + res.energy["fast_mart"] + res.energy["fast_qv"])
    rel_fast = np.abs(lhs_fast - rhs_fast) / (1.0 + np.maximum(np.abs(lhs_fast),
                                                               np.abs(rhs_fast)))
    return float(np.mean(np.max(rel_slow, axis=0) + np.max(rel_fast, axis=0)))


def test_fast_norm_nonnegative_and_finite(linear_fixture):
    cfg = make_config(linear_fixture, t_final=0.3, stride=30)
    samples = integrate_full(cfg, streams(61))
    for s in samples:
        assert s.fast.norm() ** 2 >= 0.0
        assert np.isfinite(s.fast.norm())
    _, fast_res = energy_residual(samples, cfg)
    assert np.all(np.isfinite(fast_res))


def test_energy_residual_requires_tracking(linear_fixture):
    cfg = make_config(linear_fixture, t_final=0.1, track_energy=False)
    samples = integrate_full(cfg, streams())
    with pytest.raises(UsageError):
        energy_residual(samples, cfg)


# --- blowup -------------------------------------------------------------------

def test_blowup_reported_with_step_index():
    import dataclasses
    base = make_fixture("linear_ou", 8, PI)
    runaway = dataclasses.replace(base, g=lambda xc, yc: 50.0 * yc,
                                  g_fast_lipschitz=50.0)
    cfg = make_config(runaway, n_modes=8, t_final=1.0, dt=1e-3, epsilon=1e-2,
                      y_amp=1.0, track_energy=False)
    with pytest.warns(UserWarning):
        with pytest.raises(BlowupError) as err:
            integrate_full(cfg, streams())
    assert err.value.step >= 0


def test_apriori_bounds_stay_moderate(linear_fixture):
    cfg = make_config(linear_fixture, t_final=1.0, dt=1e-3, epsilon=1e-2,
                      track_energy=False)
    grid = sorted(set(np.linspace(0, cfg.n_steps, 17).round().astype(int)))
    res = run_batch(cfg, replica_pairs(67, 64), record_steps=grid)
    alphas = eigenvalues(cfg.n_modes, PI)
    slow = np.mean(np.sum(alphas * res.pos**2 + res.vel**2, axis=-1), axis=-1)
    fast = np.mean(np.sum(res.fast**2, axis=-1), axis=-1)
    e0 = 1.0  # initial slow energy: unit mode-1 position
    assert np.max(slow) < 10.0 * (1.0 + e0)
    assert np.max(fast) < 10.0 * (1.0 + e0)

"""Experiment orchestration: rate studies, bound checks, CSV emission.

The rate study integrates, for every epsilon on a grid and every replica,
the coupled system and the averaged system on one shared slow-noise path,
records the squared H1 (+) H error of the slow component at the final
time, and fits the log-log slope of the mean squared error against
epsilon.  The bound checks re-run the block-frozen, time-regularity,
a-priori, moment, mixing and drift-relaxation measurements that the
solvers' contracts promise, each reported as (measured, band, verdict).

Determinism contract: a (config, seed) pair fixes every emitted byte.
Replicas own pre-assigned streams keyed by their index, worker results are
re-assembled in index order, and all reductions run over arrays in that
fixed order, so the parallelism degree cannot change any output.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .averaged import ClosedFormDrift, MonteCarloDrift, run_averaged_batch
from .config import build_coefficients, build_noise, build_system_config
from .coupled import SystemConfig, run_batch
from .errors import ConfigurationError
from .frozen import estimate_mixing, run_frozen_batch
from .model import dissipativity_margin
from .noise import ArrayStream, NoiseStream
from .spectral import SpectralField, eigenvalues
from .stats import fit_loglog_slope, fit_semilog_slope

__all__ = [
    "RateRow",
    "RateReport",
    "LemmaCheck",
    "run_rate_study",
    "run_lemma_checks",
    "write_csv",
    "format_value",
]

_REPLICA_CHUNK = 64


# --- rate study ------------------------------------------------------------

@dataclass(frozen=True)
class RateRow:
    epsilon: float
    delta: float          # recorded block-length rule sqrt(epsilon)
    dt: float
    replicas: int
    aborted: int
    mse_mean: float
    mse_stderr: float


@dataclass
class RateReport:
    rows: list
    slope: float
    ci_low: float
    ci_high: float
    flags: list = dataclass_field(default_factory=list)
    invalid: bool = False

    @property
    def epsilon_grid(self):
        return [r.epsilon for r in self.rows]


def _make_drift(cfg: dict, seed: int):
    coeffs = build_coefficients(cfg)
    kind = cfg["rate.drift"]
    if kind == "closed_form":
        return ClosedFormDrift(coeffs, cfg["domain.modes"], cfg["domain.length"])
    if kind == "monte_carlo":
        burn = cfg["drift.burn_in"] or None
        horizon = cfg["drift.horizon"] or None
        return MonteCarloDrift(coeffs, build_noise(cfg), cfg["domain.length"],
                               seed, burn_in=burn, horizon=horizon,
                               dt=cfg["drift.dt"])
    raise ConfigurationError(f"unknown drift provider '{kind}'")


def _grid_dt(t_final: float, dt_target: float) -> float:
    n = max(1, math.ceil(t_final / dt_target - 1e-12))
    return t_final / n


def _slow_error_sq(alphas, dpos, dvel):
    return np.sum(alphas * dpos**2 + dvel**2, axis=-1)


def _error_chunk(sys_cfg: SystemConfig, drift, seed: int, r0: int, r1: int,
                 stream_tables=None):
    """Squared slow-component errors at the final time for replicas [r0, r1)."""
    if stream_tables is None:
        pairs = [(NoiseStream(seed, (r, 1)), NoiseStream(seed, (r, 2)))
                 for r in range(r0, r1)]
        w1_replay = [NoiseStream(seed, (r, 1)) for r in range(r0, r1)]
    else:
        pairs = [(ArrayStream(t1, (r, 1)), ArrayStream(t2, (r, 2)))
                 for r, (t1, t2) in zip(range(r0, r1), stream_tables)]
        w1_replay = [ArrayStream(t1, (r, 1))
                     for r, (t1, _) in zip(range(r0, r1), stream_tables)]
    terminal = [sys_cfg.n_steps]
    full = run_batch(sys_cfg, pairs, record_steps=terminal)
    avg = run_averaged_batch(sys_cfg, drift, w1_replay, record_steps=terminal)
    alphas = eigenvalues(sys_cfg.n_modes, sys_cfg.domain_length)
    err = _slow_error_sq(alphas, full.pos[0] - avg.pos[0], full.vel[0] - avg.vel[0])
    return err, full.aborted | avg.aborted


def _epsilon_errors(cfg: dict, drift, seed: int, epsilon: float, dt: float,
                    replicas: int, pool: ThreadPoolExecutor | None):
    sys_cfg = build_system_config(cfg, epsilon=epsilon, dt=dt, track_energy=False)
    spans = [(r0, min(r0 + _REPLICA_CHUNK, replicas))
             for r0 in range(0, replicas, _REPLICA_CHUNK)]
    if pool is None:
        parts = [_error_chunk(sys_cfg, drift, seed, r0, r1) for r0, r1 in spans]
    else:
        futures = [pool.submit(_error_chunk, sys_cfg, drift, seed, r0, r1)
                   for r0, r1 in spans]
        parts = [f.result() for f in futures]
    errors = np.concatenate([p[0] for p in parts])
    aborted = np.concatenate([p[1] for p in parts])
    return errors, aborted


def _dt_self_check(cfg: dict, drift, seed: int, epsilon: float, dt: float,
                   replicas: int) -> float | None:
    """Relative change of the mean squared error under dt halving.

    Both step sizes are driven by one Brownian path per replica (fine-grid
    draws tabulated once, coarse increments formed by pairwise sums), so
    the comparison isolates the discretization bias from Monte Carlo noise.
    Returns None when substepping makes the coupling inapplicable.
    """
    base = build_system_config(cfg, epsilon=epsilon, dt=dt, track_energy=False)
    half = build_system_config(cfg, epsilon=epsilon, dt=dt / 2.0, track_energy=False)
    if base.n_substeps != 1 or half.n_substeps != 1 or base.wave_noise != "endpoint":
        return None
    n = base.n_modes
    n_fine = half.n_steps
    m = min(_REPLICA_CHUNK, replicas)
    fine_tables, coarse_tables = [], []
    for r in range(m):
        f1 = NoiseStream(seed, (r, 1, 101)).normals((n_fine, n))
        f2 = NoiseStream(seed, (r, 2, 101)).normals((n_fine, n))
        c1 = (f1[0::2] + f1[1::2]) / math.sqrt(2.0)
        c2 = (f2[0::2] + f2[1::2]) / math.sqrt(2.0)
        fine_tables.append((f1, f2))
        coarse_tables.append((c1, c2))
    err_base, ab_b = _error_chunk(base, drift, seed, 0, m, stream_tables=coarse_tables)
    err_half, ab_h = _error_chunk(half, drift, seed, 0, m, stream_tables=fine_tables)
    ok = ~(ab_b | ab_h)
    if not ok.any():
        return None
    mse_b, mse_h = err_base[ok].mean(), err_half[ok].mean()
    if mse_b == 0:
        return 0.0
    return abs(mse_h - mse_b) / mse_b


def run_rate_study(cfg: dict, seed: int = 0, threads: int = 1) -> RateReport:
    """Strong-error convergence study of the slow component.

    For each epsilon: pick dt = min(dt_base, epsilon/10) snapped to the
    horizon, integrate coupled and averaged systems per replica on shared
    slow noise, and record the squared error at the final time.  Fits the
    log-log slope with a 95% confidence interval and runs a dt-halving
    self-check on the smallest epsilon.
    """
    epsilons = sorted(cfg["rate.epsilons"], reverse=True)
    if len(epsilons) < 4:
        raise ConfigurationError("the epsilon grid needs at least 4 points")
    replicas = cfg["rate.replicas"]
    dt_base = cfg["rate.dt_base"]
    t_final = cfg["sim.t_final"]
    drift = _make_drift(cfg, seed)

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    rows, flags = [], []
    total_aborted = 0
    try:
        for eps in epsilons:
            dt = _grid_dt(t_final, min(dt_base, eps / 10.0))
            errors, aborted = _epsilon_errors(cfg, drift, seed, eps, dt,
                                              replicas, pool)
            valid = errors[~aborted]
            n_ab = int(aborted.sum())
            total_aborted += n_ab
            if valid.size < 2:
                raise ConfigurationError(
                    f"all replicas aborted at epsilon={eps}")
            rows.append(RateRow(
                epsilon=eps, delta=math.sqrt(eps), dt=dt,
                replicas=replicas, aborted=n_ab,
                mse_mean=float(valid.mean()),
                mse_stderr=float(valid.std(ddof=1) / math.sqrt(valid.size)),
            ))
        change = _dt_self_check(cfg, drift, seed, epsilons[-1],
                                rows[-1].dt, replicas)
        if change is None:
            flags.append("dt_check_skipped")
        elif change >= 0.10:
            flags.append(f"dt_sensitive:{change:.3g}")
    finally:
        if pool is not None:
            pool.shutdown()

    fit = fit_loglog_slope([r.epsilon for r in rows], [r.mse_mean for r in rows])
    invalid = total_aborted > 0.01 * replicas * len(epsilons)
    if invalid:
        flags.append("abort_fraction_above_1pct")
    return RateReport(rows=rows, slope=fit.slope, ci_low=fit.ci_low,
                      ci_high=fit.ci_high, flags=flags, invalid=invalid)


# --- bound checks ----------------------------------------------------------

@dataclass(frozen=True)
class LemmaCheck:
    name: str
    measured: float
    band_low: float
    band_high: float
    verdict: str            # pass / fail / skip
    note: str = ""


def _verdict(measured: float, lo: float, hi: float) -> str:
    return "pass" if lo <= measured <= hi else "fail"


def _replica_pairs(seed, count, base=0):
    return [(NoiseStream(seed, (base + r, 1)), NoiseStream(seed, (base + r, 2)))
            for r in range(count)]


def _check_time_regularity(cfg, seed, epsilon, h_values, replicas) -> float:
    dt = cfg["sim.dt"]
    t0 = cfg["lemma.t_anchor"]
    steps = [round(t0 / dt)] + [round((t0 + h) / dt) for h in h_values]
    for h in h_values:
        if abs(round(h / dt) * dt - h) > 1e-9:
            raise ConfigurationError(f"increment {h} is not a multiple of dt={dt}")
    horizon = (t0 + max(h_values))
    sys_cfg = build_system_config(cfg, epsilon=epsilon, track_energy=False,
                                  t_final=math.ceil(horizon / dt) * dt)
    res = run_batch(sys_cfg, _replica_pairs(seed, replicas), record_steps=steps)
    base = res.pos[0]
    mean_sq = [float(np.mean(np.sum((res.pos[1 + i] - base) ** 2, axis=-1)))
               for i in range(len(h_values))]
    return fit_loglog_slope(h_values, mean_sq).slope


def _check_block_freeze(cfg, seed, deltas, replicas):
    # the gap bounds are uniform in t: measure the sup of the mean squared
    # gaps over block breakpoints, where the full-block freeze lag applies
    sys_cfg = build_system_config(cfg, track_energy=False)
    alphas = eigenvalues(sys_cfg.n_modes, sys_cfg.domain_length)
    dt = sys_cfg.dt
    fast_gap, slow_gap, vel_gap = [], [], []
    for delta in deltas:
        ratio = delta / dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigurationError(f"block {delta} is not a multiple of dt={dt}")
        m = round(ratio)
        record = list(range(m, sys_cfg.n_steps + 1, m))
        res = run_batch(sys_cfg, _replica_pairs(seed, replicas),
                        record_steps=record, delta_steps=m)
        fast_gap.append(float(np.max(np.mean(
            np.sum((res.fast - res.hat_fast) ** 2, axis=-1), axis=-1))))
        slow_gap.append(float(np.max(np.mean(
            np.sum(alphas * (res.pos - res.hat_pos) ** 2, axis=-1), axis=-1))))
        vel_gap.append(float(np.max(np.mean(
            np.sum((res.vel - res.hat_vel) ** 2, axis=-1), axis=-1))))
    return (fit_loglog_slope(deltas, fast_gap).slope,
            fit_loglog_slope(deltas, slow_gap).slope,
            fit_loglog_slope(deltas, vel_gap).slope)


def _check_apriori(cfg, seed, epsilons, replicas):
    worst_slow, worst_fast = 0.0, 0.0
    for i, eps in enumerate(epsilons):
        sys_cfg = build_system_config(cfg, epsilon=eps, track_energy=False)
        n_steps = sys_cfg.n_steps
        grid = sorted(set(np.linspace(0, n_steps, 17).round().astype(int)))
        res = run_batch(sys_cfg, _replica_pairs(seed, replicas, base=1000 * (i + 1)),
                        record_steps=grid)
        alphas = eigenvalues(sys_cfg.n_modes, sys_cfg.domain_length)
        slow = np.mean(np.sum(alphas * res.pos**2 + res.vel**2, axis=-1), axis=-1)
        fast = np.mean(np.sum(res.fast**2, axis=-1), axis=-1)
        e0 = (sys_cfg.initial_position.norm(1.0) ** 2
              + sys_cfg.initial_velocity.norm() ** 2)
        y0 = sys_cfg.initial_fast.norm() ** 2
        worst_slow = max(worst_slow, float(np.max(slow)) / (1.0 + e0 + y0))
        worst_fast = max(worst_fast, float(np.max(fast)) / (1.0 + e0 + y0))
    return worst_slow, worst_fast


def _check_invariant_moment(cfg, seed, levels):
    coeffs = build_coefficients(cfg)
    noise = build_noise(cfg)
    n, length = cfg["domain.modes"], cfg["domain.length"]
    kappa = dissipativity_margin(coeffs, length)
    burn, horizon = 10.0 / kappa, 200.0 / kappa
    dt = 5e-3
    n_burn, n_total = round(burn / dt), round(horizon / dt)
    x_rows = np.zeros((len(levels), n))
    x_rows[:, 0] = levels
    y_rows = np.zeros_like(x_rows)
    streams = [NoiseStream(seed, (2000 + i, 2)) for i in range(len(levels))]
    record = list(range(n_burn, n_total, 4))
    res = run_frozen_batch(x_rows, y_rows, dt, n_total, coeffs, noise, length,
                           streams, record)
    second_moment = np.mean(np.sum(res.y**2, axis=-1), axis=0)  # per level
    xsq = np.asarray(levels, dtype=float) ** 2
    slope = float(np.polyfit(xsq, second_moment, 1)[0])
    return slope


def _check_mixing(cfg, seed):
    coeffs = build_coefficients(cfg)
    noise = build_noise(cfg)
    n, length = cfg["domain.modes"], cfg["domain.length"]
    x = SpectralField.unit_mode(1, n, length)
    y = SpectralField.zeros(n, length)
    y_alt = SpectralField.unit_mode(cfg["mixing.offset_mode"], n, length,
                                    cfg["mixing.offset_amplitude"])
    report = estimate_mixing(x, y, y_alt, cfg["mixing.t_final"],
                             cfg["mixing.replicas"], coeffs, noise,
                             NoiseStream(seed, (3000, 2)), dt=cfg["mixing.dt"])
    return report


def _check_drift_relaxation(cfg, seed):
    """Decay rate of || E f(x, Y_t) - limit || along the frozen flow."""
    coeffs = build_coefficients(cfg)
    noise = build_noise(cfg)
    n, length = cfg["domain.modes"], cfg["domain.length"]
    kappa = dissipativity_margin(coeffs, length)
    t_final = 8.0 / kappa
    dt = 2e-3
    n_steps = round(t_final / dt)
    replicas = 128
    x = SpectralField.unit_mode(1, n, length)
    x_rows = np.broadcast_to(x.coeffs, (replicas, n)).copy()
    y_rows = np.zeros((replicas, n))
    record = sorted(set(np.linspace(0, n_steps, 25).round().astype(int)))
    streams = [NoiseStream(seed, (4000 + i, 2)) for i in range(replicas)]
    res = run_frozen_batch(x_rows, y_rows, dt, n_steps, coeffs, noise, length,
                           streams, record)
    mean_drift = np.stack([coeffs.f(x_rows, res.y[i]).mean(axis=0)
                           for i in range(len(record))])
    gap = np.sqrt(np.sum((mean_drift - mean_drift[-1]) ** 2, axis=-1))
    times = res.times
    window = (times >= times[-1] / 8.0) & (times <= times[-1] / 2.0) & (gap > 1e-13)
    if window.sum() < 3:
        return math.nan
    return -fit_semilog_slope(times[window], gap[window]).slope


def run_lemma_checks(cfg: dict, seed: int = 0) -> list[LemmaCheck]:
    """Measured-versus-band report for the solvers' quantitative contracts.

    A nonpositive dissipativity margin fails its own check and skips every
    ergodic check downstream (they presume a mixing fast flow).
    """
    coeffs = build_coefficients(cfg)
    length = cfg["domain.length"]
    kappa = dissipativity_margin(coeffs, length)
    checks = [LemmaCheck("dissipativity_margin", kappa, 0.0, math.inf,
                         "pass" if kappa > 0 else "fail")]
    ergodic_note = "kappa nonpositive" if kappa <= 0 else ""

    replicas = cfg["lemma.replicas"]
    h_values = cfg["lemma.h_values"]
    for eps in cfg["lemma.epsilons"]:
        slope = _check_time_regularity(cfg, seed, eps, h_values, replicas)
        checks.append(LemmaCheck(f"time_regularity_slope_eps_{eps:g}",
                                 slope, 1.7, 2.3, _verdict(slope, 1.7, 2.3)))

    fast_s, slow_s, vel_s = _check_block_freeze(cfg, seed, cfg["lemma.deltas"],
                                                replicas)
    checks.append(LemmaCheck("block_freeze_fast_slope", fast_s, 1.6, 2.4,
                             _verdict(fast_s, 1.6, 2.4)))
    checks.append(LemmaCheck("block_freeze_slow_h1_slope", slow_s, 1.6, 2.4,
                             _verdict(slow_s, 1.6, 2.4)))
    checks.append(LemmaCheck("block_freeze_velocity_slope", vel_s, 1.6, 2.4,
                             _verdict(vel_s, 1.6, 2.4)))

    worst_slow, worst_fast = _check_apriori(cfg, seed, cfg["lemma.epsilons"],
                                            min(replicas, 64))
    checks.append(LemmaCheck("apriori_slow_energy_ratio", worst_slow, 0.0, 10.0,
                             _verdict(worst_slow, 0.0, 10.0)))
    checks.append(LemmaCheck("apriori_fast_moment_ratio", worst_fast, 0.0, 10.0,
                             _verdict(worst_fast, 0.0, 10.0)))

    if kappa <= 0:
        for name in ("invariant_moment_slope", "mixing_exponent",
                     "drift_relaxation_exponent"):
            checks.append(LemmaCheck(name, math.nan, math.nan, math.nan,
                                     "skip", ergodic_note))
        return checks

    moment_slope = _check_invariant_moment(cfg, seed, cfg["lemma.moment_x_levels"])
    checks.append(LemmaCheck("invariant_moment_slope", moment_slope, 0.0, 1.2,
                             _verdict(moment_slope, 0.0, 1.2)))

    mixing = _check_mixing(cfg, seed)
    if coeffs.name == "linear_ou":
        lo, hi = cfg["lemma.mixing_band_low"], cfg["lemma.mixing_band_high"]
    else:
        lo, hi = kappa - 0.1, math.inf
    measured = mixing.exponent
    checks.append(LemmaCheck("mixing_exponent", measured, lo, hi,
                             "pass" if (mixing.contracted or lo <= measured <= hi)
                             else "fail"))

    relax = _check_drift_relaxation(cfg, seed)
    checks.append(LemmaCheck("drift_relaxation_exponent", relax, 0.0, math.inf,
                             _verdict(relax, 0.0, math.inf) if not math.isnan(relax)
                             else "fail"))
    return checks


# --- CSV emission ----------------------------------------------------------

def format_value(v) -> str:
    """Full-precision text for CSV cells: 17 significant digits for floats."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_value(v) for v in row) + "\n")


def rate_report_tables(report: RateReport):
    header = ["epsilon", "delta", "dt", "replicas", "aborted",
              "mse_mean", "mse_stderr"]
    rows = [(r.epsilon, r.delta, r.dt, r.replicas, r.aborted,
             r.mse_mean, r.mse_stderr) for r in report.rows]
    summary_header = ["slope", "ci_low", "ci_high", "invalid", "flags"]
    summary_rows = [(report.slope, report.ci_low, report.ci_high,
                     report.invalid, ";".join(report.flags))]
    return (header, rows), (summary_header, summary_rows)


def lemma_table(checks: list[LemmaCheck]):
    header = ["check", "measured", "band_low", "band_high", "verdict", "note"]
    rows = [(c.name, c.measured, c.band_low, c.band_high, c.verdict, c.note)
            for c in checks]
    return header, rows

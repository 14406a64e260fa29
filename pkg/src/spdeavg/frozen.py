"""The fast equation with a frozen slow argument, run at unit speed.

For a fixed slow state x the fast dynamics is ergodic whenever the
dissipativity margin is positive, and its stationary law defines the
averaged slow drift

    fbar(x) = E_mu_x [ f(x, .) ].

This module hosts the long-run machinery built on that fact: trajectory
integration, time-average and ensemble estimators of fbar with batch-means
error bars, synchronous-coupling contraction measurement, and the first
variation of the solution with respect to the frozen argument.

All coupled quantities (paired initial conditions, variation processes)
share the same standard-normal draws as the driving path.  The stochastic
convolutions of the state and of its variation carry the same exponential
kernel, so sharing draws realizes one Brownian path for the whole system
exactly, not just to leading order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, UsageError
from .model import CoefficientSet, dissipativity_margin
from .noise import NoiseSpec, NoiseStream
from .schemes import FastStepRule
from .spectral import SpectralField, eigenvalues
from .stats import fit_semilog_slope

__all__ = [
    "AveragedDriftEstimate",
    "MixingReport",
    "VariationReport",
    "integrate_frozen",
    "estimate_avg_drift",
    "closed_form_avg_drift",
    "estimate_mixing",
    "first_variation",
]

_CHUNK = 512


@dataclass
class FrozenBatchResult:
    times: np.ndarray
    y: np.ndarray                     # (record, replica, mode)
    y2: np.ndarray | None
    z: np.ndarray | None
    aborted: np.ndarray
    abort_step: np.ndarray


def run_frozen_batch(x_rows: np.ndarray, y_rows: np.ndarray, dt: float,
                     n_steps: int, coeffs: CoefficientSet, noise: NoiseSpec,
                     domain_length: float, streams, record_steps,
                     y2_rows: np.ndarray | None = None,
                     h_rows: np.ndarray | None = None) -> FrozenBatchResult:
    """Advance a batch of frozen-argument fast trajectories.

    ``x_rows``/``y_rows`` are (replica, mode) arrays; each replica draws
    from its own stream.  When ``y2_rows`` is given, a second trajectory
    from that initial condition runs on the identical draws (synchronous
    coupling).  When ``h_rows`` is given, the first-variation process in
    that direction is co-integrated from zero, again on shared draws.
    """
    m, n = y_rows.shape
    alphas = eigenvalues(n, domain_length)
    rule = FastStepRule(alphas, noise.lambda2, dt, 1.0, 1)
    record_steps = sorted(set(int(s) for s in record_steps))
    if record_steps[0] < 0 or record_steps[-1] > n_steps:
        raise ConfigurationError("record steps outside the time grid")
    rec_lookup = {s: i for i, s in enumerate(record_steps)}
    n_rec = len(record_steps)

    with_pair = y2_rows is not None
    with_var = h_rows is not None
    if with_var and not coeffs.has_derivatives:
        raise ConfigurationError(
            "coefficient set lacks derivative callbacks for the variation equation")

    x = np.array(x_rows, dtype=float)
    y = np.array(y_rows, dtype=float)
    y2 = np.array(y2_rows, dtype=float) if with_pair else None
    z = np.zeros_like(y) if with_var else None
    h_dirs = np.array(h_rows, dtype=float) if with_var else None

    aborted = np.zeros(m, dtype=bool)
    abort_step = np.full(m, -1, dtype=int)
    out = FrozenBatchResult(
        times=np.array([s * dt for s in record_steps]),
        y=np.empty((n_rec, m, n)),
        y2=np.empty((n_rec, m, n)) if with_pair else None,
        z=np.empty((n_rec, m, n)) if with_var else None,
        aborted=aborted, abort_step=abort_step,
    )

    def record(step):
        i = rec_lookup[step]
        out.y[i] = y
        if with_pair:
            out.y2[i] = y2
        if with_var:
            out.z[i] = z

    def check_finite(step):
        ok = np.isfinite(y).all(axis=1)
        if with_pair:
            ok &= np.isfinite(y2).all(axis=1)
        if with_var:
            ok &= np.isfinite(z).all(axis=1)
        fresh = ~ok & ~aborted
        if fresh.any():
            aborted[fresh] = True
            abort_step[fresh] = step
            y[fresh] = 0.0
            if with_pair:
                y2[fresh] = 0.0
            if with_var:
                z[fresh] = 0.0

    if 0 in rec_lookup:
        record(0)
    step = 0
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        while step < n_steps:
            chunk = min(_CHUNK, n_steps - step)
            xi = np.stack([s.normals((chunk, n)) for s in streams])
            for j in range(chunk):
                draws = xi[:, j]
                if with_var:
                    gx = coeffs.g_dx(x, y, h_dirs)
                    gy = coeffs.g_dy(x, y, z)
                    bx = coeffs.b_dx(x, y, h_dirs)
                    by = coeffs.b_dy(x, y, z)
                    z = (rule.decay * z + rule.phi * (gx + gy)
                         + (bx + by) * rule.std0 * draws)
                g = coeffs.g(x, y)
                zeta = coeffs.b(x, y) * rule.std0 * draws
                y = rule.decay * y + rule.phi * g + zeta
                if with_pair:
                    g2 = coeffs.g(x, y2)
                    zeta2 = coeffs.b(x, y2) * rule.std0 * draws
                    y2 = rule.decay * y2 + rule.phi * g2 + zeta2
                step += 1
                if step in rec_lookup:
                    check_finite(step)
                    record(step)
            check_finite(step)
    return out


def integrate_frozen(x: SpectralField, y: SpectralField, t_final: float,
                     dt: float, coeffs: CoefficientSet, noise: NoiseSpec,
                     stream: NoiseStream, stride: int = 1
                     ) -> list[tuple[float, SpectralField]]:
    """One frozen-argument fast trajectory, sampled every ``stride`` steps."""
    if t_final <= 0 or dt <= 0:
        raise ValueError("horizon and step must be positive")
    n_steps = max(1, round(t_final / dt))
    record = list(range(0, n_steps + 1, stride))
    if record[-1] != n_steps:
        record.append(n_steps)
    res = run_frozen_batch(x.coeffs[None, :], y.coeffs[None, :], dt, n_steps,
                           coeffs, noise, x.domain_length, [stream], record)
    if res.aborted[0]:
        from .errors import BlowupError
        raise BlowupError(int(res.abort_step[0]))
    return [(float(t), SpectralField(res.y[i, 0], x.domain_length))
            for i, t in enumerate(res.times)]


@dataclass(frozen=True)
class AveragedDriftEstimate:
    """Monte Carlo estimate of the averaged slow drift at one slow state."""

    value: SpectralField
    stderr: float
    stderr_modes: np.ndarray
    burn_in: float
    horizon: float
    method: str

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("stderr must be nonnegative")
        if not self.horizon > self.burn_in >= 0:
            raise ValueError("need horizon > burn_in >= 0")


def _default_windows(coeffs: CoefficientSet, domain_length: float):
    kappa = dissipativity_margin(coeffs, domain_length)
    if kappa <= 0:
        raise ConfigurationError(
            "cannot derive default averaging windows: dissipativity margin "
            f"{kappa:.4g} is nonpositive; pass burn_in/horizon explicitly")
    return 10.0 / kappa, 200.0 / kappa


def estimate_avg_drift(x: SpectralField, coeffs: CoefficientSet,
                       noise: NoiseSpec, stream: NoiseStream,
                       method: str = "time_average", *,
                       burn_in: float | None = None,
                       horizon: float | None = None,
                       dt: float = 5e-3,
                       replicas: int = 32,
                       n_batches: int = 20,
                       y0: SpectralField | None = None) -> AveragedDriftEstimate:
    """Estimate fbar(x) by ergodic time averaging or by an ensemble mean.

    ``time_average`` integrates one long path, discards ``burn_in``, and
    averages the slow drift along the rest, with batch-means error bars.
    ``ensemble`` averages the drift at the terminal time of ``replicas``
    independent paths.  Default windows are 10/kappa and 200/kappa.
    """
    if method not in ("time_average", "ensemble"):
        raise ConfigurationError(f"unknown estimation method '{method}'")
    if burn_in is None or horizon is None:
        auto_burn, auto_hor = _default_windows(coeffs, x.domain_length)
        burn_in = auto_burn if burn_in is None else burn_in
        horizon = auto_hor if horizon is None else horizon
    if horizon <= burn_in:
        raise ConfigurationError(
            f"averaging horizon {horizon} must exceed burn-in {burn_in}")
    if y0 is None:
        y0 = SpectralField.zeros(x.n_modes, x.domain_length)

    if method == "time_average":
        n_burn = round(burn_in / dt)
        n_total = round(horizon / dt)
        if n_total <= n_burn:
            raise ConfigurationError("averaging window shorter than one step")
        record = list(range(n_burn, n_total))
        res = run_frozen_batch(x.coeffs[None, :], y0.coeffs[None, :], dt,
                               n_total, coeffs, noise, x.domain_length,
                               [stream], record)
        fvals = coeffs.f(np.broadcast_to(x.coeffs, (len(record), x.n_modes)),
                         res.y[:, 0, :])
        n_avg = fvals.shape[0]
        n_batches = min(n_batches, n_avg)
        idx = np.arange(n_avg) * n_batches // n_avg
        batch_means = np.stack([fvals[idx == b].mean(axis=0)
                                for b in range(n_batches)])
    else:
        n_total = round(horizon / dt)
        streams = [stream.derived(i) for i in range(replicas)]
        x_rows = np.broadcast_to(x.coeffs, (replicas, x.n_modes)).copy()
        y_rows = np.broadcast_to(y0.coeffs, (replicas, x.n_modes)).copy()
        res = run_frozen_batch(x_rows, y_rows, dt, n_total, coeffs, noise,
                               x.domain_length, streams, [n_total])
        batch_means = coeffs.f(x_rows, res.y[0])
        n_batches = replicas

    mean = batch_means.mean(axis=0)
    dev = batch_means - mean
    denom = n_batches * max(n_batches - 1, 1)
    stderr_modes = np.sqrt(np.sum(dev**2, axis=0) / denom)
    stderr = float(np.sqrt(np.sum(dev**2) / denom))
    return AveragedDriftEstimate(
        value=SpectralField(mean, x.domain_length),
        stderr=stderr, stderr_modes=stderr_modes,
        burn_in=float(burn_in), horizon=float(horizon), method=method,
    )


def closed_form_avg_drift(x: SpectralField, coeffs: CoefficientSet) -> SpectralField:
    """Exact fbar(x) for the linear fixture: mode-wise x_k/(alpha_k + gamma)."""
    if coeffs.name != "linear_ou":
        raise UsageError(
            f"closed-form averaged drift exists only for linear_ou, not '{coeffs.name}'")
    gamma = coeffs.params["gamma"]
    alphas = eigenvalues(x.n_modes, x.domain_length)
    return x.with_coeffs(x.coeffs / (alphas + gamma))


@dataclass(frozen=True)
class MixingReport:
    """Fitted contraction of two synchronously coupled fast trajectories."""

    exponent: float
    prefactor: float
    times: np.ndarray
    mean_sq_diff: np.ndarray
    contracted: bool = False


def estimate_mixing(x: SpectralField, y: SpectralField, y_alt: SpectralField,
                    t_final: float, replicas: int, coeffs: CoefficientSet,
                    noise: NoiseSpec, stream: NoiseStream, dt: float = 1e-3,
                    n_record: int = 64) -> MixingReport:
    """Fit the decay rate of E||Y^{x,y} - Y^{x,y'}||^2 under shared noise.

    The two trajectories are driven by identical draws; the log of the mean
    squared difference is fitted over the window [T/4, T].  If the pair has
    already contracted below rounding noise, the report says so instead of
    fitting garbage.
    """
    if np.array_equal(y.coeffs, y_alt.coeffs):
        times = np.linspace(0.0, t_final, n_record)
        return MixingReport(exponent=math.inf, prefactor=0.0, times=times,
                            mean_sq_diff=np.zeros(n_record), contracted=True)
    n_steps = max(1, round(t_final / dt))
    record = sorted(set(np.linspace(0, n_steps, n_record).round().astype(int)))
    streams = [stream.derived(i) for i in range(replicas)]
    n = x.n_modes
    x_rows = np.broadcast_to(x.coeffs, (replicas, n)).copy()
    y_rows = np.broadcast_to(y.coeffs, (replicas, n)).copy()
    y2_rows = np.broadcast_to(y_alt.coeffs, (replicas, n)).copy()
    res = run_frozen_batch(x_rows, y_rows, dt, n_steps, coeffs, noise,
                           x.domain_length, streams, record, y2_rows=y2_rows)
    diff = res.y - res.y2
    msd = np.mean(np.sum(diff**2, axis=-1), axis=-1)
    times = res.times
    window = times >= t_final / 4.0
    if np.max(msd[window]) < 1e-14:
        return MixingReport(exponent=math.inf, prefactor=0.0, times=times,
                            mean_sq_diff=msd, contracted=True)
    fit = fit_semilog_slope(times[window], msd[window])
    return MixingReport(exponent=-fit.slope, prefactor=math.exp(fit.intercept),
                        times=times, mean_sq_diff=msd)


@dataclass(frozen=True)
class VariationReport:
    """First variation of the frozen fast flow along a direction."""

    times: np.ndarray
    mean_sq: np.ndarray          # E||zeta_t||^2 over the record grid
    sup_mean_sq: float
    terminal_mean: SpectralField
    direction_norm_sq: float

    @property
    def sup_ratio(self) -> float:
        return self.sup_mean_sq / self.direction_norm_sq


def first_variation(x: SpectralField, y: SpectralField, h: SpectralField,
                    t_final: float, dt: float, coeffs: CoefficientSet,
                    noise: NoiseSpec, stream: NoiseStream,
                    replicas: int = 16, n_record: int = 64) -> VariationReport:
    """Integrate the derivative of the frozen flow with respect to x along h.

    The variation solves a linear equation with the same heat kernel as the
    state, driven by the same Brownian path; it starts from zero and its
    second moment stays bounded by a constant multiple of ||h||^2.
    """
    if not coeffs.has_derivatives:
        raise ConfigurationError(
            "coefficient set lacks derivative callbacks for the variation equation")
    n_steps = max(1, round(t_final / dt))
    record = sorted(set(np.linspace(0, n_steps, n_record).round().astype(int)))
    streams = [stream.derived(i) for i in range(replicas)]
    n = x.n_modes
    x_rows = np.broadcast_to(x.coeffs, (replicas, n)).copy()
    y_rows = np.broadcast_to(y.coeffs, (replicas, n)).copy()
    h_rows = np.broadcast_to(h.coeffs, (replicas, n)).copy()
    res = run_frozen_batch(x_rows, y_rows, dt, n_steps, coeffs, noise,
                           x.domain_length, streams, record, h_rows=h_rows)
    mean_sq = np.mean(np.sum(res.z**2, axis=-1), axis=-1)
    terminal = res.z[-1].mean(axis=0)
    return VariationReport(
        times=res.times, mean_sq=mean_sq, sup_mean_sq=float(np.max(mean_sq)),
        terminal_mean=SpectralField(terminal, x.domain_length),
        direction_norm_sq=float(np.sum(h.coeffs**2)),
    )

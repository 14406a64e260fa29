"""Command-line entry point.

Subcommands: ``simulate``, ``avg-drift``, ``mixing``, ``rate-study``,
``validate``, ``lemma-checks``.  All take ``--config PATH`` (flat
``key = value`` text), ``--seed U64``, ``--threads N`` (or the
SPDE_THREADS environment variable) and ``--out DIR``.  Output CSVs use a
'.' decimal separator, LF line endings, a header row and 17 significant
digits, and are byte-identical for identical (config, seed) regardless of
the thread count.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from .averaged import integrate_averaged
from .config import (build_coefficients, build_noise, build_system_config,
                     default_config, load_config)
from .coupled import energy_residual, integrate_full
from .errors import SpdeAvgError
from .frozen import estimate_avg_drift, estimate_mixing
from .harness import (format_value, lemma_table, rate_report_tables,
                      run_lemma_checks, run_rate_study, write_csv)
from .model import validate_assumptions
from .noise import NoiseStream
from .spectral import SpectralField


def _common(parser):
    parser.add_argument("--config", type=Path, default=None,
                        help="configuration file (defaults apply if omitted)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=None,
                        help="worker count (default: SPDE_THREADS or 1)")
    parser.add_argument("--out", type=Path, default=Path("."),
                        help="output directory for CSV files")


def _load(args) -> dict:
    return load_config(args.config) if args.config else default_config()


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    return max(1, int(os.environ.get("SPDE_THREADS", "1")))


def _cmd_simulate(args):
    cfg = _load(args)
    sys_cfg = build_system_config(cfg)
    header = ["t", "energy", "x_h1_norm", "xdot_norm", "y_norm",
              "slow_residual", "fast_residual"]
    if args.averaged:
        from .harness import _make_drift
        drift = _make_drift(cfg, args.seed)
        run = integrate_averaged(sys_cfg, drift, NoiseStream(args.seed, (0, 1)))
        rows = [(t, w.energy(), w.position.norm(1.0), w.velocity.norm(),
                 0.0, math.nan, math.nan) for t, w in run.trajectory]
        path = args.out / "averaged_trajectory.csv"
    else:
        samples = integrate_full(sys_cfg, (NoiseStream(args.seed, (0, 1)),
                                           NoiseStream(args.seed, (0, 2))))
        if sys_cfg.track_energy:
            slow_res, fast_res = energy_residual(samples, sys_cfg)
        else:
            slow_res = fast_res = [math.nan] * len(samples)
        rows = [(s.t, s.slow.energy(), s.slow.position.norm(1.0),
                 s.slow.velocity.norm(), s.fast.norm(), rs, rf)
                for s, rs, rf in zip(samples, slow_res, fast_res)]
        path = args.out / "trajectory.csv"
    write_csv(path, header, rows)
    print(f"wrote {path} ({len(rows)} samples)")
    return 0


def _cmd_avg_drift(args):
    cfg = _load(args)
    coeffs = build_coefficients(cfg)
    noise = build_noise(cfg)
    n, length = cfg["domain.modes"], cfg["domain.length"]
    x = SpectralField.unit_mode(cfg["initial.x_mode"] or 1, n, length,
                                cfg["initial.x_amplitude"] or 1.0)
    est = estimate_avg_drift(
        x, coeffs, noise, NoiseStream(args.seed, (0, 3)),
        cfg["drift.method"],
        burn_in=cfg["drift.burn_in"] or None,
        horizon=cfg["drift.horizon"] or None,
        dt=cfg["drift.dt"], replicas=cfg["drift.replicas"])
    path = args.out / "avg_drift.csv"
    rows = [(k + 1, est.value.coeffs[k], est.stderr_modes[k]) for k in range(n)]
    write_csv(path, ["k", "value", "stderr"], rows)
    print(f"wrote {path}; overall stderr {est.stderr:.6g}")
    return 0


def _cmd_mixing(args):
    cfg = _load(args)
    coeffs = build_coefficients(cfg)
    noise = build_noise(cfg)
    n, length = cfg["domain.modes"], cfg["domain.length"]
    x = SpectralField.unit_mode(1, n, length)
    y = SpectralField.zeros(n, length)
    y_alt = SpectralField.unit_mode(cfg["mixing.offset_mode"], n, length,
                                    cfg["mixing.offset_amplitude"])
    report = estimate_mixing(x, y, y_alt, cfg["mixing.t_final"],
                             cfg["mixing.replicas"], coeffs, noise,
                             NoiseStream(args.seed, (0, 2)),
                             dt=cfg["mixing.dt"])
    path = args.out / "mixing.csv"
    write_csv(path, ["t", "mean_sq_diff"],
              list(zip(report.times, report.mean_sq_diff)))
    spath = args.out / "mixing_summary.csv"
    write_csv(spath, ["exponent", "prefactor", "contracted"],
              [(report.exponent, report.prefactor, report.contracted)])
    print(f"wrote {path} and {spath}; fitted exponent {report.exponent:.6g}")
    return 0


def _cmd_rate_study(args):
    cfg = _load(args)
    report = run_rate_study(cfg, seed=args.seed, threads=_threads(args))
    (header, rows), (sheader, srows) = rate_report_tables(report)
    path = args.out / "rate_study.csv"
    spath = args.out / "rate_study_summary.csv"
    write_csv(path, header, rows)
    write_csv(spath, sheader, srows)
    print(f"wrote {path} and {spath}")
    print(f"slope {report.slope:.4f}  ci [{report.ci_low:.4f}, {report.ci_high:.4f}]"
          + ("  INVALID" if report.invalid else ""))
    return 0


def _cmd_validate(args):
    cfg = _load(args)
    coeffs = build_coefficients(cfg)
    report = validate_assumptions(coeffs, cfg["domain.length"],
                                  n_modes=cfg["domain.modes"],
                                  probes=cfg["validate.probes"],
                                  stream=NoiseStream(args.seed, (0, 9)),
                                  noise=build_noise(cfg))
    lines = [f"kappa = {format_value(report.kappa)}",
             f"fatal = {format_value(report.fatal)}",
             f"violations = {len(report.violations)}"]
    for v in report.violations:
        lines.append(f"violation = {v}")
    for key in sorted(report.declared):
        lines.append(f"declared.{key} = {format_value(report.declared[key])}")
        lines.append(f"estimated.{key} = {format_value(report.estimated[key])}")
    text = "\n".join(lines) + "\n"
    path = args.out / "validate.txt"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return 2 if report.fatal else 0


def _cmd_lemma_checks(args):
    cfg = _load(args)
    checks = run_lemma_checks(cfg, seed=args.seed)
    header, rows = lemma_table(checks)
    path = args.out / "lemma_checks.csv"
    write_csv(path, header, rows)
    failed = [c for c in checks if c.verdict == "fail"]
    for c in checks:
        print(f"{c.verdict:>4}  {c.name}: {c.measured:.6g} in "
              f"[{c.band_low:.6g}, {c.band_high:.6g}] {c.note}")
    print(f"wrote {path}; {len(failed)} failed")
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="spdeavg",
        description="Slow-fast stochastic wave-heat simulation and averaging studies")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate one trajectory")
    p.add_argument("--averaged", action="store_true",
                   help="integrate the averaged system instead")
    _common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("avg-drift", help="estimate the averaged slow drift")
    _common(p)
    p.set_defaults(func=_cmd_avg_drift)

    p = sub.add_parser("mixing", help="synchronous-coupling contraction rate")
    _common(p)
    p.set_defaults(func=_cmd_mixing)

    p = sub.add_parser("rate-study", help="strong-error convergence study")
    _common(p)
    p.set_defaults(func=_cmd_rate_study)

    p = sub.add_parser("validate", help="probe coefficient assumptions")
    _common(p)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("lemma-checks", help="quantitative bound checks")
    _common(p)
    p.set_defaults(func=_cmd_lemma_checks)

    args = parser.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    try:
        return args.func(args)
    except SpdeAvgError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())

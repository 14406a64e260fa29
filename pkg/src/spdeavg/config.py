"""Flat ``section.key = value`` configuration files and object builders.

The format is plain text: one assignment per line, ``#`` comments, dotted
keys, values parsed by the declared type of each key.  Unknown keys are
rejected with their full path so typos fail loudly.  Numeric lists are
comma-separated.
"""

from __future__ import annotations

import math

from .coupled import SystemConfig
from .errors import ConfigurationError
from .model import CoefficientSet, make_fixture
from .noise import NoiseSpec, make_noise_spec
from .spectral import SpectralField

__all__ = ["parse_config", "load_config", "default_config",
           "build_coefficients", "build_noise", "build_system_config"]

# key -> (type tag, default); tags: float, int, str, bool, floats
SCHEMA = {
    "model.fixture": ("str", "linear_ou"),
    "model.gamma": ("float", 0.5),
    "model.sigma1": ("float", 0.1),
    "model.sigma2": ("float", 0.5),
    "model.a": ("float", 1.0),
    "model.sigma0": ("float", 0.1),
    "model.b0": ("float", 0.5),

    "domain.length": ("float", math.pi),
    "domain.modes": ("int", 16),

    "noise.family": ("str", "polynomial"),
    "noise.c": ("float", 1.0),
    "noise.p": ("float", 2.0),
    "noise.rho": ("float", 0.5),
    "noise.m": ("int", 1),

    "sim.t_final": ("float", 1.0),
    "sim.dt": ("float", 1e-3),
    "sim.epsilon": ("float", 1e-2),
    "sim.stride": ("int", 10),
    "sim.wave_noise": ("str", "endpoint"),
    "sim.fast_substep_ratio": ("float", 0.1),
    "sim.track_energy": ("bool", True),

    "initial.x_mode": ("int", 1),
    "initial.x_amplitude": ("float", 1.0),
    "initial.v_mode": ("int", 0),
    "initial.v_amplitude": ("float", 0.0),
    "initial.y_mode": ("int", 0),
    "initial.y_amplitude": ("float", 0.0),

    "rate.epsilons": ("floats", [2.0**-4, 2.0**-5, 2.0**-6, 2.0**-7, 2.0**-8, 2.0**-9]),
    "rate.replicas": ("int", 256),
    "rate.dt_base": ("float", 1e-3),
    "rate.drift": ("str", "closed_form"),

    "drift.method": ("str", "time_average"),
    "drift.burn_in": ("float", 0.0),     # 0 = auto (10/kappa)
    "drift.horizon": ("float", 0.0),     # 0 = auto (200/kappa)
    "drift.dt": ("float", 5e-3),
    "drift.replicas": ("int", 32),

    "mixing.t_final": ("float", 4.0),
    "mixing.dt": ("float", 1e-3),
    "mixing.replicas": ("int", 16),
    "mixing.offset_mode": ("int", 1),
    "mixing.offset_amplitude": ("float", 1.0),

    "lemma.deltas": ("floats", [0.02, 0.04, 0.08]),
    "lemma.replicas": ("int", 256),
    "lemma.h_values": ("floats", [0.02, 0.04, 0.08]),
    "lemma.epsilons": ("floats", [0.1, 0.01]),
    "lemma.t_anchor": ("float", 0.5),
    "lemma.moment_x_levels": ("floats", [0.0, 1.0, 2.0, 4.0]),
    "lemma.mixing_band_low": ("float", 2.85),
    "lemma.mixing_band_high": ("float", 3.15),

    "validate.probes": ("int", 64),
}


def _parse_value(key: str, raw: str):
    tag = SCHEMA[key][0]
    raw = raw.strip()
    try:
        if tag == "float":
            return float(raw)
        if tag == "int":
            return int(raw)
        if tag == "bool":
            if raw.lower() in ("true", "yes", "on", "1"):
                return True
            if raw.lower() in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if tag == "floats":
            return [float(part) for part in raw.split(",") if part.strip()]
        return raw
    except ValueError as exc:
        raise ConfigurationError(f"bad value for '{key}': {raw!r}") from exc


def default_config() -> dict:
    return {key: (list(v) if isinstance(v, list) else v)
            for key, (_, v) in SCHEMA.items()}


def parse_config(text: str) -> dict:
    """Parse configuration text; unset keys take their defaults."""
    cfg = default_config()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in SCHEMA:
            raise ConfigurationError(f"unknown configuration key '{key}'")
        cfg[key] = _parse_value(key, raw)
    return cfg


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def build_coefficients(cfg: dict) -> CoefficientSet:
    n = cfg["domain.modes"]
    length = cfg["domain.length"]
    fixture = cfg["model.fixture"]
    if fixture == "linear_ou":
        return make_fixture("linear_ou", n, length, gamma=cfg["model.gamma"],
                            sigma1=cfg["model.sigma1"], sigma2=cfg["model.sigma2"])
    if fixture == "bounded_nonlinear":
        return make_fixture("bounded_nonlinear", n, length, a=cfg["model.a"],
                            gamma=cfg["model.gamma"], sigma0=cfg["model.sigma0"],
                            b0=cfg["model.b0"])
    raise ConfigurationError(f"unknown fixture '{fixture}'")


def build_noise(cfg: dict) -> NoiseSpec:
    family = cfg["noise.family"]
    n = cfg["domain.modes"]
    if family == "polynomial":
        return make_noise_spec("polynomial", n, c=cfg["noise.c"], p=cfg["noise.p"])
    if family == "exponential":
        return make_noise_spec("exponential", n, c=cfg["noise.c"], rho=cfg["noise.rho"])
    if family == "flat":
        return make_noise_spec("flat", n, c=cfg["noise.c"], m=cfg["noise.m"])
    raise ConfigurationError(f"unknown spectrum family '{family}'")


def _initial_field(cfg: dict, prefix: str) -> SpectralField:
    n = cfg["domain.modes"]
    length = cfg["domain.length"]
    mode = cfg[f"initial.{prefix}_mode"]
    amp = cfg[f"initial.{prefix}_amplitude"]
    if mode == 0 or amp == 0.0:
        return SpectralField.zeros(n, length)
    return SpectralField.unit_mode(mode, n, length, amp)


def build_system_config(cfg: dict, *, epsilon: float | None = None,
                        dt: float | None = None, t_final: float | None = None,
                        track_energy: bool | None = None,
                        stride: int | None = None) -> SystemConfig:
    """Assemble a :class:`SystemConfig`, optionally overriding scheme knobs."""
    return SystemConfig(
        domain_length=cfg["domain.length"],
        n_modes=cfg["domain.modes"],
        coefficients=build_coefficients(cfg),
        noise=build_noise(cfg),
        epsilon=cfg["sim.epsilon"] if epsilon is None else epsilon,
        t_final=cfg["sim.t_final"] if t_final is None else t_final,
        dt=cfg["sim.dt"] if dt is None else dt,
        initial_position=_initial_field(cfg, "x"),
        initial_velocity=_initial_field(cfg, "v"),
        initial_fast=_initial_field(cfg, "y"),
        fast_substep_ratio=cfg["sim.fast_substep_ratio"],
        wave_noise=cfg["sim.wave_noise"],
        track_energy=cfg["sim.track_energy"] if track_energy is None else track_energy,
        stride=cfg["sim.stride"] if stride is None else stride,
    )

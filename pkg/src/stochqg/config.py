"""Plain-text key-value experiment configuration.

One dotted key per line (``section.key = value``), ``#`` comments, UTF-8.
Unknown keys are rejected and all constraint violations are reported at
once.  ``normalize`` emits the canonical form (every key explicit, fixed
order); parse(normalize(cfg)) == cfg.  The config hash used for artifact
provenance is the sha256 of the normalized text.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields

import numpy as np


class ConfigError(ValueError):
    """Carries the full list of violations found in a config document."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.violations))


@dataclass
class SimConfig:
    # grid
    nx: int = 32
    ny: int = 32
    nz: int = 17
    # physics
    nu: float = 0.5
    beta: float = 1.0
    f0: float = 1.0
    n_of_z: str = "1.0"          # constant, or comma-separated table of nz values
    # noise
    n_modes: int = 8
    q0: float = 0.01
    p: float = 3.0
    tau_c: float = 0.5
    dt_noise: float = 0.0625
    noise_t_min: float = -64.0
    noise_t_max: float = 16.0
    noise_file: str = ""
    # periodic flux
    amplitude: float = 0.0
    mode_k: int = 1
    mode_l: int = 0
    phase: float = 0.0
    # time stepping
    dt: float = 0.0625
    t0: float = 0.0
    t1: float = 4.0
    snapshot_every: int = 0
    linear_only: bool = False
    # initial data
    init_kind: str = "zero"      # zero | eigenmode | random
    init_amplitude: float = 0.1
    init_m: int = 1
    init_l: int = 1
    init_k: int = 1
    init_modes: int = 12
    # orchestration
    seed: int = 12345
    out_dir: str = "out"
    # pullback block
    horizons: str = "2,4,8,16"
    ensemble: int = 8
    sampling_rule: str = "sphere"
    leading_modes: int = 12
    quad_horizon: float = 0.0    # 0: default 20/(nu lam1)
    # cocycle block
    cocycle_s: float = 1.0
    cocycle_t: float = 1.0


# key in the document -> (attribute, type)
_SCHEMA = {
    "grid.nx": ("nx", int),
    "grid.ny": ("ny", int),
    "grid.nz": ("nz", int),
    "physics.nu": ("nu", float),
    "physics.beta": ("beta", float),
    "physics.f0": ("f0", float),
    "physics.N": ("n_of_z", str),
    "noise.n_modes": ("n_modes", int),
    "noise.q0": ("q0", float),
    "noise.p": ("p", float),
    "noise.tau_c": ("tau_c", float),
    "noise.dt_noise": ("dt_noise", float),
    "noise.t_min": ("noise_t_min", float),
    "noise.t_max": ("noise_t_max", float),
    "noise.file": ("noise_file", str),
    "periodic.amplitude": ("amplitude", float),
    "periodic.mode_k": ("mode_k", int),
    "periodic.mode_l": ("mode_l", int),
    "periodic.phase": ("phase", float),
    "time.dt": ("dt", float),
    "time.t0": ("t0", float),
    "time.t1": ("t1", float),
    "time.snapshot_every": ("snapshot_every", int),
    "time.linear_only": ("linear_only", bool),
    "init.kind": ("init_kind", str),
    "init.amplitude": ("init_amplitude", float),
    "init.m": ("init_m", int),
    "init.l": ("init_l", int),
    "init.k": ("init_k", int),
    "init.modes": ("init_modes", int),
    "seed": ("seed", int),
    "output.dir": ("out_dir", str),
    "pullback.horizons": ("horizons", str),
    "pullback.ensemble": ("ensemble", int),
    "pullback.sampling_rule": ("sampling_rule", str),
    "pullback.leading_modes": ("leading_modes", int),
    "pullback.quad_horizon": ("quad_horizon", float),
    "cocycle.s": ("cocycle_s", float),
    "cocycle.t": ("cocycle_t", float),
}

_ATTR_TO_KEY = {attr: key for key, (attr, _) in _SCHEMA.items()}


def _parse_value(raw: str, typ, key: str, errors: list):
    raw = raw.strip()
    try:
        if typ is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except ValueError:
        errors.append(f"{key}: cannot parse {raw!r} as {typ.__name__}")
        return None


def parse_config(text: str) -> SimConfig:
    """Parse and validate; raises ConfigError listing every violation."""
    cfg = SimConfig()
    errors = []
    seen = set()
    for ln, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            errors.append(f"line {ln}: expected 'key = value', got {stripped!r}")
            continue
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _SCHEMA:
            errors.append(f"line {ln}: unknown key {key!r}")
            continue
        if key in seen:
            errors.append(f"line {ln}: duplicate key {key!r}")
            continue
        seen.add(key)
        attr, typ = _SCHEMA[key]
        val = _parse_value(raw, typ, key, errors)
        if val is not None:
            setattr(cfg, attr, val)
    errors.extend(validate_config(cfg))
    if errors:
        raise ConfigError(errors)
    return cfg


def validate_config(cfg: SimConfig) -> list[str]:
    errs = []
    if cfg.nx % 2 or cfg.nx < 8 or cfg.ny % 2 or cfg.ny < 8:
        errs.append("grid.nx, grid.ny must be even and >= 8")
    if cfg.nz < 5:
        errs.append("grid.nz must be >= 5")
    if cfg.nu <= 0:
        errs.append("viscosity must be positive")
    if cfg.beta < 0:
        errs.append("physics.beta must be nonnegative")
    if cfg.f0 == 0:
        errs.append("physics.f0 must be nonzero")
    try:
        table = n_table(cfg)
        if np.any(table <= 0) or not np.all(np.isfinite(table)):
            errs.append("physics.N must be positive and finite")
        if table.size not in (1, cfg.nz):
            errs.append(f"physics.N table must have 1 or nz={cfg.nz} entries")
    except ValueError:
        errs.append(f"physics.N: cannot parse {cfg.n_of_z!r}")
    if cfg.n_modes < 0:
        errs.append("noise.n_modes must be nonnegative")
    if cfg.q0 < 0:
        errs.append("noise.q0 must be nonnegative")
    if cfg.tau_c <= 0:
        errs.append("noise.tau_c must be positive")
    if cfg.dt_noise <= 0:
        errs.append("noise.dt_noise must be positive")
    if cfg.dt <= 0:
        errs.append("time.dt must be positive")
    elif cfg.dt_noise > 0:
        m = round(cfg.dt_noise / cfg.dt)
        if m < 1 or abs(m * cfg.dt - cfg.dt_noise) > 1e-9 * cfg.dt_noise:
            errs.append("time.dt must divide noise.dt_noise")
    if cfg.noise_t_min >= cfg.noise_t_max:
        errs.append("noise.t_min must precede noise.t_max")
    if not 0.0 <= cfg.phase < 1.0:
        errs.append("periodic.phase must lie in [0, 1)")
    if cfg.t0 >= cfg.t1:
        errs.append("time.t0 must precede time.t1")
    if cfg.snapshot_every < 0:
        errs.append("time.snapshot_every must be nonnegative")
    if cfg.seed < 0 or cfg.seed >= (1 << 63):
        errs.append("seed must be a nonnegative 63-bit integer")
    if cfg.init_kind not in ("zero", "eigenmode", "random"):
        errs.append("init.kind must be zero|eigenmode|random")
    if cfg.sampling_rule not in ("sphere", "ball"):
        errs.append("pullback.sampling_rule must be sphere|ball")
    if cfg.ensemble < 8:
        errs.append("pullback.ensemble must be at least 8")
    try:
        hs = horizon_list(cfg)
        if not hs or hs != sorted(hs) or any(h <= 0 for h in hs):
            errs.append("pullback.horizons must be increasing positive integers")
    except ValueError:
        errs.append(f"pullback.horizons: cannot parse {cfg.horizons!r}")
    return errs


def n_table(cfg: SimConfig) -> np.ndarray:
    return np.array([float(v) for v in cfg.n_of_z.split(",")])


def horizon_list(cfg: SimConfig) -> list[int]:
    return [int(v) for v in cfg.horizons.split(",")]


def _format_value(val) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, float):
        return f"{val:.17g}"
    return str(val)


def normalize_config(cfg: SimConfig) -> str:
    """Canonical text: every key explicit, schema order, normalized values."""
    lines = []
    for f in fields(SimConfig):
        key = _ATTR_TO_KEY[f.name]
        lines.append(f"{key} = {_format_value(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: SimConfig) -> str:
    """Experiment identity: hash of the normalized text minus output location."""
    lines = [ln for ln in normalize_config(cfg).splitlines()
             if not ln.startswith("output.dir ")]
    return hashlib.sha256("\n".join(lines).encode()).hexdigest()[:16]

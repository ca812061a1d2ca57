"""Batch front-end: deterministic experiment orchestration.

Subcommands: simulate | pullback | cocycle-check | validate | spectrum |
gen-noise.  All randomness flows through noise paths derived from the config
seed (or a noise-path file); given a seed, every artifact is bitwise
reproducible.  Exit codes: 0 success, 1 validation failure, 2 numerical
abort; failures emit a JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .attractor import (
    PullbackConfig,
    cocycle_check,
    flow_estimate,
    growth_diagnostic,
    pullback_run,
    sample_initial_ball,
)
from .config import (
    ConfigError,
    SimConfig,
    config_hash,
    horizon_list,
    n_table,
    normalize_config,
    parse_config,
)
from .forcing import (
    ForcingSetup,
    PeriodicFlux,
    build_forcing,
    extend_noise_path,
    load_noise_path,
    make_noise_model,
    make_noise_path,
    save_noise_path,
)
from .integrator import (
    BlowupError,
    CFLViolation,
    save_snapshot,
    simulate,
    write_diagnostics_csv,
)
from .lift import BoundaryFlux, BoundaryMode, mode_flux
from .operators import build_context, unit_eigenmode
from .selfcheck import run_battery
from .spectral import Grid, build_vertical_operator, make_profile


@dataclass
class Runtime:
    cfg: SimConfig
    grid: Grid
    ctx: object
    forcing: ForcingSetup
    chash: str


def build_runtime(cfg: SimConfig) -> Runtime:
    grid = Grid(nx=cfg.nx, ny=cfg.ny, nz=cfg.nz)
    table = n_table(cfg)
    profile = make_profile(cfg.f0, table[0] if table.size == 1 else table, cfg.nz)
    vop = build_vertical_operator(profile, cfg.nz)
    ctx = build_context(grid, vop, nu=cfg.nu, beta=cfg.beta)

    if cfg.noise_file:
        path = load_noise_path(cfg.noise_file)
        if path.n_modes != cfg.n_modes:
            raise ConfigError([f"noise file has {path.n_modes} modes, config wants {cfg.n_modes}"])
        if abs(path.dt_noise - cfg.dt_noise) > 1e-12:
            raise ConfigError([f"noise file dt_noise={path.dt_noise} != config {cfg.dt_noise}"])
    else:
        path = make_noise_path(cfg.seed, cfg.n_modes, cfg.dt_noise,
                               cfg.noise_t_min, cfg.noise_t_max)
    model = make_noise_model(grid, cfg.n_modes, q0=cfg.q0, p=cfg.p, tau_c=cfg.tau_c)

    if cfg.amplitude != 0.0 and (cfg.mode_k, cfg.mode_l) == (0, 0):
        raise ConfigError(["periodic.mode must not be (0, 0) (mean-zero flux)"])
    mode = BoundaryMode(cfg.mode_k ** 2 + cfg.mode_l ** 2, cfg.mode_k, cfg.mode_l, 0)
    coef = cfg.amplitude * mode_flux(grid, mode).coef
    periodic = PeriodicFlux(BoundaryFlux(coef), phase=cfg.phase)

    forcing = build_forcing(grid, vop, model, periodic, path)
    return Runtime(cfg=cfg, grid=grid, ctx=ctx, forcing=forcing, chash=config_hash(cfg))


def initial_field(rt: Runtime) -> np.ndarray:
    cfg, ctx = rt.cfg, rt.ctx
    if cfg.init_kind == "zero":
        return np.zeros((cfg.nz, cfg.ny, cfg.nx // 2 + 1), dtype=complex)
    if cfg.init_kind == "eigenmode":
        return cfg.init_amplitude * unit_eigenmode(ctx, cfg.init_m, cfg.init_l, cfg.init_k)
    return sample_initial_ball(ctx, cfg.init_amplitude ** 2, 1, cfg.init_modes,
                               "sphere", cfg.seed)[0]


def _outdir(rt: Runtime) -> Path:
    out = Path(rt.cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(normalize_config(rt.cfg), encoding="utf-8")
    return out


def cmd_simulate(rt: Runtime) -> int:
    cfg = rt.cfg
    out = _outdir(rt)
    u0 = initial_field(rt)
    res = simulate(rt.ctx, rt.forcing, u0, cfg.t0, cfg.t1, cfg.dt,
                   snapshot_every=cfg.snapshot_every, linear_only=cfg.linear_only)
    write_diagnostics_csv(out / "diagnostics.csv", res.diagnostics,
                          config_hash=rt.chash)
    for i, (t, u) in enumerate(res.snapshots):
        save_snapshot(out / f"snapshot_{i:05d}.bin", rt.grid, u, t=t,
                      n=round(t / cfg.dt), dt=cfg.dt, config_hash=rt.chash)
    print(f"simulate: {len(res.diagnostics)} steps, "
          f"final ||u||_H = {res.diagnostics[-1].h if res.diagnostics else 0.0:.6g}, "
          f"{len(res.snapshots)} snapshots -> {out}")
    return 0


def cmd_pullback(rt: Runtime) -> int:
    cfg = rt.cfg
    out = _outdir(rt)
    pcfg = PullbackConfig(horizons=tuple(horizon_list(cfg)), ensemble=cfg.ensemble,
                          sampling_rule=cfg.sampling_rule, leading_modes=cfg.leading_modes,
                          phase=cfg.phase, seed=cfg.seed,
                          quad_horizon=cfg.quad_horizon or None)
    est = pullback_run(pcfg, rt.ctx, rt.forcing, cfg.dt)

    # Growth slope from flowing the largest-horizon estimate forward over
    # whatever the path still covers, with >= 50 recorded times.
    path = rt.forcing.path
    avail = path.t_max
    slope = float("nan")
    rec_steps = max(1, int(np.floor(avail / 50.0 / cfg.dt)))
    t_end = 50 * rec_steps * cfg.dt
    if t_end > 0 and avail >= t_end:
        series = flow_estimate(rt.ctx, rt.forcing, est, cfg.dt, t_end,
                               record_every=rec_steps * cfg.dt)
        slope = growth_diagnostic(rt.ctx, series[1:]).slope

    with open(out / "attractor_report.csv", "w", encoding="utf-8") as fh:
        fh.write(f"# config={rt.chash} version={__version__}\n")
        fh.write("T,diameter,hausdorff_prev,xi_star,slope\n")
        for T in est.horizons:
            hprev = est.hausdorff_prev.get(T, float("nan"))
            fh.write(f"{T},{est.diameters[T]:.17g},{hprev:.17g},"
                     f"{est.xi_star[T]:.17g},{slope:.17g}\n")
    for T in est.horizons:
        for i, u in enumerate(est.endpoints[T]):
            save_snapshot(out / f"endpoint_T{T}_{i:03d}.bin", rt.grid, u, t=0.0,
                          n=0, dt=cfg.dt, config_hash=rt.chash)
    print(f"pullback: horizons {list(est.horizons)}, diameters "
          f"{[f'{est.diameters[T]:.3e}' for T in est.horizons]}, "
          f"growth slope {slope:.3e} -> {out}")
    return 0


def cmd_cocycle_check(rt: Runtime) -> int:
    cfg = rt.cfg
    u0 = initial_field(rt)
    dev = cocycle_check(rt.ctx, rt.forcing, cfg.cocycle_s, cfg.cocycle_t, u0, cfg.dt)
    print(f"cocycle-check: s={cfg.cocycle_s} t={cfg.cocycle_t} deviation={dev:.3e}")
    if dev != 0.0:
        _error_record("cocycle", f"nonzero cocycle deviation {dev:.3e}", 1)
        return 1
    return 0


def cmd_validate(rt: Runtime) -> int:
    results = run_battery(rt.ctx, rt.forcing)
    width = max(len(name) for name, _, _ in results)
    failed = 0
    for name, ok, detail in results:
        status = "PASS" if ok else "FAIL"
        extra = f"  {detail}" if detail else ""
        print(f"{name:<{width}}  {status}{extra}")
        failed += 0 if ok else 1
    print(f"validate: {len(results) - failed}/{len(results)} checks passed")
    if failed:
        _error_record("validate", f"{failed} invariant checks failed", 1)
        return 1
    return 0


def cmd_spectrum(rt: Runtime) -> int:
    ctx = rt.ctx
    print(f"lambda1 = {ctx.lambda1:.10g}")
    print("m  mu_m")
    for m in range(min(8, ctx.vop.nz)):
        print(f"{m}  {ctx.vop.mu[m]:.10g}")
    return 0


def cmd_gen_noise(cfg: SimConfig) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    target = Path(cfg.noise_file) if cfg.noise_file else out / "noise.bin"
    if target.exists():
        path = extend_noise_path(load_noise_path(target), cfg.noise_t_min, cfg.noise_t_max)
        action = "extended"
    else:
        path = make_noise_path(cfg.seed, cfg.n_modes, cfg.dt_noise,
                               cfg.noise_t_min, cfg.noise_t_max)
        action = "created"
    save_noise_path(path, target)
    print(f"gen-noise: {action} {target} covering [{path.t_min}, {path.t_max}] "
          f"({path.n_modes} modes, dt_noise={path.dt_noise})")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "pullback": cmd_pullback,
    "cocycle-check": cmd_cocycle_check,
    "validate": cmd_validate,
    "spectrum": cmd_spectrum,
}


def _error_record(kind: str, message: str, code: int) -> None:
    print(json.dumps({"error": kind, "message": message, "exit_code": code}),
          file=sys.stderr)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="stochqg",
        description="Stochastic 3D quasigeostrophic simulator and attractor lab.")
    parser.add_argument("command", choices=sorted(_COMMANDS) + ["gen-noise"])
    parser.add_argument("config", nargs="?", help="key-value config file "
                        "(omit to use built-in defaults)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry (repeatable)")
    args = parser.parse_args(argv)

    try:
        text = Path(args.config).read_text(encoding="utf-8") if args.config else ""
        for item in args.set:
            text += "\n" + item.replace("=", " = ", 1)
        cfg = parse_config(text)
        if args.command == "gen-noise":
            # Creates or extends the noise file; needs no operator tables.
            return cmd_gen_noise(cfg)
        rt = build_runtime(cfg)
    except ConfigError as exc:
        _error_record("config", str(exc), 1)
        return 1
    except (OSError, ValueError) as exc:
        _error_record("setup", str(exc), 1)
        return 1

    try:
        return _COMMANDS[args.command](rt)
    except (CFLViolation, BlowupError) as exc:
        _error_record("numerical", str(exc), 2)
        return 2
    except ValueError as exc:
        _error_record("invalid-request", str(exc), 1)
        return 1


if __name__ == "__main__":
    sys.exit(main())

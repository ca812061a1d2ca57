"""Driving processes: colored OU boundary noise, periodic flux, and their lift.

The white-in-time boundary flux is approximated by per-mode Ornstein-Uhlenbeck
processes with correlation time tau_c, stationary unit variance and covariance
weights q_i = q0 (1 + k^2 + l^2)^(-p) on the real boundary basis.  The
dynamics consumes only the harmonic lift of the flux,

    lift(t) = sum_i sqrt(q_i) zeta_i(t) G~(e_i)  +  sin(2pi (t + phase)) G~(u0),

since the interior part of the compensating process cancels from the
transformed equation and from the streamfunction reconstruction.

Noise paths store Wiener increments on a fixed grid dt_noise, indexed by
*absolute* step number so that shifted paths read the same stored values
(W(., theta_s omega) = W(. + s, omega) - W(s, omega) holds bitwise when the
grids align).  The OU state lives on the noise grid and is sample-held in
between; all its one-step updates are exact.  zeta(t) is a deterministic
function of the path: the stationary draw is anchored at the path's first
gridpoint and recursed forward, which is what makes the solution operator a
genuine cocycle over the stored path.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .lift import BoundaryFlux, BoundaryMode, LiftField, boundary_modes, precompute_mode_lifts, solve_lift
from .operators import OperatorContext, norm_h
from .spectral import Grid, VerticalOperator

_NS_INCREMENTS = 0
_NS_INIT = 1
_NS_ENSEMBLE = 2
_IDX_OFFSET = 1 << 62
_MAGIC = b"SQGNOIS1"
_HEADER = struct.Struct("<8sIQIddd")  # magic, version, seed, n_modes, dt_noise, t_min, t_max
_FILE_VERSION = 1


def _stream(seed: int, namespace: int, *key: int) -> np.random.Generator:
    enc = tuple(int(k) + _IDX_OFFSET for k in key)
    return np.random.default_rng(np.random.SeedSequence((int(seed), namespace) + enc))


@dataclass(frozen=True)
class NoiseModel:
    """Truncated boundary-noise covariance and correlation time."""

    n_modes: int
    q0: float
    p: float
    tau_c: float
    modes: tuple[BoundaryMode, ...]
    q: np.ndarray  # (n_modes,) per-mode variance weights

    @property
    def trace(self) -> float:
        """Sum of the covariance weights (finite by truncation)."""
        return float(self.q.sum())


def make_noise_model(grid: Grid, n_modes: int, q0: float, p: float, tau_c: float) -> NoiseModel:
    if tau_c <= 0.0:
        raise ValueError("tau_c must be positive")
    if q0 < 0.0:
        raise ValueError("q0 must be nonnegative")
    modes = tuple(boundary_modes(grid, n_modes))
    q = np.array([q0 * (1.0 + m.kh2) ** (-p) for m in modes])
    return NoiseModel(n_modes=n_modes, q0=float(q0), p=float(p), tau_c=float(tau_c),
                      modes=modes, q=q)


@dataclass(frozen=True)
class PeriodicFlux:
    """Deterministic top-face flux u0 * sin(2pi (t + phase)), period 1."""

    u0: BoundaryFlux
    phase: float = 0.0

    def __post_init__(self):
        if self.u0.coef[0, 0] != 0.0:
            raise ValueError("periodic flux amplitude must be mean-zero")

    period = 1.0


@dataclass(frozen=True)
class NoisePath:
    """Wiener increments per boundary mode on an absolute step grid.

    ``local_shift`` realizes the Wiener shift theta_s: local step j of the
    shifted path reads absolute step j + local_shift.  Increments are lazily
    generated from namespaced seed streams keyed by (seed, block) so any
    window of any length reproduces bitwise, and time extension preserves
    existing values.
    """

    seed: int
    n_modes: int
    dt_noise: float
    i0_abs: int
    n_steps: int
    local_shift: int = 0
    _stored: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    _BLOCK = 1024

    @property
    def t_min(self) -> float:
        return (self.i0_abs - self.local_shift) * self.dt_noise

    @property
    def t_max(self) -> float:
        return (self.i0_abs + self.n_steps - self.local_shift) * self.dt_noise

    @property
    def increments(self) -> np.ndarray:
        """(n_modes, n_steps) Wiener increments (variance dt_noise each)."""
        if self._stored is not None:
            return self._stored
        got = self._cache.get("increments")
        if got is None:
            got = self._generate(self.i0_abs, self.n_steps)
            self._cache["increments"] = got
        return got

    def _generate(self, j0: int, n: int) -> np.ndarray:
        out = np.empty((self.n_modes, n))
        sqh = np.sqrt(self.dt_noise)
        b = self._BLOCK
        j = j0
        while j < j0 + n:
            blk = j // b
            lo = max(j0, blk * b)
            hi = min(j0 + n, (blk + 1) * b)
            block = _stream(self.seed, _NS_INCREMENTS, blk).standard_normal((self.n_modes, b))
            out[:, lo - j0:hi - j0] = block[:, lo - blk * b:hi - blk * b] * sqh
            j = hi
        return out

    def abs_step(self, t: float) -> int:
        """Absolute step index of a local time on the noise grid."""
        j_local = round(t / self.dt_noise)
        if abs(j_local * self.dt_noise - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not on the noise grid (dt_noise={self.dt_noise})")
        j = j_local + self.local_shift
        if j < self.i0_abs or j > self.i0_abs + self.n_steps:
            raise ValueError(f"time {t} outside path range [{self.t_min}, {self.t_max}]")
        return j

    def unit_normal(self, j_abs: int) -> np.ndarray:
        """Standard normals of the increment over [j_abs, j_abs+1] steps."""
        if j_abs < self.i0_abs or j_abs >= self.i0_abs + self.n_steps:
            raise ValueError(f"absolute step {j_abs} outside stored range")
        return self.increments[:, j_abs - self.i0_abs] / np.sqrt(self.dt_noise)

    def stationary_draw(self) -> np.ndarray:
        """Dedicated stationary N(0,1) draw anchored at the path start."""
        return _stream(self.seed, _NS_INIT, self.i0_abs).standard_normal(self.n_modes)


def make_noise_path(seed: int, n_modes: int, dt_noise: float, t_min: float, t_max: float) -> NoisePath:
    if dt_noise <= 0.0:
        raise ValueError("dt_noise must be positive")
    if not 0 <= int(seed) < (1 << 63):
        raise ValueError("seed must be a nonnegative 63-bit integer")
    i0 = round(t_min / dt_noise)
    i1 = round(t_max / dt_noise)
    if abs(i0 * dt_noise - t_min) > 1e-9 or abs(i1 * dt_noise - t_max) > 1e-9:
        raise ValueError("t_min, t_max must lie on the dt_noise grid")
    if i1 <= i0:
        raise ValueError("t_max must exceed t_min")
    return NoisePath(seed=int(seed), n_modes=int(n_modes), dt_noise=float(dt_noise),
                     i0_abs=i0, n_steps=i1 - i0)


def shift_path(path: NoisePath, s: float) -> NoisePath:
    """theta_s: relabel local time so that local t reads absolute t + s."""
    js = round(s / path.dt_noise)
    if abs(js * path.dt_noise - s) > 1e-9 * max(1.0, abs(s)):
        raise ValueError("shift must be a multiple of dt_noise")
    return NoisePath(seed=path.seed, n_modes=path.n_modes, dt_noise=path.dt_noise,
                     i0_abs=path.i0_abs, n_steps=path.n_steps,
                     local_shift=path.local_shift + js, _stored=path._stored,
                     _cache=path._cache)


def extend_noise_path(path: NoisePath, t_min: float, t_max: float) -> NoisePath:
    """Widen the covered window, keeping every existing increment bitwise.

    New indices are filled from the seed streams (identical to what a fresh
    generation would produce); stored values from a loaded file win on the
    overlap.
    """
    i0_new = round((t_min + path.local_shift * path.dt_noise) / path.dt_noise)
    i1_new = round((t_max + path.local_shift * path.dt_noise) / path.dt_noise)
    i0 = min(i0_new, path.i0_abs)
    i1 = max(i1_new, path.i0_abs + path.n_steps)
    out = NoisePath(seed=path.seed, n_modes=path.n_modes, dt_noise=path.dt_noise,
                    i0_abs=i0, n_steps=i1 - i0, local_shift=path.local_shift)
    if path._stored is not None:
        inc = out._generate(i0, i1 - i0)
        lo = path.i0_abs - i0
        inc[:, lo:lo + path.n_steps] = path._stored
        return NoisePath(seed=path.seed, n_modes=path.n_modes, dt_noise=path.dt_noise,
                         i0_abs=i0, n_steps=i1 - i0, local_shift=path.local_shift,
                         _stored=inc)
    return out


def save_noise_path(path: NoisePath, fname) -> None:
    header = _HEADER.pack(_MAGIC, _FILE_VERSION, path.seed, path.n_modes,
                          path.dt_noise, path.t_min, path.t_max)
    with open(fname, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(path.increments, dtype="<f8").tobytes())


def load_noise_path(fname) -> NoisePath:
    with open(fname, "rb") as fh:
        magic, version, seed, n_modes, dt_noise, t_min, t_max = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != _MAGIC:
            raise ValueError(f"not a noise-path file (magic {magic!r})")
        if version != _FILE_VERSION:
            raise ValueError(f"unsupported noise-path version {version}")
        n_steps = round((t_max - t_min) / dt_noise)
        data = np.frombuffer(fh.read(), dtype="<f8").reshape(n_modes, n_steps).copy()
    return NoisePath(seed=seed, n_modes=n_modes, dt_noise=dt_noise,
                     i0_abs=round(t_min / dt_noise), n_steps=n_steps, _stored=data)


@dataclass(frozen=True)
class OUBoundaryState:
    """Per-mode colored-noise state at an absolute noise gridpoint."""

    zeta: np.ndarray
    j: int
    dt_noise: float

    @property
    def t(self) -> float:
        """Time on the absolute clock of the generating path."""
        return self.j * self.dt_noise


def _ou_coeffs(model: NoiseModel, h: float) -> tuple[float, float]:
    a = np.exp(-h / model.tau_c)
    return a, np.sqrt(-np.expm1(-2.0 * h / model.tau_c))


def init_ou_state(model: NoiseModel, path: NoisePath, t: float, init: str = "stationary") -> OUBoundaryState:
    """OU state at local time t, deterministic given (path, t).

    "stationary": exact standard-normal draw at the path start, recursed
    forward along the stored increments.  "burnin": zero start at the path
    start (cross-validation mode; agrees in law once t - t_min >> tau_c).
    """
    if model.n_modes != path.n_modes:
        raise ValueError("model and path disagree on the mode count")
    j = path.abs_step(t)
    if init == "stationary":
        zeta = path.stationary_draw()
    elif init == "burnin":
        zeta = np.zeros(model.n_modes)
    else:
        raise ValueError(f"unknown init mode {init!r}")
    a, b = _ou_coeffs(model, path.dt_noise)
    for jj in range(path.i0_abs, j):
        zeta = a * zeta + b * path.unit_normal(jj)
    return OUBoundaryState(zeta=zeta, j=j, dt_noise=path.dt_noise)


def advance_ou(state: OUBoundaryState, dt: float, path: NoisePath, model: NoiseModel) -> OUBoundaryState:
    """Exact OU update over dt (an integer multiple of dt_noise).

    Composed one-step exact updates: the conditional law over any span is
    exactly mean e^{-dt/tau} zeta, variance 1 - e^{-2 dt/tau}, and the
    semigroup property holds bitwise on shared increments.
    """
    h = path.dt_noise
    n = round(dt / h)
    if n < 0 or abs(n * h - dt) > 1e-9 * max(1.0, abs(dt)):
        raise ValueError(f"dt={dt} is not a nonnegative multiple of dt_noise={h}")
    if n == 0:
        return state
    a, b = _ou_coeffs(model, h)
    zeta = state.zeta
    for jj in range(state.j, state.j + n):
        zeta = a * zeta + b * path.unit_normal(jj)
    return OUBoundaryState(zeta=zeta, j=state.j + n, dt_noise=h)


def periodic_factor(periodic: PeriodicFlux, step_index: int, dt: float) -> float:
    """sin(2pi (t + phase)) at t = step_index * dt on the absolute clock.

    When 1/dt is an exact integer the index is reduced modulo the period
    first, so the factor is bitwise 1-periodic.
    """
    p = int(round(1.0 / dt))
    if p > 0 and p * dt == 1.0:
        step_index = step_index % p
    return float(np.sin(2.0 * np.pi * (step_index * dt + periodic.phase)))


def stack_lifts(lifts: Sequence[LiftField]) -> np.ndarray:
    return np.stack([l.coef for l in lifts]) if len(lifts) else np.zeros((0, 1, 1, 1), dtype=complex)


def lift_at(state: OUBoundaryState, periodic: PeriodicFlux, model: NoiseModel,
            lifts, periodic_lift=None, grid: Grid | None = None,
            vop: VerticalOperator | None = None, step_index: int | None = None,
            dt: float | None = None) -> np.ndarray:
    """Harmonic lift at time t = step_index * dt (default: the OU gridpoint).

    lift(t) = sum_i sqrt(q_i) zeta_i l_i + sin(2pi (t + phase)) G~(u0); the
    stochastic part is sample-held at the state's gridpoint.
    """
    basis = lifts if isinstance(lifts, np.ndarray) else stack_lifts(lifts)
    if basis.shape[0] != model.n_modes:
        raise ValueError(f"{basis.shape[0]} precomputed lifts for {model.n_modes} modes")
    if periodic_lift is None:
        if grid is None or vop is None:
            raise ValueError("periodic_lift or (grid, vop) required")
        periodic_lift = solve_lift(grid, vop, periodic.u0).coef
    else:
        periodic_lift = getattr(periodic_lift, "coef", periodic_lift)
    if step_index is None:
        step_index, dt = state.j, state.dt_noise
    factor = periodic_factor(periodic, step_index, dt)
    out = factor * periodic_lift
    if model.n_modes:
        out = out + np.tensordot(np.sqrt(model.q) * state.zeta, basis, axes=(0, 0))
    return out


@dataclass(frozen=True)
class ForcingSetup:
    """Precomputed bundle consumed by the integrator and the attractor lab.

    ``entries`` is the sparse form of the lift basis: per mode, the nonzero
    columns (li, ki) with their vertical profiles, so assembling the lift
    touches only those columns instead of the dense basis.
    """

    model: NoiseModel
    periodic: PeriodicFlux
    path: NoisePath
    lifts: tuple[LiftField, ...]
    basis: np.ndarray          # (n_modes, nz, ny, nkx)
    periodic_lift: np.ndarray  # (nz, ny, nkx)
    entries: tuple = ()        # per mode: ((li, ki, profile), ...)


def build_forcing(grid: Grid, vop: VerticalOperator, model: NoiseModel,
                  periodic: PeriodicFlux, path: NoisePath) -> ForcingSetup:
    lifts = tuple(precompute_mode_lifts(grid, vop, model.n_modes))
    basis = stack_lifts(lifts) if lifts else np.zeros((0, grid.nz, grid.ny, grid.nkx), dtype=complex)
    plift = solve_lift(grid, vop, periodic.u0).coef
    entries = []
    for lf in lifts:
        cols = np.argwhere(np.any(lf.coef != 0.0, axis=0))
        entries.append(tuple((int(li), int(ki), lf.coef[:, li, ki].copy())
                             for li, ki in cols))
    return ForcingSetup(model=model, periodic=periodic, path=path,
                        lifts=lifts, basis=basis, periodic_lift=plift,
                        entries=tuple(entries))


def setup_lift(setup: ForcingSetup, state: OUBoundaryState,
               step_index: int | None = None, dt: float | None = None) -> np.ndarray:
    """Fast sparse-assembled lift; same combination as lift_at."""
    if step_index is None:
        step_index, dt = state.j, state.dt_noise
    factor = periodic_factor(setup.periodic, step_index, dt)
    out = factor * setup.periodic_lift
    if setup.model.n_modes:
        amp = np.sqrt(setup.model.q) * state.zeta
        for a, cols in zip(amp, setup.entries):
            if a != 0.0:
                for li, ki, prof in cols:
                    out[:, li, ki] += a * prof
    return out


def ensemble_stream(seed: int, *key: int) -> np.random.Generator:
    """Deterministic per-member RNG stream (seed, member-index, ...)."""
    return _stream(seed, _NS_ENSEMBLE, *key)


def interior_ou_modes(ctx: OperatorContext, model: NoiseModel, path: NoisePath,
                      lifts: Sequence[LiftField], t0: float, t1: float,
                      track: Sequence[tuple[int, int]], y0: float = 0.0,
                      init: str = "stationary"):
    """Validation-only interior eigenmode coefficients driven by the lift.

    For a tracked pair (boundary-mode index i, vertical mode m), the full
    compensating field's eigencoefficient obeys y' = -nu lam (y - g(t)) with
    g(t) = sqrt(q_i) zeta_i(t) <l_i, e_k>_H, integrated exactly per noise step
    with the sample-held driving.  Returns (times, Y) with Y of shape
    (len(track), n_times).
    """
    h = path.dt_noise
    j0, j1 = path.abs_step(t0), path.abs_step(t1)
    state = init_ou_state(model, path, t0, init=init)
    zw = ctx.zw
    gammas, decays = [], []
    for (i, m) in track:
        mode = model.modes[i]
        prof = _lift_profile(lifts[i], ctx.grid, mode)
        gamma = np.sqrt(model.q[i]) * float(zw @ (prof * ctx.vop.phi[:, m]))
        lam = mode.kh2 + ctx.vop.mu[m]
        gammas.append(gamma)
        decays.append(np.exp(-ctx.nu * lam * h))
    gammas = np.array(gammas)
    decays = np.array(decays)
    idx = np.array([i for (i, _) in track])

    n = j1 - j0
    times = t0 + h * np.arange(n + 1)
    Y = np.empty((len(track), n + 1))
    y = np.full(len(track), float(y0))
    Y[:, 0] = y
    a, b = _ou_coeffs(model, h)
    zeta = state.zeta
    for s in range(n):
        y = decays * y + (1.0 - decays) * gammas * zeta[idx]
        zeta = a * zeta + b * path.unit_normal(j0 + s)
        Y[:, s + 1] = y
    return times, Y


def _lift_profile(lift: LiftField, grid: Grid, mode: BoundaryMode) -> np.ndarray:
    """Vertical profile of a single-mode lift, normalized to the real basis.

    The stored column holds amp * profile with amp the unit-mode coefficient;
    dividing by amp recovers the profile of the unit-flux two-point solve in
    the real-basis normalization (<l_i, e_k>_H = sum_j w_j profile_j phi_m,j).
    """
    li = mode.l % grid.ny
    col = lift.coef[:, li, mode.k]
    amp = 1.0 / (2.0 * np.pi * np.sqrt(2.0))
    c = amp if mode.kind == "cos" else -1j * amp
    return (col / c).real


def temperedness_series(ctx: OperatorContext, setup: ForcingSetup, horizon: float,
                        sample_dt: float = 1.0, t0: float = 0.0):
    """Diagnostic series log+ ||lift(theta_t omega)||_H / |t| and its tail slope.

    The slope is the least-squares slope of log+ ||lift||_H against t over the
    tail half of the series; it is statistically zero for a stationary lift
    and decays like (log c)/t for the bounded deterministic-only lift.
    """
    path = setup.path
    h = path.dt_noise
    per = round(sample_dt / h)
    if per <= 0 or abs(per * h - sample_dt) > 1e-9:
        raise ValueError("sample_dt must be a positive multiple of dt_noise")
    n = int(round(horizon / sample_dt))
    if n < 2:
        raise ValueError("horizon too short")
    state = init_ou_state(setup.model, path, t0)
    times = np.empty(n)
    logplus = np.empty(n)
    for k in range(1, n + 1):
        state = advance_ou(state, sample_dt, path, setup.model)
        lift = setup_lift(setup, state)
        times[k - 1] = k * sample_dt
        logplus[k - 1] = max(np.log(max(norm_h(ctx, lift), 1e-300)), 0.0)
    ratio = logplus / np.abs(times)
    slope, se = tail_slope(times, logplus)
    return times, ratio, slope, se


def tail_slope(times: np.ndarray, values: np.ndarray) -> tuple[float, float]:
    """Least-squares slope and standard error over the tail half of a series."""
    n = len(times)
    t = times[n // 2:]
    y = values[n // 2:]
    if len(t) < 3:
        raise ValueError("too few points for a tail slope")
    tbar = t.mean()
    sxx = float(np.sum((t - tbar) ** 2))
    slope = float(np.sum((t - tbar) * (y - y.mean())) / sxx)
    resid = y - (y.mean() + slope * (t - tbar))
    sigma2 = float(np.sum(resid ** 2) / max(len(t) - 2, 1))
    return slope, float(np.sqrt(sigma2 / sxx))

"""Random/pullback attractor machinery: xi*, absorbing ball, cocycle checks,
pullback ensembles, invariance, and growth diagnostics.

The stationary energy bound

    xi*(omega) = (beta^2/nu) int_{-inf}^0 e^{nu lam1 tau} ||lift_x(theta_tau omega)||_{V'}^2 dtau

is estimated by trapezoid quadrature along the realized lift over a finite
backward horizon; the ball of squared H-radius 2 xi* is forward invariant and
pullback absorbing, and seeds the attractor ensembles.  All attractor claims
are evaluated at integer times (the period of the deterministic forcing),
matching the discrete-time restriction under which the flow is a random
dynamical system; continuous-time sets are produced by flowing the
integer-time estimate forward.  Ensemble members evolve under the same noise
realization with per-member seed streams, so results are deterministic
regardless of scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forcing import (
    ForcingSetup,
    advance_ou,
    ensemble_stream,
    init_ou_state,
    setup_lift,
    shift_path,
    tail_slope,
)
from .integrator import initial_state, simulate, step, steps_per_noise
from .operators import OperatorContext, deriv_x, norm_h, norms, unit_eigenmode


@dataclass(frozen=True)
class PullbackConfig:
    """Horizons, ensemble layout, and the fixed periodic phase omega_2."""

    horizons: tuple[int, ...]
    ensemble: int
    sampling_rule: str = "sphere"
    leading_modes: int = 12
    phase: float = 0.0
    seed: int = 0
    quad_horizon: float | None = None

    def __post_init__(self):
        if list(self.horizons) != sorted(self.horizons) or len(self.horizons) == 0:
            raise ValueError("horizons must be a nonempty increasing sequence")
        if self.ensemble < 8:
            raise ValueError("ensemble size must be at least 8")
        if self.sampling_rule not in ("sphere", "ball"):
            raise ValueError(f"unknown sampling rule {self.sampling_rule!r}")
        if not 0.0 <= self.phase < 1.0:
            raise ValueError("phase must lie in [0, 1)")


@dataclass
class AttractorEstimate:
    """Pullback endpoints at the observation time, per horizon."""

    horizons: tuple[int, ...]
    endpoints: dict            # T -> list of spectral arrays at time 0
    diameters: dict            # T -> float
    hausdorff_prev: dict       # T -> distance to the previous horizon's set
    xi_star: dict              # T -> xi*(theta_{-T} omega) used for the ball
    config: PullbackConfig


@dataclass(frozen=True)
class XiStarEstimate:
    value: float               # trapezoid quadrature
    held_value: float          # left-endpoint-held quadrature (xi recursion limit)
    truncation_bound: float
    horizon: float

    @property
    def rule_gap(self) -> float:
        return abs(self.value - self.held_value)


def default_quad_horizon(ctx: OperatorContext) -> float:
    return 20.0 / (ctx.nu * ctx.lambda1)


def estimate_xi_star(ctx: OperatorContext, forcing: ForcingSetup, at: float,
                     quad_horizon: float | None = None, dt: float | None = None) -> XiStarEstimate:
    """Backward exponentially weighted quadrature of the lift source at `at`.

    Evaluates (beta^2/nu) ||lift_x||_{V'}^2 on the step grid over
    [at - H, at]; the reported truncation bound is
    e^{-nu lam1 H} (sup observed source)/(nu lam1).
    """
    path = forcing.path
    h = path.dt_noise
    if dt is None:
        dt = h
    m = steps_per_noise(dt, h)
    rate = ctx.nu * ctx.lambda1
    horizon = default_quad_horizon(ctx) if quad_horizon is None else float(quad_horizon)
    if horizon < 10.0 / rate:
        raise ValueError(f"quad_horizon must be at least 10/(nu lam1) = {10.0 / rate:g}")
    n = int(np.ceil(horizon / dt))
    horizon = n * dt
    n_at = round(at / dt)
    if abs(n_at * dt - at) > 1e-9 * max(1.0, abs(at)):
        raise ValueError("quadrature endpoint must lie on the step grid")
    t_start = (n_at - n) * dt
    if t_start < path.t_min - 1e-9 or at > path.t_max + 1e-9:
        raise ValueError(f"path [{path.t_min}, {path.t_max}] does not cover "
                         f"[{t_start}, {at}]")

    shift_steps = path.local_shift * m
    state = init_ou_state(forcing.model, path,
                          (np.floor_divide(n_at - n, m)) * h)
    src = np.empty(n + 1)
    for k in range(n + 1):
        nn = n_at - n + k
        j_here = nn // m + path.local_shift
        if j_here > state.j:
            state = advance_ou(state, (j_here - state.j) * h, path, forcing.model)
        lift = setup_lift(forcing, state, step_index=nn + shift_steps, dt=dt)
        src[k] = (ctx.beta ** 2 / ctx.nu) * norms(ctx, deriv_x(ctx, lift)).vdual ** 2
    tau = dt * np.arange(-n, 1)
    w = np.exp(rate * tau)
    trap = float(np.trapezoid(w * src, dx=dt))
    held = float(np.sum(w[:-1] * src[:-1] * (1.0 - np.exp(-rate * dt)) / rate))
    bound = float(np.exp(-rate * horizon) * src.max() / rate)
    return XiStarEstimate(value=trap, held_value=held, truncation_bound=bound,
                          horizon=horizon)


def absorbing_ball(xi_star: float) -> float:
    """Squared-H-norm threshold 2 xi* of the forward-invariant absorbing ball."""
    if xi_star < 0.0:
        raise ValueError("xi_star must be nonnegative")
    return 2.0 * xi_star


def leading_real_modes(ctx: OperatorContext, count: int) -> list[tuple[int, int, int, str]]:
    """The `count` lowest-eigenvalue real A-modes (m, l, k, kind)."""
    grid = ctx.grid
    cands = []
    kmax_x = (grid.nx - 1) // 3
    kmax_y = (grid.ny - 1) // 3
    for m in range(grid.nz):
        for k in range(0, kmax_x + 1):
            lrange = range(0, kmax_y + 1) if k == 0 else range(-kmax_y, kmax_y + 1)
            for l in lrange:
                if (m, l, k) == (0, 0, 0):
                    continue
                lam = ctx.vop.mu[m] + k * k + l * l
                kinds = ("cos",) if (k == 0 and l == 0) else ("cos", "sin")
                for kind in kinds:
                    cands.append((lam, m, l, k, kind))
    cands.sort(key=lambda c: (c[0], c[1], c[3], c[2], c[4]))
    if count > len(cands):
        raise ValueError("not enough resolvable modes")
    return [(m, l, k, kind) for (_, m, l, k, kind) in cands[:count]]


def sample_initial_ball(ctx: OperatorContext, radius2: float, n_members: int,
                        leading: int, rule: str, seed: int, key: tuple = ()) -> list[np.ndarray]:
    """Members on (rule='sphere') or in (rule='ball') the squared-radius ball.

    Coefficients are drawn on the leading orthonormal real eigenmodes and
    rescaled, so every member has exactly the requested H norm.
    """
    modes = leading_real_modes(ctx, leading)
    basis = [unit_eigenmode(ctx, m, l, k, kind) for (m, l, k, kind) in modes]
    out = []
    for i in range(n_members):
        rng = ensemble_stream(seed, *key, i)
        g = rng.standard_normal(len(basis))
        r = np.sqrt(radius2)
        if rule == "ball":
            r *= rng.uniform() ** (1.0 / len(basis))
        g *= r / np.linalg.norm(g)
        u = np.zeros_like(basis[0])
        for c, b in zip(g, basis):
            u += c * b
        out.append(u)
    return out


def dist_h(ctx: OperatorContext, a_set, b_set) -> float:
    """One-sided Hausdorff distance sup_a inf_b ||a - b||_H (exact pairwise)."""
    worst = 0.0
    for a in a_set:
        best = min(norm_h(ctx, a - b) for b in b_set)
        worst = max(worst, best)
    return worst


def hausdorff(ctx: OperatorContext, a_set, b_set) -> float:
    return max(dist_h(ctx, a_set, b_set), dist_h(ctx, b_set, a_set))


def diameter(ctx: OperatorContext, points) -> float:
    d = 0.0
    for i in range(len(points)):
        for j in range(i + 1, len(points)):
            d = max(d, norm_h(ctx, points[i] - points[j]))
    return d


def pullback_run(config: PullbackConfig, ctx: OperatorContext, forcing: ForcingSetup,
                 dt: float, observe_at: float = 0.0) -> AttractorEstimate:
    """Evolve absorbing-ball ensembles from -T to the observation time.

    Every horizon uses the same noise realization; the initial ball at -T has
    squared radius 2 xi*(theta_{-T} omega).
    """
    endpoints, diams, haus, xis = {}, {}, {}, {}
    prev_set = None
    for T in config.horizons:
        t0 = observe_at - T
        xs = estimate_xi_star(ctx, forcing, at=t0, quad_horizon=config.quad_horizon, dt=dt)
        r2 = absorbing_ball(xs.value)
        members = sample_initial_ball(ctx, r2, config.ensemble, config.leading_modes,
                                      config.sampling_rule, config.seed, key=(T,))
        ends = []
        for u0 in members:
            res = simulate(ctx, forcing, u0, t0, observe_at, dt,
                           record_diagnostics=False)
            ends.append(res.final.u)
        endpoints[T] = ends
        diams[T] = diameter(ctx, ends)
        xis[T] = xs.value
        if prev_set is not None:
            haus[T] = hausdorff(ctx, ends, prev_set)
        prev_set = ends
    return AttractorEstimate(horizons=tuple(config.horizons), endpoints=endpoints,
                             diameters=diams, hausdorff_prev=haus, xi_star=xis,
                             config=config)


def cocycle_check(ctx: OperatorContext, forcing: ForcingSetup, s: float, t: float,
                  x: np.ndarray, dt: float) -> float:
    """Max H deviation of phi(s+t, omega, x) vs phi(t, theta_s omega, phi(s, omega, x)).

    Both legs run on aligned step grids with all time-dependent inputs keyed
    to absolute indices, so the deviation is bitwise zero by design.
    """
    for name, val in (("s", s), ("t", t)):
        n = round(val / dt)
        if abs(n * dt - val) > 1e-12 * max(1.0, abs(val)):
            raise ValueError(f"{name} must be a multiple of dt")

    def run(setup, u, a, b):
        if b == a:
            return u
        return simulate(ctx, setup, u, a, b, dt, record_diagnostics=False).final.u

    full = run(forcing, x, 0.0, s + t)
    mid = run(forcing, x, 0.0, s)
    shifted = shift_path(forcing.path, s)
    forcing_s = ForcingSetup(model=forcing.model, periodic=forcing.periodic,
                             path=shifted, lifts=forcing.lifts, basis=forcing.basis,
                             periodic_lift=forcing.periodic_lift, entries=forcing.entries)
    second = run(forcing_s, mid, 0.0, t)
    return norm_h(ctx, full - second)


def invariance_check(estimate: AttractorEstimate, ctx: OperatorContext,
                     forcing: ForcingSetup, t: float, dt: float) -> float:
    """One-sided dist_H(phi(t, omega, A(omega)), A(theta_t omega)).

    A(omega) is the largest-horizon endpoint set of `estimate`; A(theta_t
    omega) is recomputed by a pullback to observation time t on the same path.
    """
    T = estimate.horizons[-1]
    a_now = estimate.endpoints[T]
    if t == 0.0:
        flowed = a_now
    else:
        flowed = [simulate(ctx, forcing, u, 0.0, t, dt, record_diagnostics=False).final.u
                  for u in a_now]
    cfg_t = estimate.config
    est_t = pullback_run(PullbackConfig(horizons=(T,), ensemble=cfg_t.ensemble,
                                        sampling_rule=cfg_t.sampling_rule,
                                        leading_modes=cfg_t.leading_modes,
                                        phase=cfg_t.phase, seed=cfg_t.seed,
                                        quad_horizon=cfg_t.quad_horizon),
                         ctx, forcing, dt, observe_at=t)
    return dist_h(ctx, flowed, est_t.endpoints[T])


@dataclass(frozen=True)
class GrowthDiagnostic:
    times: np.ndarray
    log_plus: np.ndarray
    slope: float
    stderr: float


def growth_diagnostic(ctx: OperatorContext, series) -> GrowthDiagnostic:
    """Tail slope of log+ dist_H(A(theta_t omega), {0}) over an estimate series.

    `series` is a sequence of (t, endpoint set); at least 50 time points.
    """
    if len(series) < 50:
        raise ValueError("need at least 50 time points")
    times = np.array([t for t, _ in series], dtype=float)
    r = np.array([max(norm_h(ctx, u) for u in pts) for _, pts in series])
    log_plus = np.maximum(np.log(np.maximum(r, 1e-300)), 0.0)
    slope, se = tail_slope(times, log_plus)
    return GrowthDiagnostic(times=times, log_plus=log_plus, slope=slope, stderr=se)


def flow_estimate(ctx: OperatorContext, forcing: ForcingSetup,
                  estimate: AttractorEstimate, dt: float, t_end: float,
                  record_every: float = 1.0):
    """Flow the integer-time estimate forward, recording A(theta_t omega).

    Returns a list of (t, endpoint set) suitable for growth_diagnostic; this
    is how continuous-time sets are produced from the discrete-time estimate.
    """
    T = estimate.horizons[-1]
    pts = [u.copy() for u in estimate.endpoints[T]]
    states = [initial_state(ctx, forcing, u, 0.0, dt) for u in pts]
    n_rec = round(record_every / dt)
    out = [(0.0, [s.u for s in states])]
    n_total = round(t_end / dt)
    for k in range(1, n_total + 1):
        states = [step(s, dt, ctx, forcing) for s in states]
        if k % n_rec == 0:
            out.append((k * dt, [s.u for s in states]))
    return out

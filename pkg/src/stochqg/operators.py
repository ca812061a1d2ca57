"""Operators of the transformed evolution equation on the mean-zero state space.

A is the positive self-adjoint operator built from the stratified Laplacian
(periodic in x, y; homogeneous Neumann in z); G = Delta~^{-1} = -A^{-1} is the
inverse on mean-zero fields, fixed with this sign so the streamfunction
reconstruction psi = G(u) + lift closes.  The advective Jacobian J(a, b) =
a_x b_y - a_y b_x is evaluated pseudo-spectrally level by level with 2/3-rule
dealiasing, which makes the trilinear form antisymmetric to rounding.  The
composite operators are

    B(u)       = J(G(u), u)          quadratic advection
    C(lift, u) = J(lift, u)          advection by the boundary lift
    D(u)       = beta * G(u)_x       planetary vorticity drift
    f(lift)    = -beta * lift_x      boundary-induced source

B, C and D are all energy-neutral: their H inner product with u vanishes to
rounding.

All operations are pure functions of (context, fields); the context is
read-only after construction and safe to share.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .spectral import (
    Grid,
    VerticalOperator,
    compute_lambda1,
    forward_transform,
    inverse_transform,
    project_mean_zero,
)

MEAN_ZERO_TOL = 1e-8


@dataclass(frozen=True)
class OperatorContext:
    """Grid, vertical factorization, physical parameters, cached multipliers.

    ``lam[m, l, k] = k^2 + l^2 + mu_m`` is the diagonal of A in the separable
    basis; the single zero entry (0, 0, 0) is the excluded null mode.
    """

    grid: Grid
    vop: VerticalOperator
    nu: float
    beta: float
    f0: float
    lambda1: float
    kh2: np.ndarray        # (ny, nkx)
    lam: np.ndarray        # (nz, ny, nkx)
    inv_lam: np.ndarray    # (nz, ny, nkx), zero at the null slot
    colw: np.ndarray       # (nkx,) rfft column multiplicities
    zw: np.ndarray         # (nz,) trapezoid weights
    sqrtw: np.ndarray      # (nz,)
    yhat: np.ndarray       # (nz, nz) orthonormal vertical eigenvectors
    action: np.ndarray     # (nz, nz) dense vertical operator on levels
    mask: np.ndarray       # (ny, nkx) dealias mask
    dx_mult: np.ndarray    # (1, 1, nkx) i*kx, Nyquist zeroed
    dy_mult: np.ndarray    # (1, ny, 1) i*ky, Nyquist zeroed
    dxm_mult: np.ndarray   # (1, ny, nkx) dealiased i*kx
    dym_mult: np.ndarray   # (1, ny, nkx) dealiased i*ky
    yhat_t: np.ndarray     # contiguous transpose of yhat
    inv_sqrtw: np.ndarray  # (nz,)
    hfac: float            # (2*pi)^2, quadrature prefactor of horizontal sums


def build_context(grid: Grid, vop: VerticalOperator, nu: float, beta: float) -> OperatorContext:
    if nu <= 0.0:
        raise ValueError("viscosity must be positive")
    if beta < 0.0:
        raise ValueError("beta must be nonnegative")
    if vop.nz != grid.nz:
        raise ValueError("vertical operator level count does not match grid")

    kx = grid.kx
    ky = grid.ky
    kh2 = ky[:, None] ** 2 + kx[None, :] ** 2
    lam = vop.mu[:, None, None] + kh2[None, :, :]
    inv_lam = np.zeros_like(lam)
    nonzero = lam > 0.0
    inv_lam[nonzero] = 1.0 / lam[nonzero]

    dx = 1j * kx
    dx[-1] = 0.0  # Nyquist column: odd derivative of a real field is dropped
    dy = 1j * ky.astype(complex)
    dy[grid.ny // 2] = 0.0
    mask = grid.dealias_mask

    return OperatorContext(
        grid=grid, vop=vop, nu=float(nu), beta=float(beta),
        f0=float(vop.profile.f0),
        lambda1=compute_lambda1(vop),
        kh2=kh2, lam=lam, inv_lam=inv_lam,
        colw=grid.column_weight, zw=grid.zweights, sqrtw=vop.sqrtw,
        yhat=vop.yhat, action=vop.action, mask=mask,
        dx_mult=dx[None, None, :], dy_mult=dy[None, :, None],
        dxm_mult=(dx[None, :] * mask)[None, :, :],
        dym_mult=(dy[:, None] * mask)[None, :, :],
        yhat_t=np.ascontiguousarray(vop.yhat.T),
        inv_sqrtw=1.0 / vop.sqrtw,
        hfac=(2.0 * np.pi) ** 2,
    )


def _coef(field) -> np.ndarray:
    """Accept bare spectral arrays or LiftField-like wrappers."""
    return getattr(field, "coef", field)


def _flat(ctx, u):
    nz = ctx.grid.nz
    return u.reshape(nz, -1)


def to_modes(ctx: OperatorContext, u: np.ndarray) -> np.ndarray:
    """Level profiles -> vertical eigenbasis coefficients (same shape).

    The real eigenvector matrix acts on the float view of the complex field
    (one dgemm over re/im columns instead of a complex upcast).
    """
    w = ctx.sqrtw[:, None, None] * u
    flat = w.reshape(ctx.grid.nz, -1).view(np.float64)
    c = ctx.yhat_t @ flat
    return c.view(np.complex128).reshape(u.shape)


def from_modes(ctx: OperatorContext, c: np.ndarray) -> np.ndarray:
    """Vertical eigenbasis coefficients -> level profiles."""
    flat = np.ascontiguousarray(c.reshape(ctx.grid.nz, -1)).view(np.float64)
    u = ctx.yhat @ flat
    return ctx.inv_sqrtw[:, None, None] * u.view(np.complex128).reshape(c.shape)


def _require_mean_zero(ctx, u, what):
    scale = float(np.max(np.abs(u))) or 1.0
    mean = (ctx.zw @ u[:, 0, 0]) / ctx.zw.sum()
    if abs(mean) > MEAN_ZERO_TOL * scale:
        raise ValueError(f"{what} must be mean-zero (defect {abs(mean):.3e})")


def apply_A(ctx: OperatorContext, u: np.ndarray) -> np.ndarray:
    """A u: (k^2 + l^2) u plus the vertical operator on each profile."""
    if not np.any(u):
        return np.zeros_like(u)
    _require_mean_zero(ctx, u, "apply_A input")
    vert = (ctx.action @ _flat(ctx, u)).reshape(u.shape)
    return ctx.kh2[None, :, :] * u + vert


def apply_G(ctx: OperatorContext, f: np.ndarray) -> np.ndarray:
    """G f = Delta~^{-1} f = -A^{-1} f on mean-zero fields.

    Diagonal in the separable basis; the null slot is projected out, so
    A(-G(f)) = f up to rounding.
    """
    if not np.any(f):
        return np.zeros_like(f)
    _require_mean_zero(ctx, f, "apply_G input")
    c = to_modes(ctx, f)
    c *= -ctx.inv_lam
    return from_modes(ctx, c)


def deriv_x(ctx: OperatorContext, fhat: np.ndarray) -> np.ndarray:
    return ctx.dx_mult * fhat


def deriv_y(ctx: OperatorContext, fhat: np.ndarray) -> np.ndarray:
    return ctx.dy_mult * fhat


def jacobian(ctx: OperatorContext, a, b) -> np.ndarray:
    """Dealiased pseudo-spectral J(a, b) = a_x b_y - a_y b_x, level by level.

    Accepts spectral or physical inputs on the context grid; the result is
    mean-zero projected.  Inputs are truncated to the dealias band, so the
    collocation quadrature of any triple product is alias-free.
    """
    grid = ctx.grid
    a = _as_spectral(ctx, _coef(a))
    b = _as_spectral(ctx, _coef(b))
    if not (np.any(a) and np.any(b)):
        return np.zeros((grid.nz, grid.ny, grid.nkx), dtype=complex)
    am = a * ctx.mask[None, :, :]
    bm = b * ctx.mask[None, :, :]
    ax = inverse_transform(grid, deriv_x(ctx, am))
    ay = inverse_transform(grid, deriv_y(ctx, am))
    bx = inverse_transform(grid, deriv_x(ctx, bm))
    by = inverse_transform(grid, deriv_y(ctx, bm))
    jhat = forward_transform(grid, ax * by - ay * bx)
    jhat *= ctx.mask[None, :, :]
    return project_mean_zero(grid, jhat, ctx.zw)


def _as_spectral(ctx, f):
    grid = ctx.grid
    if f.shape == (grid.nz, grid.ny, grid.nx) and not np.iscomplexobj(f):
        return forward_transform(grid, f)
    if f.shape == (grid.nz, grid.ny, grid.nkx):
        return f
    raise ValueError(f"field shape {f.shape} does not match grid")


def apply_B(ctx: OperatorContext, u: np.ndarray) -> np.ndarray:
    """B(u, u) = J(G(u), u)."""
    if not np.any(u):
        return np.zeros_like(u)
    return jacobian(ctx, apply_G(ctx, u), u)


def apply_C(ctx: OperatorContext, lift, u: np.ndarray) -> np.ndarray:
    """C(t, u) = J(lift, u); linear in u and energy-neutral."""
    return jacobian(ctx, lift, u)


def apply_D(ctx: OperatorContext, u: np.ndarray) -> np.ndarray:
    """D(u) = beta * G(u)_x."""
    if ctx.beta == 0.0 or not np.any(u):
        return np.zeros_like(u)
    return deriv_x(ctx, apply_G(ctx, u))


def forcing_f(ctx: OperatorContext, lift) -> np.ndarray:
    """f = beta * (G(Delta~ eta)_x - eta_x) = -beta * lift_x.

    The x-derivative annihilates the kx = 0 column, so the result is
    mean-zero by construction.
    """
    coef = _coef(lift)
    if ctx.beta == 0.0 or not np.any(coef):
        return np.zeros_like(coef)
    return -ctx.beta * deriv_x(ctx, coef)


class Norms(NamedTuple):
    h: float
    v: float
    vdual: float


def inner_h(ctx: OperatorContext, u: np.ndarray, v: np.ndarray) -> float:
    """L2(O) inner product of the real fields behind u, v (quadrature exact)."""
    prod = (u * np.conj(v)).real
    return ctx.hfac * float(np.einsum("j,k,jlk->", ctx.zw, ctx.colw, prod))


def norm_h(ctx: OperatorContext, u: np.ndarray) -> float:
    return float(np.sqrt(max(inner_h(ctx, u, u), 0.0)))


def norms(ctx: OperatorContext, u: np.ndarray) -> Norms:
    """(H, V, V') norms via the diagonal of A in the separable basis.

    V^2 = <A u, u>, (V')^2 = <A^{-1} u, u> with the null mode excluded
    (u is assumed mean-zero for the dual norm).
    """
    c = to_modes(ctx, u)
    p = (c * np.conj(c)).real
    base = ctx.hfac * np.einsum("k,mlk->mlk", ctx.colw, p)
    h2 = float(np.sum(base))
    v2 = float(np.sum(base * ctx.lam))
    vd2 = float(np.sum(base * ctx.inv_lam))
    return Norms(np.sqrt(max(h2, 0.0)), np.sqrt(max(v2, 0.0)), np.sqrt(max(vd2, 0.0)))


def h2_scale(ctx: OperatorContext, u: np.ndarray) -> float:
    """Discrete H^2-equivalent magnitude ||A u||_H + ||u||_H."""
    if not np.any(u):
        return 0.0
    return norm_h(ctx, apply_A(ctx, u)) + norm_h(ctx, u)


def unit_eigenmode(ctx: OperatorContext, m: int, l: int, k: int, kind: str = "cos") -> np.ndarray:
    """Real A-eigenmode with exact unit H norm.

    (m, l, k) selects the vertical eigenfunction and the horizontal wave;
    k indexes the stored rfft column (0 <= k < nkx, Nyquist excluded), l the
    signed ky.  For k == 0 the conjugate partner column is filled so the
    field is real; (m, l, k) = (0, 0, 0) is the excluded constant.
    """
    grid = ctx.grid
    if k < 0 or k >= grid.nkx - 1:
        raise ValueError("k out of range (Nyquist excluded)")
    if (m, l, k) == (0, 0, 0):
        raise ValueError("(0, 0, 0) is the excluded null mode")
    if kind not in ("cos", "sin"):
        raise ValueError("kind must be 'cos' or 'sin'")
    u = np.zeros((grid.nz, grid.ny, grid.nkx), dtype=complex)
    prof = ctx.vop.phi[:, m]
    li = l % grid.ny
    if k == 0 and l == 0:
        if kind == "sin":
            raise ValueError("the (l, k) = (0, 0) column has no sine mode")
        u[:, 0, 0] = prof / (2.0 * np.pi)
        return u
    amp = 1.0 / (2.0 * np.pi * np.sqrt(2.0))
    coef = amp if kind == "cos" else -1j * amp
    u[:, li, k] = coef * prof
    if k == 0:
        u[:, (-l) % grid.ny, 0] = np.conj(coef) * prof
    return u


def eigenvalue_of(ctx: OperatorContext, m: int, l: int, k: int) -> float:
    return float(ctx.vop.mu[m] + k * k + l * l)

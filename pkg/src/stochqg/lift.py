"""Harmonic boundary lifts: Delta~ u = 0 with prescribed top-face Neumann flux.

For each horizontal mode (k, l) != (0, 0) the lift profile solves the
two-point problem (F u')' - (k^2+l^2) u = 0 with u'(0) = 0 and u'(2pi) equal
to the flux coefficient, discretized with the same conservative stencil as
the interior operator; the flux enters through the variational boundary term
F(2pi) * flux, imposed on u_z directly.  The (0, 0) mode is excluded (the
Neumann problem is only solvable for mean-zero flux), so every lift is
mean-zero.

The boundary basis is the set of unit-L2 real Fourier modes on the top face,
ordered by increasing k^2+l^2 with (k, l)-lexicographic tie-breaking, cosine
before sine.  The noise covariance acts diagonally on this basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solveh_banded

from .spectral import Grid, VerticalOperator

_COS, _SIN = "cos", "sin"


@dataclass(frozen=True)
class BoundaryFlux:
    """Top-face Neumann data as normalized rfft2 coefficients, shape (ny, nkx)."""

    coef: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coef", np.asarray(self.coef, dtype=complex))


@dataclass(frozen=True)
class LiftField:
    """Spectral lift (nz, ny, nkx) together with its source flux."""

    coef: np.ndarray
    flux: BoundaryFlux


@dataclass(frozen=True, order=True)
class BoundaryMode:
    """Real Fourier mode on the top face; sort order is the basis order."""

    kh2: int
    k: int
    l: int
    phase_index: int  # 0 = cos, 1 = sin

    @property
    def kind(self) -> str:
        return _COS if self.phase_index == 0 else _SIN


def boundary_modes(grid: Grid, n_modes: int) -> list[BoundaryMode]:
    """The first n_modes real boundary-basis modes inside the dealias band."""
    kmax_x = (grid.nx - 1) // 3
    kmax_y = (grid.ny - 1) // 3
    modes = []
    for k in range(0, kmax_x + 1):
        lrange = range(1, kmax_y + 1) if k == 0 else range(-kmax_y, kmax_y + 1)
        for l in lrange:
            for phase in (0, 1):
                modes.append(BoundaryMode(k * k + l * l, k, l, phase))
    modes.sort()
    if n_modes > len(modes):
        raise ValueError(f"requested {n_modes} boundary modes, only {len(modes)} available")
    return modes[:n_modes]


def mode_flux(grid: Grid, mode: BoundaryMode) -> BoundaryFlux:
    """Unit-L2(top face) coefficients of a real boundary mode."""
    coef = np.zeros((grid.ny, grid.nkx), dtype=complex)
    amp = 1.0 / (2.0 * np.pi * np.sqrt(2.0))
    c = amp if mode.kind == _COS else -1j * amp
    li = mode.l % grid.ny
    coef[li, mode.k] = c
    if mode.k == 0:
        coef[(-mode.l) % grid.ny, 0] = np.conj(c)
    return BoundaryFlux(coef)


def _banded(vop: VerticalOperator, kh2: float) -> np.ndarray:
    """Upper banded form of A_z + kh2 * W (symmetric positive definite)."""
    nz = vop.nz
    dz = vop.dz
    F = vop.profile.f_of_z
    fh = 0.5 * (F[:-1] + F[1:])
    diag = np.zeros(nz)
    diag[:-1] += fh / dz
    diag[1:] += fh / dz
    diag += kh2 * vop.weights
    ab = np.zeros((2, nz))
    ab[0, 1:] = -fh / dz
    ab[1, :] = diag
    return ab


def solve_lift(grid: Grid, vop: VerticalOperator, flux: BoundaryFlux) -> LiftField:
    """Solve the harmonic lifting problem for arbitrary mean-zero flux.

    Columns with equal k^2+l^2 share one Cholesky-banded factorization.
    """
    coef = flux.coef
    if coef.shape != (grid.ny, grid.nkx):
        raise ValueError(f"flux shape {coef.shape} does not match grid")
    if coef[0, 0] != 0.0:
        raise ValueError("nonzero (0, 0) flux: incompatible Neumann problem")

    out = np.zeros((grid.nz, grid.ny, grid.nkx), dtype=complex)
    nonzero = np.argwhere(coef != 0.0)
    if nonzero.size == 0:
        return LiftField(out, flux)

    kx = grid.kx
    ky = grid.ky
    scale = vop.f_top  # variational boundary term of (A_z + kh2*W) u = F_top*g*e_top
    groups: dict[float, list[tuple[int, int]]] = {}
    for li, ki in nonzero:
        kh2 = float(ky[li] ** 2 + kx[ki] ** 2)
        groups.setdefault(kh2, []).append((int(li), int(ki)))

    for kh2, cols in groups.items():
        ab = _banded(vop, kh2)
        rhs = np.zeros((vop.nz, len(cols)), dtype=complex)
        rhs[-1, :] = scale * np.array([coef[li, ki] for li, ki in cols])
        sol = solveh_banded(ab, rhs)
        for j, (li, ki) in enumerate(cols):
            out[:, li, ki] = sol[:, j]
    return LiftField(out, flux)


def precompute_mode_lifts(grid: Grid, vop: VerticalOperator, n_modes: int) -> list[LiftField]:
    """Lifts of the first n_modes boundary-basis modes, in basis order."""
    return [solve_lift(grid, vop, mode_flux(grid, m)) for m in boundary_modes(grid, n_modes)]


def lift_interior_residual(grid: Grid, vop: VerticalOperator, lift: LiftField) -> float:
    """Relative interior residual of (F u')' - (k^2+l^2) u = 0, max over columns."""
    coef = lift.coef
    kh2 = grid.ky[:, None] ** 2 + grid.kx[None, :] ** 2
    res = (vop.action @ coef.reshape(vop.nz, -1)).reshape(coef.shape)
    res = res + kh2[None, :, :] * coef
    worst = 0.0
    opscale = float(np.max(np.abs(vop.action)))
    for li, ki in np.argwhere(np.any(coef != 0.0, axis=0)):
        col = coef[:, li, ki]
        r = res[1:-1, li, ki]
        denom = (kh2[li, ki] + opscale) * float(np.linalg.norm(col))
        worst = max(worst, float(np.linalg.norm(r)) / denom)
    return worst


def recovered_top_flux(grid: Grid, vop: VerticalOperator, lift: LiftField) -> np.ndarray:
    """Discrete u'(2pi) implied by the top boundary row, shape (ny, nkx).

    Rearranges the variational top row; equals the imposed flux to the
    stencil's order.
    """
    coef = lift.coef
    F = vop.profile.f_of_z
    fh_top = 0.5 * (F[-2] + F[-1])
    kh2 = grid.ky[:, None] ** 2 + grid.kx[None, :] ** 2
    one_sided = fh_top * (coef[-1] - coef[-2]) / vop.dz
    return (one_sided + vop.weights[-1] * kh2 * coef[-1]) / vop.f_top

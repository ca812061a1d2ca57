"""Discretization of the cube (0, 2pi)^3 for the stratified QG model.

Horizontal directions are periodic and carried by a collocation Fourier basis
(numpy rfft2 layout, coefficients normalized so a unit mode has coefficient
1/2 per conjugate side).  The vertical direction uses endpoint-inclusive
levels with a conservative second-order discretization of the stratified
operator -(F(z) u')' under homogeneous Neumann ends, assembled so that the
operator is exactly symmetric after the trapezoid-weight similarity
transform.  Field layout conventions:

    physical:  real    (nz, ny, nx)     values at (z_j, y, x) nodes
    spectral:  complex (nz, ny, nx//2+1) rfft2 over axes (1, 2), normalized

The mean-zero state space drops the (k, l) = (0, 0) vertically-constant
component; ``project_mean_zero`` removes it exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as _fft
from scipy.linalg import eigh_tridiagonal

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class StratificationProfile:
    """Coriolis parameter f0 and buoyancy frequency N(z) on the levels.

    F(z) = f0^2 / N(z)^2 is the vertical coefficient of the stratified
    Laplacian.  N must be positive and finite at every level.
    """

    f0: float
    n_of_z: np.ndarray
    f_of_z: np.ndarray = field(init=False)

    def __post_init__(self):
        n = np.asarray(self.n_of_z, dtype=float)
        if n.ndim != 1 or n.size < 2:
            raise ValueError("N(z) must be a 1-D array with at least 2 levels")
        if not np.all(np.isfinite(n)) or np.any(n <= 0.0):
            raise ValueError("N(z) must be positive and finite at every level")
        if self.f0 == 0.0:
            raise ValueError("f0 must be nonzero")
        object.__setattr__(self, "n_of_z", n)
        object.__setattr__(self, "f_of_z", (self.f0 / n) ** 2)

    @property
    def nz(self) -> int:
        return self.n_of_z.size


def make_profile(f0: float, n_of_z, nz: int) -> StratificationProfile:
    """Build a profile from a constant N or a per-level table."""
    if np.isscalar(n_of_z):
        n = np.full(nz, float(n_of_z))
    else:
        n = np.asarray(n_of_z, dtype=float)
        if n.size != nz:
            raise ValueError(f"N table has {n.size} entries, expected nz={nz}")
    return StratificationProfile(f0=float(f0), n_of_z=n)


@dataclass(frozen=True)
class Grid:
    """Collocation grid on (0, 2pi)^3.

    nx, ny are even horizontal mode counts; nz is the number of
    endpoint-inclusive vertical levels (spacing dz = 2pi/(nz-1)).  The
    dealias mask keeps |k| <= floor((n-1)/3) per horizontal direction,
    which guarantees 3*kmax < n so the collocation trilinear identities
    cancel exactly (zeroing at least everything beyond n/3).
    """

    nx: int
    ny: int
    nz: int

    def __post_init__(self):
        if self.nx % 2 or self.ny % 2 or self.nx < 8 or self.ny < 8:
            raise ValueError("nx, ny must be even and >= 8")
        if self.nz < 5:
            raise ValueError("nz must be >= 5")

    @property
    def nkx(self) -> int:
        return self.nx // 2 + 1

    @property
    def dz(self) -> float:
        return TWO_PI / (self.nz - 1)

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.nx) * (TWO_PI / self.nx)

    @property
    def y(self) -> np.ndarray:
        return np.arange(self.ny) * (TWO_PI / self.ny)

    @property
    def z(self) -> np.ndarray:
        return np.arange(self.nz) * self.dz

    @property
    def kx(self) -> np.ndarray:
        """Non-negative wavenumbers of the rfft axis, shape (nkx,)."""
        return np.arange(self.nkx, dtype=float)

    @property
    def ky(self) -> np.ndarray:
        """Signed wavenumbers of the full fft axis, shape (ny,)."""
        return np.fft.fftfreq(self.ny, d=1.0 / self.ny)

    @property
    def dealias_mask(self) -> np.ndarray:
        kmax_x = (self.nx - 1) // 3
        kmax_y = (self.ny - 1) // 3
        return (np.abs(self.ky)[:, None] <= kmax_y) & (self.kx[None, :] <= kmax_x)

    @property
    def column_weight(self) -> np.ndarray:
        """Multiplicity of each stored rfft column in full-spectrum sums."""
        w = np.full(self.nkx, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return w

    @property
    def zweights(self) -> np.ndarray:
        """Trapezoid quadrature weights on the levels (sum = 2pi)."""
        w = np.full(self.nz, self.dz)
        w[0] = 0.5 * self.dz
        w[-1] = 0.5 * self.dz
        return w


@dataclass(frozen=True)
class VerticalOperator:
    """Discrete L = -(F(z) d/dz .)' with homogeneous Neumann ends.

    ``diag``/``offdiag`` hold the symmetric tridiagonal matrix
    M = W^(1/2) L W^(-1/2) (W = trapezoid weights); its eigenpairs give
    L phi_m = mu_m phi_m with phi_m orthonormal under the level quadrature.
    ``action`` is the dense matrix of L on level values.
    """

    profile: StratificationProfile
    nz: int
    dz: float
    weights: np.ndarray          # (nz,) trapezoid weights
    diag: np.ndarray             # (nz,) main diagonal of M
    offdiag: np.ndarray          # (nz-1,) off diagonal of M
    action: np.ndarray           # (nz, nz) dense action of L on level values
    mu: np.ndarray               # (nz,) eigenvalues, ascending, mu[0] == 0
    yhat: np.ndarray             # (nz, nz) orthonormal eigenvectors of M (columns)
    phi: np.ndarray              # (nz, nz) eigenvectors of L, quadrature-orthonormal
    sqrtw: np.ndarray            # (nz,)

    @property
    def f_top(self) -> float:
        return float(self.profile.f_of_z[-1])


def build_vertical_operator(profile: StratificationProfile, nz: int) -> VerticalOperator:
    """Assemble and diagonalize the vertical part of the stratified Laplacian.

    The discretization comes from the quadratic form
    a(u, v) = sum_j F_{j+1/2} (u_{j+1}-u_j)(v_{j+1}-v_j)/dz, so L = W^-1 A_z is
    symmetric w.r.t. the weighted inner product, positive semidefinite, and has
    an exact constant nullvector; the boundary rows are the ghost-point Neumann
    closure of the conservative stencil.
    """
    if nz < 5:
        raise ValueError("nz must be >= 5")
    if profile.nz != nz:
        raise ValueError(f"profile has {profile.nz} levels, expected {nz}")
    F = profile.f_of_z
    if np.any(F <= 0.0) or not np.all(np.isfinite(F)):
        raise ValueError("F(z) must be positive and finite")

    dz = TWO_PI / (nz - 1)
    w = np.full(nz, dz)
    w[0] = w[-1] = 0.5 * dz
    fh = 0.5 * (F[:-1] + F[1:])        # F at half levels

    # Stiffness matrix A_z (tridiagonal, rows sum to zero exactly).
    a_diag = np.zeros(nz)
    a_diag[:-1] += fh / dz
    a_diag[1:] += fh / dz
    a_off = -fh / dz

    sqrtw = np.sqrt(w)
    m_diag = a_diag / w
    m_off = a_off / (sqrtw[:-1] * sqrtw[1:])

    try:
        mu, yhat = eigh_tridiagonal(m_diag, m_off)
    except Exception as exc:  # pragma: no cover - LAPACK failure is exotic
        raise RuntimeError(f"vertical eigensolver failed: {exc}") from exc
    mu = np.maximum(mu, 0.0)
    mu[0] = 0.0
    # Fix eigenvector signs deterministically (largest entry positive).
    pick = np.argmax(np.abs(yhat), axis=0)
    signs = np.sign(yhat[pick, np.arange(nz)])
    signs[signs == 0] = 1.0
    yhat = yhat * signs

    phi = yhat / sqrtw[:, None]
    # Dense action of L on level values: W^(-1/2) M W^(1/2).
    m_dense = np.zeros((nz, nz))
    m_dense[np.arange(nz), np.arange(nz)] = m_diag
    m_dense[np.arange(nz - 1), np.arange(1, nz)] = m_off
    m_dense[np.arange(1, nz), np.arange(nz - 1)] = m_off
    action = (m_dense * sqrtw[None, :]) / sqrtw[:, None]

    return VerticalOperator(
        profile=profile, nz=nz, dz=dz, weights=w,
        diag=m_diag, offdiag=m_off, action=action,
        mu=mu, yhat=yhat, phi=phi, sqrtw=sqrtw,
    )


def compute_lambda1(vop: VerticalOperator) -> float:
    """Smallest A-eigenvalue on the mean-zero subspace: min(1, mu_1).

    Candidates are the first nonzero horizontal mode (k^2+l^2 = 1 on the
    2pi-periodic cube, constant profile) and the first nonconstant vertical
    mode on the (0, 0) column.
    """
    return float(min(1.0, vop.mu[1]))


def forward_transform(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Physical (nz, ny, nx) real field -> normalized spectral coefficients."""
    f = np.asarray(f)
    if f.shape != (grid.nz, grid.ny, grid.nx):
        raise ValueError(f"field shape {f.shape} does not match grid "
                         f"{(grid.nz, grid.ny, grid.nx)}")
    return _fft.rfft2(f, axes=(1, 2)) / (grid.nx * grid.ny)


def inverse_transform(grid: Grid, fhat: np.ndarray) -> np.ndarray:
    """Normalized spectral coefficients -> physical real field."""
    fhat = np.asarray(fhat)
    if fhat.shape != (grid.nz, grid.ny, grid.nkx):
        raise ValueError(f"spectral shape {fhat.shape} does not match grid "
                         f"{(grid.nz, grid.ny, grid.nkx)}")
    return _fft.irfft2(fhat, s=(grid.ny, grid.nx), axes=(1, 2)) * (grid.nx * grid.ny)


def enforce_hermitian(grid: Grid, fhat: np.ndarray) -> np.ndarray:
    """Symmetrize the kx=0 and kx=Nyquist columns so the field is real.

    Interior columns are unconstrained in the rfft layout; only the two
    self-conjugate columns need u(0, -l) = conj(u(0, l)).
    """
    out = fhat.copy()
    for col in (0, grid.nkx - 1):
        c = out[:, :, col]
        sym = 0.5 * (c + np.conj(c[:, _flip_index(grid.ny)]))
        out[:, :, col] = sym
    return out


def _flip_index(n: int) -> np.ndarray:
    """Index map l -> -l mod n for an fft axis."""
    return (-np.arange(n)) % n


def hermitian_defect(grid: Grid, fhat: np.ndarray) -> float:
    """Max deviation from the reality constraint on the self-conjugate columns."""
    d = 0.0
    for col in (0, grid.nkx - 1):
        c = fhat[:, :, col]
        d = max(d, float(np.max(np.abs(c - np.conj(c[:, _flip_index(grid.ny)])))))
    return d


def weighted_vertical_mean(weights: np.ndarray, column):
    """Quadrature mean of a level profile (weights sum to 2pi)."""
    return (weights @ column) / weights.sum()


def project_mean_zero(grid: Grid, fhat: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    """Remove the domain-average ((0,0) horizontal mode, constant-in-z) component."""
    w = grid.zweights if weights is None else weights
    out = fhat.copy()
    out[:, 0, 0] -= weighted_vertical_mean(w, out[:, 0, 0])
    return out


def domain_mean(grid: Grid, fhat: np.ndarray, weights: np.ndarray | None = None) -> complex:
    """Domain average of the field represented by normalized coefficients."""
    w = grid.zweights if weights is None else weights
    return weighted_vertical_mean(w, fhat[:, 0, 0])


def is_mean_zero(grid: Grid, fhat: np.ndarray, tol: float = 1e-10) -> bool:
    scale = float(np.max(np.abs(fhat))) or 1.0
    return abs(domain_mean(grid, fhat)) <= tol * scale

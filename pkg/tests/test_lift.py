"""Harmonic boundary lifts and the boundary-mode basis."""

import numpy as np
import pytest

from stochqg.lift import (
    BoundaryFlux,
    boundary_modes,
    lift_interior_residual,
    mode_flux,
    precompute_mode_lifts,
    recovered_top_flux,
    solve_lift,
)
from stochqg.operators import inner_h
from stochqg.spectral import build_vertical_operator, inverse_transform, make_profile, Grid


def analytic_profile(z, kh):
    """Continuum solution of u'' = kh^2 u, u'(0) = 0, u'(2pi) = 1 (F == 1)."""
    return np.cosh(kh * z) / (kh * np.sinh(kh * 2 * np.pi))


class TestSolveLift:
    def test_zero_flux(self, grid, vop):
        flux = BoundaryFlux(np.zeros((grid.ny, grid.nkx), dtype=complex))
        lift = solve_lift(grid, vop, flux)
        assert np.all(lift.coef == 0.0)

    def test_analytic_cosh_profile(self, grid, vop):
        coef = np.zeros((grid.ny, grid.nkx), dtype=complex)
        coef[0, 1] = 1.0  # mode (k, l) = (1, 0), unit coefficient
        lift = solve_lift(grid, vop, BoundaryFlux(coef))
        got = lift.coef[:, 0, 1].real
        expect = analytic_profile(grid.z, 1.0)
        # O(dz^2) at the desk resolution; the convergence test pins the order.
        assert np.max(np.abs(got - expect)) < 2.5e-2 * np.max(np.abs(expect))

    def test_second_order_convergence(self):
        errs = []
        sizes = [17, 33, 65, 129]
        for nz in sizes:
            grid = Grid(nx=8, ny=8, nz=nz)
            vop = build_vertical_operator(make_profile(1.0, 1.0, nz), nz)
            coef = np.zeros((grid.ny, grid.nkx), dtype=complex)
            coef[0, 1] = 1.0
            lift = solve_lift(grid, vop, BoundaryFlux(coef))
            expect = analytic_profile(grid.z, 1.0)
            errs.append(np.max(np.abs(lift.coef[:, 0, 1].real - expect)))
        slopes = [
            np.log(errs[i] / errs[i + 1]) / np.log((sizes[i + 1] - 1) / (sizes[i] - 1))
            for i in range(len(errs) - 1)
        ]
        assert all(abs(s - 2.0) < 0.2 for s in slopes)

    def test_linearity(self, grid, vop):
        rng = np.random.default_rng(30)
        c1 = np.zeros((grid.ny, grid.nkx), dtype=complex)
        c2 = np.zeros_like(c1)
        c1[2, 3] = rng.standard_normal() + 1j * rng.standard_normal()
        c2[5, 1] = rng.standard_normal() + 1j * rng.standard_normal()
        a, b = 0.6, -2.2
        combo = solve_lift(grid, vop, BoundaryFlux(a * c1 + b * c2)).coef
        parts = (a * solve_lift(grid, vop, BoundaryFlux(c1)).coef
                 + b * solve_lift(grid, vop, BoundaryFlux(c2)).coef)
        assert np.max(np.abs(combo - parts)) < 1e-14

    def test_rejects_mean_flux(self, grid, vop):
        coef = np.zeros((grid.ny, grid.nkx), dtype=complex)
        coef[0, 0] = 1.0
        with pytest.raises(ValueError):
            solve_lift(grid, vop, BoundaryFlux(coef))

    def test_interior_residual(self, grid, vop):
        rng = np.random.default_rng(31)
        coef = (rng.standard_normal((grid.ny, grid.nkx))
                + 1j * rng.standard_normal((grid.ny, grid.nkx)))
        coef[0, 0] = 0.0
        lift = solve_lift(grid, vop, BoundaryFlux(coef))
        assert lift_interior_residual(grid, vop, lift) < 1e-10

    def test_flux_recovery(self, grid, vop):
        coef = np.zeros((grid.ny, grid.nkx), dtype=complex)
        coef[0, 1] = 1.0
        lift = solve_lift(grid, vop, BoundaryFlux(coef))
        rec = recovered_top_flux(grid, vop, lift)
        # Exactly the imposed data at the solved column (the boundary row is
        # solved exactly); zero elsewhere.
        assert abs(rec[0, 1] - 1.0) < 1e-12
        rec[0, 1] = 0.0
        assert np.max(np.abs(rec)) < 1e-12

    def test_monotone_toward_forced_boundary(self, grid, vop):
        coef = np.zeros((grid.ny, grid.nkx), dtype=complex)
        coef[3, 2] = 1.0
        lift = solve_lift(grid, vop, BoundaryFlux(coef))
        prof = np.abs(lift.coef[:, 3, 2])
        assert np.all(np.diff(prof) > 0.0)

    def test_mean_zero(self, grid, vop, ctx):
        rng = np.random.default_rng(32)
        coef = (rng.standard_normal((grid.ny, grid.nkx))
                + 1j * rng.standard_normal((grid.ny, grid.nkx)))
        coef[0, 0] = 0.0
        lift = solve_lift(grid, vop, BoundaryFlux(coef))
        # Zero (0,0) column entirely: horizontal mean vanishes at every level.
        assert np.max(np.abs(lift.coef[:, 0, 0])) == 0.0


class TestBoundaryModes:
    def test_ordering(self, grid):
        modes = boundary_modes(grid, 12)
        kh2s = [m.kh2 for m in modes]
        assert kh2s == sorted(kh2s)
        # First shell: kh2 == 1 gives (0,1) and (1,0), cos and sin each.
        first = [(m.k, m.l, m.kind) for m in modes[:4]]
        assert first == [(0, 1, "cos"), (0, 1, "sin"), (1, 0, "cos"), (1, 0, "sin")]

    def test_unit_norm_and_real(self, grid, ctx):
        for mode in boundary_modes(grid, 8):
            flux = mode_flux(grid, mode)
            # Lift the face coefficients into a z-constant 3-D field and
            # integrate |.|^2 over one face via the H machinery: the face has
            # area (2pi)^2 while the H norm integrates over 2pi in z as well.
            f3 = np.repeat(flux.coef[None, :, :], grid.nz, axis=0)
            face_sq = inner_h(ctx, f3, f3) / (2 * np.pi)
            assert abs(face_sq - 1.0) < 1e-12
            phys = inverse_transform(grid, f3)
            assert np.max(np.abs(phys.imag if np.iscomplexobj(phys) else 0.0)) == 0.0

    def test_too_many_modes(self, grid):
        with pytest.raises(ValueError):
            boundary_modes(grid, 10_000)


class TestPrecomputedLifts:
    def test_residual_invariant(self, grid, vop):
        for lift in precompute_mode_lifts(grid, vop, 8):
            assert lift_interior_residual(grid, vop, lift) < 1e-10

    def test_mode_10_matches_analytic(self, grid, vop):
        modes = boundary_modes(grid, 4)
        lifts = precompute_mode_lifts(grid, vop, 4)
        idx = next(i for i, m in enumerate(modes) if (m.k, m.l, m.kind) == (1, 0, "cos"))
        amp = 1.0 / (2 * np.pi * np.sqrt(2.0))
        got = lifts[idx].coef[:, 0, 1].real
        expect = amp * analytic_profile(grid.z, 1.0)
        assert np.max(np.abs(got - expect)) < 2.5e-2 * np.max(np.abs(expect))

    def test_pairwise_h_orthogonal(self, grid, vop, ctx):
        lifts = precompute_mode_lifts(grid, vop, 8)
        for i in range(len(lifts)):
            for j in range(i + 1, len(lifts)):
                ip = inner_h(ctx, lifts[i].coef, lifts[j].coef)
                ni = np.sqrt(inner_h(ctx, lifts[i].coef, lifts[i].coef))
                nj = np.sqrt(inner_h(ctx, lifts[j].coef, lifts[j].coef))
                assert abs(ip) < 1e-12 * ni * nj

"""Vertical operator, transforms, and mean-zero machinery."""

import numpy as np
import pytest

from stochqg.spectral import (
    Grid,
    StratificationProfile,
    build_vertical_operator,
    compute_lambda1,
    domain_mean,
    forward_transform,
    hermitian_defect,
    inverse_transform,
    make_profile,
    project_mean_zero,
)


def dense_eig_oracle(vop):
    """Independent route: dense symmetric eigensolver on the assembled matrix."""
    nz = vop.nz
    m = np.zeros((nz, nz))
    m[np.arange(nz), np.arange(nz)] = vop.diag
    m[np.arange(nz - 1), np.arange(1, nz)] = vop.offdiag
    m[np.arange(1, nz), np.arange(nz - 1)] = vop.offdiag
    return np.linalg.eigvalsh(m)


class TestVerticalOperator:
    def test_continuum_eigenvalues_f1(self):
        # F == 1 on (0, 2pi) with Neumann ends: eigenfunctions cos(m z / 2),
        # eigenvalues (m/2)^2, so mu_1 = 1/4 and mu_2 = 1.
        vop = build_vertical_operator(make_profile(1.0, 1.0, 257), 257)
        assert abs(vop.mu[1] - 0.25) < 1e-3
        assert abs(vop.mu[2] - 1.0) < 1e-3

    def test_matches_dense_oracle(self):
        vop = build_vertical_operator(make_profile(1.0, 1.0, 257), 257)
        mu_oracle = dense_eig_oracle(vop)
        assert np.allclose(vop.mu, np.maximum(mu_oracle, 0.0), atol=1e-10)

    def test_nullmode(self, vop):
        assert vop.mu[0] <= 1e-12
        v0 = vop.phi[:, 0]
        assert np.max(np.abs(v0 - v0[0])) < 1e-10 * abs(v0[0])

    def test_linear_scaling_in_f(self):
        # F == 4 scales every eigenvalue by 4 (N halved with f0 = 1).
        v1 = build_vertical_operator(make_profile(1.0, 1.0, 33), 33)
        v4 = build_vertical_operator(make_profile(1.0, 0.5, 33), 33)
        assert np.allclose(v4.mu, 4.0 * v1.mu, rtol=1e-12, atol=1e-12)

    def test_symmetric_tridiagonal_exact(self, vop):
        # The stored matrix is symmetric by construction; the action matrix is
        # self-adjoint under the quadrature weights.
        nz = vop.nz
        m = np.zeros((nz, nz))
        m[np.arange(nz), np.arange(nz)] = vop.diag
        m[np.arange(nz - 1), np.arange(1, nz)] = vop.offdiag
        m[np.arange(1, nz), np.arange(nz - 1)] = vop.offdiag
        assert np.array_equal(m, m.T)
        wl = vop.weights[:, None] * vop.action
        assert np.max(np.abs(wl - wl.T)) < 1e-12 * np.max(np.abs(wl))

    def test_eigenvector_orthonormality(self, vop):
        g = vop.phi.T @ (vop.weights[:, None] * vop.phi)
        assert np.max(np.abs(g - np.eye(vop.nz))) < 1e-12

    def test_action_consistent_with_eigenpairs(self, vop):
        for m in (0, 1, 5):
            r = vop.action @ vop.phi[:, m] - vop.mu[m] * vop.phi[:, m]
            assert np.max(np.abs(r)) < 1e-11 * max(vop.mu[m], 1.0)

    def test_mu1_second_order_convergence(self):
        errs = []
        sizes = [17, 33, 65, 129]
        for nz in sizes:
            vop = build_vertical_operator(make_profile(1.0, 1.0, nz), nz)
            errs.append(abs(vop.mu[1] - 0.25))
        slopes = [
            np.log(errs[i] / errs[i + 1]) / np.log((sizes[i + 1] - 1) / (sizes[i] - 1))
            for i in range(len(errs) - 1)
        ]
        assert all(abs(s - 2.0) < 0.2 for s in slopes)

    def test_rejects_bad_stratification(self):
        with pytest.raises(ValueError):
            StratificationProfile(f0=1.0, n_of_z=np.array([1.0, -1.0, 1.0, 1.0, 1.0]))
        with pytest.raises(ValueError):
            make_profile(0.0, 1.0, 17)
        with pytest.raises(ValueError):
            build_vertical_operator(make_profile(1.0, 1.0, 17), 9)


class TestLambda1:
    def test_f1(self, vop):
        # mu_1 < 1, so the vertical mode wins.
        oracle = dense_eig_oracle(vop)
        assert abs(compute_lambda1(vop) - min(1.0, oracle[1])) < 1e-12

    def test_strong_stratification(self):
        # F == 100: mu_1 ~ 25 > 1, so the first horizontal mode wins.
        vop = build_vertical_operator(make_profile(10.0, 1.0, 33), 33)
        assert compute_lambda1(vop) == 1.0

    def test_positive(self, vop):
        assert compute_lambda1(vop) > 0.0


class TestTransforms:
    def test_zero(self, grid):
        f = np.zeros((grid.nz, grid.ny, grid.nx))
        assert np.all(forward_transform(grid, f) == 0.0)

    def test_sin_x_single_pair(self, grid):
        f = np.sin(grid.x)[None, None, :] * np.ones((grid.nz, grid.ny, 1))
        fhat = forward_transform(grid, f)
        # Stored side of the conjugate pair at (k, l) = (1, 0): magnitude 1/2.
        assert np.allclose(fhat[:, 0, 1], -0.5j, atol=1e-12)
        fhat[:, 0, 1] = 0.0
        assert np.max(np.abs(fhat)) < 1e-12

    def test_round_trip_random(self, grid):
        rng = np.random.default_rng(7)
        f = rng.standard_normal((grid.nz, grid.ny, grid.nx))
        back = inverse_transform(grid, forward_transform(grid, f))
        assert np.max(np.abs(back - f)) <= 1e-12 * np.max(np.abs(f))

    @pytest.mark.parametrize("nx,ny,nz", [(8, 8, 5), (16, 32, 9), (48, 16, 33)])
    def test_round_trip_sizes(self, nx, ny, nz):
        grid = Grid(nx=nx, ny=ny, nz=nz)
        rng = np.random.default_rng(nx + ny + nz)
        f = rng.standard_normal((nz, ny, nx))
        back = inverse_transform(grid, forward_transform(grid, f))
        assert np.max(np.abs(back - f)) <= 1e-12 * np.max(np.abs(f))

    def test_size_mismatch(self, grid):
        with pytest.raises(ValueError):
            forward_transform(grid, np.zeros((3, 3, 3)))
        with pytest.raises(ValueError):
            inverse_transform(grid, np.zeros((3, 3, 3), dtype=complex))

    def test_hermitian_from_real(self, grid):
        rng = np.random.default_rng(11)
        fhat = forward_transform(grid, rng.standard_normal((grid.nz, grid.ny, grid.nx)))
        assert hermitian_defect(grid, fhat) < 1e-14


class TestGrid:
    def test_validation(self):
        with pytest.raises(ValueError):
            Grid(nx=31, ny=32, nz=17)
        with pytest.raises(ValueError):
            Grid(nx=6, ny=8, nz=17)
        with pytest.raises(ValueError):
            Grid(nx=32, ny=32, nz=4)

    def test_dealias_mask(self, grid):
        mask = grid.dealias_mask
        # Everything strictly above nx/3 is zeroed (spec rule), and the kept
        # band obeys 3*kmax < nx so triads cannot alias.
        kmax = (grid.nx - 1) // 3
        assert mask[0, kmax]
        assert not mask[0, kmax + 1]
        assert not mask[grid.ny // 2, 0]
        assert 3 * kmax < grid.nx

    def test_zweights_sum(self, grid):
        assert abs(grid.zweights.sum() - 2 * np.pi) < 1e-14


class TestMeanZero:
    def test_projection(self, grid, ctx):
        rng = np.random.default_rng(3)
        fhat = forward_transform(grid, 1.0 + rng.standard_normal((grid.nz, grid.ny, grid.nx)))
        proj = project_mean_zero(grid, fhat)
        assert abs(domain_mean(grid, proj)) < 1e-14
        # Only the (0,0) column changed.
        diff = proj - fhat
        diff[:, 0, 0] = 0.0
        assert np.max(np.abs(diff)) == 0.0

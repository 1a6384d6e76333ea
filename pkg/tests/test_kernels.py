import numpy as np
import pytest

from nepvscf import (
    DefinitenessError,
    OrthonormalityError,
    SymmetryError,
    principal_angles,
    solve_lyapunov_spd,
    spectral_radius,
    svd_econ,
    sym_eig,
    sym_eig_topk,
)
from conftest import rand_orth, rand_spd


class TestSymEigTopk:
    def test_diagonal_case(self):
        res = sym_eig_topk(np.diag([3.0, 1.0, 2.0]), 2)
        np.testing.assert_allclose(res.values, [3.0, 2.0])
        assert res.gap == pytest.approx(1.0)
        # vectors span {e1, e3}
        proj = res.vectors @ res.vectors.T
        ref = np.diag([1.0, 0.0, 1.0])
        assert np.linalg.norm(proj - ref) < 1e-12

    def test_tridiagonal_top_value(self):
        n = 4
        t = np.diag(2.0 * np.ones(n)) - np.diag(np.ones(n - 1), 1) - np.diag(np.ones(n - 1), -1)
        res = sym_eig_topk(t, 1)
        assert res.values[0] == pytest.approx(2.0 - 2.0 * np.cos(4.0 * np.pi / 5.0), abs=1e-12)

    def test_matches_full_decomposition_oracle(self, rng):
        s = rng.standard_normal((8, 8))
        s = s + s.T
        # oracle: full dense eigendecomposition, sorted descending
        w, v = np.linalg.eigh(s)
        w, v = w[::-1], v[:, ::-1]
        res = sym_eig_topk(s, 3)
        np.testing.assert_allclose(res.values, w[:3], atol=1e-10)
        assert res.lambda_next == pytest.approx(w[3], abs=1e-12)
        # same invariant subspace
        _, sin_fro = principal_angles(res.vectors, v[:, :3])
        assert sin_fro < 1e-10

    def test_residual_invariant(self, rng):
        s = rng.standard_normal((12, 12))
        s = s + s.T
        res = sym_eig_topk(s, 5)
        resid = np.linalg.norm(s @ res.vectors - res.vectors * res.values[None, :])
        assert resid <= 1e-10 * np.linalg.norm(s)

    def test_rejects_asymmetric(self, rng):
        s = rng.standard_normal((5, 5))
        with pytest.raises(SymmetryError):
            sym_eig_topk(s, 2)

    def test_rejects_bad_k(self):
        with pytest.raises(ValueError):
            sym_eig_topk(np.eye(3), 0)
        with pytest.raises(ValueError):
            sym_eig_topk(np.eye(3), 4)

    def test_full_reconstruction(self, rng):
        s = rng.standard_normal((9, 9))
        s = s + s.T
        res = sym_eig(s)
        rec = res.vectors @ np.diag(res.values) @ res.vectors.T
        assert np.linalg.norm(s - rec) <= 1e-10 * np.linalg.norm(s)
        assert np.all(np.diff(res.values) <= 1e-12)


class TestSvdEcon:
    def test_diag_rank(self):
        res = svd_econ(np.diag([2.0, 0.0]))
        np.testing.assert_allclose(res.sigma, [2.0, 0.0])
        assert res.numerical_rank == 1

    def test_orthogonal_input(self):
        q = rand_orth(6, 4, seed=3)
        res = svd_econ(q)
        np.testing.assert_allclose(res.sigma, np.ones(4), atol=1e-12)
        assert res.numerical_rank == 4

    def test_rank_two_product(self, rng):
        u1, u2 = rng.standard_normal(5), rng.standard_normal(5)
        v1, v2 = rng.standard_normal(3), rng.standard_normal(3)
        a = np.outer(u1, v1) + np.outer(u2, v2)
        res = svd_econ(a)
        assert res.numerical_rank == 2
        rec = (res.u * res.sigma) @ res.v.T
        assert np.linalg.norm(a - rec) <= 1e-12 * np.linalg.norm(a)

    def test_partition_blocks(self, rng):
        a = rng.standard_normal((4, 6))
        res = svd_econ(a)
        assert res.u1.shape[1] + res.u2.shape[1] == res.u.shape[1]
        assert np.linalg.norm(res.u.T @ res.u - np.eye(res.u.shape[1])) < 1e-12
        assert np.linalg.norm(res.v.T @ res.v - np.eye(res.v.shape[1])) < 1e-12


class TestLyapunov:
    def test_identity_coefficient(self, rng):
        c = rng.standard_normal((4, 4))
        c = c + c.T
        np.testing.assert_allclose(solve_lyapunov_spd(np.eye(4), c), c / 2, atol=1e-13)

    def test_scalar(self):
        assert solve_lyapunov_spd(np.array([[2.0]]), np.array([[8.0]]))[0, 0] == pytest.approx(2.0)

    def test_kronecker_oracle(self, rng):
        r = 4
        m1 = rand_spd(r, rng)
        c = rng.standard_normal((r, r))
        c = c + c.T
        l = solve_lyapunov_spd(m1, c)
        kron = np.kron(np.eye(r), m1) + np.kron(m1, np.eye(r))
        l_ref = np.linalg.solve(kron, c.reshape(-1, order="F")).reshape((r, r), order="F")
        assert np.linalg.norm(l - l_ref) <= 1e-10 * np.linalg.norm(l_ref)

    def test_result_symmetric(self, rng):
        m1 = rand_spd(5, rng)
        c = rng.standard_normal((5, 5))
        c = c + c.T
        l = solve_lyapunov_spd(m1, c)
        assert np.linalg.norm(l - l.T) <= 1e-12 * np.linalg.norm(l)

    def test_rejects_indefinite(self):
        with pytest.raises(DefinitenessError):
            solve_lyapunov_spd(np.diag([1.0, -1.0]), np.eye(2))


class TestPrincipalAngles:
    def test_same_subspace(self):
        x = rand_orth(7, 3, seed=1)
        angles, sin_fro = principal_angles(x, x)
        assert np.max(np.abs(angles)) < 1e-7
        assert sin_fro < 1e-12

    def test_orthogonal_complement(self):
        x = np.eye(4)[:, :2]
        y = np.eye(4)[:, 2:]
        angles, sin_fro = principal_angles(x, y)
        np.testing.assert_allclose(angles, np.pi / 2, atol=1e-12)
        assert sin_fro == pytest.approx(np.sqrt(2.0))

    def test_planar_rotation(self):
        t = 0.3
        x = np.array([[1.0], [0.0]])
        y = np.array([[np.cos(t)], [np.sin(t)]])
        angles, sin_fro = principal_angles(x, y)
        assert angles[0] == pytest.approx(t, abs=1e-12)
        assert sin_fro == pytest.approx(np.sin(t), abs=1e-12)

    def test_basis_independence(self, rng):
        x = rand_orth(8, 3, seed=5)
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        angles, sin_fro = principal_angles(x, x @ q)
        assert np.max(np.abs(angles)) < 1e-7
        assert sin_fro < 1e-12

    def test_rejects_nonorthonormal(self, rng):
        with pytest.raises(OrthonormalityError):
            principal_angles(rng.standard_normal((5, 2)), rand_orth(5, 2))


class TestSpectralRadius:
    def test_identity_operator(self):
        res = spectral_radius(lambda z: z, (2, 2), method="dense")
        assert res.rho == pytest.approx(1.0, abs=1e-12)

    def test_nilpotent(self):
        n = np.triu(np.ones((3, 3)), 1)
        res = spectral_radius(lambda z: n @ z, (3, 2), method="dense")
        assert res.rho == pytest.approx(0.0, abs=1e-10)

    def test_known_matricization(self):
        k = np.array([[0.0, 2.0], [0.5, 0.0]])
        op = lambda z: (k @ z.reshape(-1, order="F")).reshape((2, 1), order="F")
        res = spectral_radius(op, (2, 1), method="dense")
        assert res.rho == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("shape", [(4, 3), (10, 5), (25, 4)])
    def test_dense_power_agreement(self, shape, rng):
        m = shape[0] * shape[1]
        a = rng.standard_normal((m, m))
        op = lambda z: (a @ z.reshape(-1, order="F")).reshape(shape, order="F")
        dense = spectral_radius(op, shape, method="dense")
        power = spectral_radius(op, shape, method="power")
        assert power.converged
        assert abs(dense.rho - power.rho) <= 1e-6 * dense.rho

    def test_auto_dispatch_cap(self, rng):
        a = rng.standard_normal((6, 6))
        op = lambda z: (a @ z.reshape(-1, order="F")).reshape((3, 2), order="F")
        res = spectral_radius(op, (3, 2), method="auto", dense_cap=4)
        assert res.method == "power"

    def test_rejects_nonlinear(self):
        with pytest.raises(ValueError):
            spectral_radius(lambda z: z + 1.0, (3, 3), method="dense")

"""Built-in test problems: small printed instances and seeded generators.

The 3x3 instances (ex1/ex2/ex4/ex5) use fixed coefficient matrices; the
n=200 instances (ex3/ex6) draw D from a seeded generator, full-rank or as a
rank-r product D = D1 P^T.
"""
from __future__ import annotations

import numpy as np

from .problems import NepvProblem, make_alpha_problem, make_theta_problem

EX1_A = np.array([
    [-3.242, -0.450, 1.807],
    [-0.450, -1.630, 0.790],
    [1.807, 0.790, 0.226],
])

EX1_B = np.array([
    [0.592, 1.873, 0.175],
    [1.873, 6.332, 0.617],
    [0.175, 0.617, 0.488],
])

EX1_D = np.array([[-9.122], [0.421], [3.134]])

EX2_D = np.array([
    [-1.430, 2.768],
    [-0.120, -0.630],
    [1.098, 2.229],
])

EX5_A = np.array([
    [1.145, -0.095, 0.514],
    [-0.095, 0.838, 1.022],
    [0.514, 1.022, -1.223],
])

EX5_B = np.array([
    [0.582, -0.037, 0.025],
    [-0.037, 0.183, 0.043],
    [0.025, 0.043, 0.239],
])

EX5_D = np.array([
    [0.760, 0.258],
    [0.011, 0.774],
    [0.180, 0.520],
])


def tridiag_stiffness(n: int) -> np.ndarray:
    """tridiag(-1, 2, -1)."""
    return np.diag(2.0 * np.ones(n)) - np.diag(np.ones(n - 1), 1) - np.diag(np.ones(n - 1), -1)


def index_diag(n: int) -> np.ndarray:
    """diag(1, 2, ..., n)."""
    return np.diag(np.arange(1.0, n + 1.0))


def random_d(n: int, k: int, seed: int, rank: int | None = None) -> np.ndarray:
    """Gaussian D, optionally rank-deficient via D = D1 P^T with orthonormal P."""
    rng = np.random.default_rng(seed)
    if rank is None or rank >= min(n, k):
        return rng.standard_normal((n, k))
    d1 = rng.standard_normal((n, rank))
    q, r = np.linalg.qr(rng.standard_normal((k, rank)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return d1 @ (q * signs).T


def ex1_problem(alpha: float) -> NepvProblem:
    return make_alpha_problem(EX1_A, EX1_B, EX1_D, alpha)


def ex2_problem(alpha: float) -> NepvProblem:
    return make_alpha_problem(EX1_A, EX1_B, EX2_D, alpha)


def ex3_problem(alpha: float, n: int = 200, k: int = 40, seed: int = 7,
                rank: int | None = None) -> NepvProblem:
    return make_alpha_problem(tridiag_stiffness(n), index_diag(n),
                              random_d(n, k, seed, rank), alpha)


def ex4_problem(theta: float) -> NepvProblem:
    return make_theta_problem(EX1_A, EX1_B, EX1_D, theta)


def ex5_problem(theta: float) -> NepvProblem:
    return make_theta_problem(EX5_A, EX5_B, EX5_D, theta)


def ex6_problem(theta: float, n: int = 200, k: int = 50, seed: int = 7,
                rank: int | None = 20) -> NepvProblem:
    return make_theta_problem(tridiag_stiffness(n), index_diag(n),
                              random_d(n, k, seed, rank), theta)

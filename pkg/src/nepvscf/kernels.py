"""Dense linear-algebra kernels used throughout the package.

All eigenvalue and singular-value orderings are descending.  Functions are
pure and safe for concurrent use.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .errors import DefinitenessError, OrthonormalityError, SymmetryError

DEFAULT_RANK_TOL = 1e-12
DEFAULT_DENSE_CAP = 5000


@dataclass
class SymEigResult:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending."""

    values: np.ndarray   # (n,) non-increasing
    vectors: np.ndarray  # (n, n) or (n, k), columns aligned with values


@dataclass
class TopKEigResult:
    """Top-k block of a symmetric eigendecomposition plus the gap below it."""

    values: np.ndarray      # (k,) the k largest eigenvalues, descending
    vectors: np.ndarray     # (n, k) orthonormal basis of the invariant subspace
    lambda_next: float      # lambda_{k+1}, or -inf when k == n
    gap: float              # lambda_k - lambda_{k+1}


@dataclass
class SvdResult:
    """Economy SVD with a numerical-rank partition."""

    u: np.ndarray            # (m, q) left singular vectors
    sigma: np.ndarray        # (q,) non-increasing, nonnegative
    v: np.ndarray            # (n, q) right singular vectors (columns)
    numerical_rank: int      # count of sigma_i > rank_tol * sigma_1
    rank_tol: float

    @property
    def u1(self) -> np.ndarray:
        return self.u[:, : self.numerical_rank]

    @property
    def u2(self) -> np.ndarray:
        return self.u[:, self.numerical_rank:]

    @property
    def v1(self) -> np.ndarray:
        return self.v[:, : self.numerical_rank]

    @property
    def v2(self) -> np.ndarray:
        return self.v[:, self.numerical_rank:]


@dataclass
class SpectralRadiusResult:
    rho: float
    method: str          # "dense" or "power"
    converged: bool
    iterations: int = 0


def require_symmetric(s: np.ndarray, tol: Optional[float] = None, name: str = "matrix") -> np.ndarray:
    """Return the symmetrized matrix, rejecting asymmetry beyond ``tol``."""
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"{name} must be square, got shape {s.shape}")
    scale = np.linalg.norm(s)
    if tol is None:
        tol = 1e-10 * max(scale, 1.0)
    defect = np.linalg.norm(s - s.T)
    if defect > tol:
        raise SymmetryError(f"{name} is not symmetric: ||S - S^T|| = {defect:.3e} > {tol:.3e}")
    return 0.5 * (s + s.T)


def sym_eig(s: np.ndarray, sym_tol: Optional[float] = None) -> SymEigResult:
    """Full eigendecomposition of a symmetric matrix, values descending."""
    s = require_symmetric(s, sym_tol, name="sym_eig input")
    w, v = np.linalg.eigh(s)
    return SymEigResult(values=w[::-1].copy(), vectors=v[:, ::-1].copy())


def sym_eig_topk(s: np.ndarray, k: int, sym_tol: Optional[float] = None) -> TopKEigResult:
    """Eigenbasis of the ``k`` largest eigenvalues of symmetric ``s``.

    Also reports lambda_{k+1} so callers can monitor the spectral gap.
    """
    s = require_symmetric(s, sym_tol, name="sym_eig_topk input")
    n = s.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    full = sym_eig(s, sym_tol=np.inf)  # already symmetrized above
    values = full.values[:k]
    vectors = full.vectors[:, :k]
    lambda_next = full.values[k] if k < n else -np.inf
    gap = values[-1] - lambda_next
    return TopKEigResult(values=values, vectors=vectors, lambda_next=lambda_next, gap=gap)


def svd_econ(mtx: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> SvdResult:
    """Economy SVD of ``mtx`` with a relative numerical-rank cut."""
    if rank_tol <= 0:
        raise ValueError(f"rank_tol must be positive, got {rank_tol}")
    mtx = np.asarray(mtx, dtype=float)
    u, sigma, vt = np.linalg.svd(mtx, full_matrices=False)
    if sigma.size == 0 or sigma[0] == 0.0:
        rank = 0
    else:
        rank = int(np.count_nonzero(sigma > rank_tol * sigma[0]))
    return SvdResult(u=u, sigma=sigma, v=vt.T.copy(), numerical_rank=rank, rank_tol=rank_tol)


def solve_lyapunov_spd(m1: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Solve ``M1 L + L M1 = C`` for symmetric ``L`` with SPD ``M1``.

    Spectral method: with M1 = W diag(lam) W^T, the solution is
    L = W ((W^T C W)_{ij} / (lam_i + lam_j)) W^T.
    """
    m1 = require_symmetric(m1, name="Lyapunov coefficient")
    c = require_symmetric(c, name="Lyapunov right-hand side")
    lam, w = np.linalg.eigh(m1)
    if lam.size and lam[0] <= 0.0:
        raise DefinitenessError(
            f"Lyapunov coefficient is not positive definite (min eigenvalue {lam[0]:.3e})"
        )
    rhs = w.T @ c @ w
    l = w @ (rhs / (lam[:, None] + lam[None, :])) @ w.T
    return 0.5 * (l + l.T)


def require_orthonormal(x: np.ndarray, tol: float = 1e-10, name: str = "matrix") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    k = x.shape[1]
    defect = np.linalg.norm(x.T @ x - np.eye(k))
    if defect > tol:
        raise OrthonormalityError(
            f"{name} does not have orthonormal columns: ||X^T X - I|| = {defect:.3e} > {tol:.3e}"
        )
    return x


def principal_angles(x: np.ndarray, y: np.ndarray, orth_tol: float = 1e-10):
    """Canonical angles between R(x) and R(y), plus the Frobenius sine norm.

    The angles come from the clamped singular values of X^T Y; the sine norm
    is computed separately from (I - Y Y^T) X, which is accurate for small
    angles where 1 - cos underflows.
    """
    x = require_orthonormal(x, orth_tol, name="first subspace basis")
    y = require_orthonormal(y, orth_tol, name="second subspace basis")
    cosines = np.linalg.svd(x.T @ y, compute_uv=False)
    angles = np.arccos(np.clip(cosines, -1.0, 1.0))[::-1].copy()  # non-decreasing
    sines = np.linalg.svd(x - y @ (y.T @ x), compute_uv=False)
    sin_theta_fro = float(np.linalg.norm(sines))
    return angles, sin_theta_fro


def sin_theta(x: np.ndarray, y: np.ndarray) -> float:
    """Frobenius norm of the sines of the canonical angles between two bases.

    No orthonormality validation; used in per-iteration tracking loops.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sines = np.linalg.svd(x - y @ (y.T @ x), compute_uv=False)
    return float(np.linalg.norm(sines))


def matricize(op: Callable[[np.ndarray], np.ndarray], shape: tuple[int, int]) -> np.ndarray:
    """Dense matrix of a linear operator on ``shape`` matrices.

    Columns follow the column-major (Fortran) vectorization of the canonical
    basis E_{ij}, so ``matricize(op) @ vec(Z) == vec(op(Z))``.
    """
    rows, cols = shape
    m = rows * cols
    k = np.empty((m, m))
    e = np.zeros(shape)
    for j in range(cols):
        for i in range(rows):
            e[i, j] = 1.0
            k[:, j * rows + i] = np.asarray(op(e), dtype=float).reshape(-1, order="F")
            e[i, j] = 0.0
    return k


def _check_linearity(op, shape, rng: np.random.Generator, rel_tol: float = 1e-8) -> None:
    z1 = rng.standard_normal(shape)
    z2 = rng.standard_normal(shape)
    a, b = 0.37, -1.21
    lhs = op(a * z1 + b * z2)
    rhs = a * op(z1) + b * op(z2)
    scale = np.linalg.norm(rhs) + 1.0
    if np.linalg.norm(lhs - rhs) > rel_tol * scale:
        raise ValueError("operator failed the stochastic linearity probe")


def spectral_radius(
    op: Callable[[np.ndarray], np.ndarray],
    shape: tuple[int, int],
    method: str = "auto",
    tol: float = 1e-10,
    dense_cap: int = DEFAULT_DENSE_CAP,
    max_iters: int = 10000,
    seed: int = 0,
) -> SpectralRadiusResult:
    """Spectral radius of a linear operator on ``shape`` matrices.

    method="dense" matricizes the operator and takes the largest modulus of
    all eigenvalues; method="power" runs a matrix-free Arnoldi iteration
    (ARPACK) for the largest-magnitude eigenvalue, which copes with complex
    dominant pairs where a plain power iteration would oscillate.  "auto"
    picks dense when rows*cols <= dense_cap.
    """
    rows, cols = shape
    m = rows * cols
    rng = np.random.default_rng(seed)
    _check_linearity(op, shape, rng)
    if method == "auto":
        method = "dense" if m <= dense_cap else "power"
    if method == "dense":
        if m > dense_cap:
            raise ValueError(f"dense matricization of dimension {m} exceeds cap {dense_cap}")
        k = matricize(op, shape)
        rho = float(np.max(np.abs(np.linalg.eigvals(k)))) if m else 0.0
        return SpectralRadiusResult(rho=rho, method="dense", converged=True)
    if method != "power":
        raise ValueError(f"unknown method {method!r}")

    def matvec(z):
        return np.asarray(op(z.reshape(shape, order="F"))).reshape(-1, order="F")

    if m < 5:
        # ARPACK needs k < m - 1; tiny operators go dense regardless.
        k = matricize(op, shape)
        rho = float(np.max(np.abs(np.linalg.eigvals(k)))) if m else 0.0
        return SpectralRadiusResult(rho=rho, method="dense", converged=True)
    linop = scipy.sparse.linalg.LinearOperator((m, m), matvec=matvec, dtype=float)
    v0 = rng.standard_normal(m)
    try:
        vals = scipy.sparse.linalg.eigs(
            linop, k=1, which="LM", tol=tol, maxiter=max_iters, v0=v0,
            return_eigenvectors=False,
        )
        return SpectralRadiusResult(rho=float(np.max(np.abs(vals))), method="power", converged=True)
    except scipy.sparse.linalg.ArpackNoConvergence as exc:
        vals = exc.eigenvalues
        if vals is not None and len(vals):
            rho = float(np.max(np.abs(vals)))
        else:
            rho = _plain_power_estimate(op, shape, rng, max_iters=200)
        return SpectralRadiusResult(rho=rho, method="power", converged=False)


def _plain_power_estimate(op, shape, rng, max_iters: int = 200) -> float:
    """Growth-rate fallback; averages per-step norm gains over a tail window."""
    z = rng.standard_normal(shape)
    z /= np.linalg.norm(z)
    gains = []
    for _ in range(max_iters):
        w = op(z)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        gains.append(nw)
        z = w / nw
    tail = gains[-20:]
    return float(np.exp(np.mean(np.log(tail))))

"""Basis alignment, regularity tests, and canonical polar factor calculus.

Alignment replaces X by X Q with orthogonal Q maximizing tr(Q^T X^T D),
which makes X^T D symmetric positive semidefinite.  On rank-preserving
points (rank(X^T D) = rank(D)) the canonical polar factors of X^T D are
smooth in X; their Frechet derivatives feed the convergence-rate operators.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import RankPreservingError
from .kernels import DEFAULT_RANK_TOL, solve_lyapunov_spd, svd_econ, SvdResult
from .problems import StiefelPoint, as_matrix, _checked

Matrix = np.ndarray


@dataclass
class DFactorization:
    """Rank factorization D = D1 P^T with full-column-rank D1, orthonormal P."""

    d1: Matrix        # (n, r)
    p: Matrix         # (k, r), P^T P = I_r
    r: int
    rank_tol: float


@dataclass
class AlignmentResult:
    aligned_x: StiefelPoint
    q: Matrix          # (k, k) orthogonal rotation applied
    svd: SvdResult     # SVD of X^T D
    ell: int           # numerical rank of X^T D


@dataclass
class RegularityReport:
    definite: bool
    rank_preserving: bool
    min_eig: float     # smallest eigenvalue of sym(X^T D)
    ell: int
    r: int
    sym_defect: float  # ||X^T D - (X^T D)^T|| / sigma_1


@dataclass
class CanonicalPolarBundle:
    """Canonical polar factors of X^T D, carried with the D factorization.

    X^T D = q_o m with partial isometry q_o and PSD m; equivalently the
    full-rank polar X^T D1 = q1 m1 lifted by q_o = q1 P^T, m = P m1 P^T.
    """

    q_o: Matrix        # (k, k)
    m: Matrix          # (k, k) symmetric PSD
    q1: Matrix         # (k, r) orthonormal columns
    m1: Matrix         # (r, r) symmetric positive definite
    fact: DFactorization

    @property
    def tr_m(self) -> float:
        return float(np.trace(self.m1))


@dataclass
class PolarDerivative:
    dm: Matrix         # (k, k)
    dq_o: Matrix       # (k, k)
    l: Matrix          # (r, r) Lyapunov solution, tr(l) == tr(dm)


def factor_d(d: Matrix, rank_tol: float = DEFAULT_RANK_TOL) -> DFactorization:
    """Factor D = D1 P^T through its SVD; r is the numerical rank.

    D = 0 yields r = 0 with empty factors (the problem is then unitarily
    invariant and alignment degenerates to the identity).
    """
    d = np.asarray(d, dtype=float)
    res = svd_econ(d, rank_tol=rank_tol)
    r = res.numerical_rank
    d1 = res.u1 * res.sigma[:r]
    return DFactorization(d1=d1, p=res.v1.copy(), r=r, rank_tol=rank_tol)


def align(x, d: Matrix, rank_tol: float = DEFAULT_RANK_TOL, validate: bool = True) -> AlignmentResult:
    """Rotate X so that X^T D becomes symmetric positive semidefinite.

    Q is the orthogonal polar factor U V^T of X^T D (the free block for a
    rank-deficient X^T D is fixed to the identity, which keeps alignment
    deterministic and idempotent).  X^T D = 0 returns Q = I.
    """
    xm = _checked(x, validate)
    d = np.asarray(d, dtype=float)
    res = svd_econ(xm.T @ d, rank_tol=rank_tol)
    ell = res.numerical_rank
    if ell == 0:
        q = np.eye(xm.shape[1])
    else:
        q = res.u @ res.v.T
    return AlignmentResult(
        aligned_x=StiefelPoint(xm @ q), q=q, svd=res, ell=ell,
    )


def regularity_check(
    x, d: Matrix,
    sym_tol: float = 1e-8,
    psd_tol: float = 1e-8,
    rank_tol: float = DEFAULT_RANK_TOL,
    validate: bool = True,
) -> RegularityReport:
    """Diagnose the definiteness and rank-preserving conditions at X.

    definite: X^T D symmetric (relative to sigma_1) with sym part >= -psd_tol * sigma_1.
    rank_preserving: numerical rank of X^T D equals that of D.
    """
    xm = _checked(x, validate)
    d = np.asarray(d, dtype=float)
    xtd = xm.T @ d
    sig = np.linalg.svd(xtd, compute_uv=False)
    sigma1 = float(sig[0]) if sig.size else 0.0
    scale = max(sigma1, 1e-300)
    sym_defect = float(np.linalg.norm(xtd - xtd.T)) / scale
    sym_part = 0.5 * (xtd + xtd.T)
    min_eig = float(np.linalg.eigvalsh(sym_part)[0]) if xtd.size else 0.0
    definite = (sigma1 == 0.0) or (sym_defect <= sym_tol and min_eig >= -psd_tol * sigma1)
    ell = int(np.count_nonzero(sig > rank_tol * sigma1)) if sigma1 > 0 else 0
    r = factor_d(d, rank_tol).r
    return RegularityReport(
        definite=definite, rank_preserving=(ell == r),
        min_eig=min_eig, ell=ell, r=r, sym_defect=sym_defect,
    )


def canonical_polar(x, fact: DFactorization) -> CanonicalPolarBundle:
    """Canonical polar factors of X^T D from the polar of X^T D1.

    Requires X^T D1 to have full column rank r (the rank-preserving
    condition); orthonormality of X is not needed, which lets finite
    difference probes evaluate slightly off the manifold.
    """
    xm = as_matrix(x)
    r = fact.r
    k = xm.shape[1]
    if r == 0:
        return CanonicalPolarBundle(
            q_o=np.zeros((k, k)), m=np.zeros((k, k)),
            q1=np.zeros((k, 0)), m1=np.zeros((0, 0)), fact=fact,
        )
    z = xm.T @ fact.d1
    u, sig, vt = np.linalg.svd(z, full_matrices=False)
    if sig[-1] <= fact.rank_tol * sig[0]:
        raise RankPreservingError(
            f"rank-preserving condition fails: sigma_min(X^T D1) = {sig[-1]:.3e} "
            f"<= {fact.rank_tol:.1e} * sigma_max = {fact.rank_tol * sig[0]:.3e}"
        )
    q1 = u @ vt
    m1 = (vt.T * sig) @ vt
    m1 = 0.5 * (m1 + m1.T)
    q_o = q1 @ fact.p.T
    m = fact.p @ m1 @ fact.p.T
    return CanonicalPolarBundle(q_o=q_o, m=0.5 * (m + m.T), q1=q1, m1=m1, fact=fact)


def d_canonical_polar(x, e: Matrix, fact: DFactorization,
                      bundle: Optional[CanonicalPolarBundle] = None) -> PolarDerivative:
    """Frechet derivatives of the canonical polar factors of X^T D along E.

    Solves M1 L + L M1 = D1^T (X E^T + E X^T) D1 and assembles
    dM = P L P^T,  dQ_o = (E^T D P - Q_o P L) M1^{-1} P^T.
    """
    xm = as_matrix(x)
    e = np.asarray(e, dtype=float)
    if bundle is None:
        bundle = canonical_polar(xm, fact)
    k = xm.shape[1]
    if fact.r == 0:
        return PolarDerivative(dm=np.zeros((k, k)), dq_o=np.zeros((k, k)), l=np.zeros((0, 0)))
    xe = xm @ e.T
    rhs = fact.d1.T @ (xe + xe.T) @ fact.d1
    l = solve_lyapunov_spd(bundle.m1, 0.5 * (rhs + rhs.T))
    dm = fact.p @ l @ fact.p.T
    # E^T D P = E^T D1 and Q_o P = Q1 since P^T P = I_r; apply M1^{-1} by a
    # Cholesky solve, never an explicit inverse
    cho = scipy.linalg.cho_factor(bundle.m1)
    num = e.T @ fact.d1 - bundle.q1 @ l
    dq_o = scipy.linalg.cho_solve(cho, num.T).T @ fact.p.T
    return PolarDerivative(dm=0.5 * (dm + dm.T), dq_o=dq_o, l=l)


def d_polar_full(z: Matrix, y: Matrix):
    """Derivatives of the polar factors of a full-column-rank matrix Z.

    Z = Q M with orthonormal Q and SPD M = (Z^T Z)^{1/2}; along direction Y,
    dM = L solving M L + L M = Y^T Z + Z^T Y and dQ = (Y - Q L) M^{-1}.
    Returns a PolarDerivative with dq_o holding dQ.
    """
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    u, sig, vt = np.linalg.svd(z, full_matrices=False)
    if sig.size == 0 or sig[-1] <= 0.0 or sig[-1] <= 1e-14 * sig[0]:
        raise RankPreservingError("polar derivatives need a full-column-rank matrix")
    q = u @ vt
    m = (vt.T * sig) @ vt
    m = 0.5 * (m + m.T)
    rhs = y.T @ z + z.T @ y
    l = solve_lyapunov_spd(m, 0.5 * (rhs + rhs.T))
    cho = scipy.linalg.cho_factor(m)
    dq = scipy.linalg.cho_solve(cho, (y - q @ l).T).T
    return PolarDerivative(dm=l, dq_o=dq, l=l)

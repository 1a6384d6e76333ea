"""Problem records for NEPv of the form H(X) X = X Lambda.

The coefficient matrix is assembled from unitarily invariant parts as

    H(X) = H_phi(X) + tr(X^T D) * H_psi(X) + psi(X) * (D X^T + X D^T),

which is the KKT operator of maximizing phi(X) + psi(X) * tr(X^T D) over
matrices with orthonormal columns.  Two concrete families are provided:
an alpha-weighted trace-ratio family and a theta-power family.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import DefinitenessError, DegenerateProblemError, OrthonormalityError, PositivityError
from .kernels import require_symmetric

DEFAULT_ORTH_TOL = 1e-10

Matrix = np.ndarray


@dataclass(frozen=True)
class StiefelPoint:
    """An n-by-k real matrix with orthonormal columns."""

    matrix: Matrix

    @classmethod
    def from_matrix(cls, m: Matrix, reorthonormalize: bool = False,
                    orth_tol: float = DEFAULT_ORTH_TOL) -> "StiefelPoint":
        m = np.asarray(m, dtype=float)
        if m.ndim != 2:
            raise ValueError(f"expected a 2-d matrix, got shape {m.shape}")
        drift = np.linalg.norm(m.T @ m - np.eye(m.shape[1]))
        if drift > orth_tol:
            if not reorthonormalize:
                raise OrthonormalityError(
                    f"columns are not orthonormal: ||X^T X - I|| = {drift:.3e} > {orth_tol:.3e}"
                )
            q, r = np.linalg.qr(m)
            # fix the QR sign freedom so the factorization is deterministic
            signs = np.sign(np.diag(r))
            signs[signs == 0] = 1.0
            m = q * signs
        return cls(matrix=m)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


def as_matrix(x) -> Matrix:
    """Accept a StiefelPoint or a plain array and return the ndarray."""
    if isinstance(x, StiefelPoint):
        return x.matrix
    return np.asarray(x, dtype=float)


def _checked(x, validate: bool, orth_tol: float = DEFAULT_ORTH_TOL) -> Matrix:
    m = as_matrix(x)
    if validate:
        drift = np.linalg.norm(m.T @ m - np.eye(m.shape[1]))
        if drift > orth_tol:
            raise OrthonormalityError(
                f"columns are not orthonormal: ||X^T X - I|| = {drift:.3e} > {orth_tol:.3e}"
            )
    return m


@dataclass
class NepvProblem:
    """Callbacks and data defining one NEPv instance.

    The derivative callbacks take (X, E) and return the Frechet derivative of
    the corresponding matrix (or scalar, for ``dpsi``) along direction E,
    with X treated as an unconstrained matrix variable.
    """

    dim_n: int
    dim_k: int
    d: Matrix
    phi: Callable[[Matrix], float]
    psi: Callable[[Matrix], float]
    h_phi: Callable[[Matrix], Matrix]
    h_psi: Callable[[Matrix], Matrix]
    dh_phi: Optional[Callable[[Matrix, Matrix], Matrix]] = None
    dh_psi: Optional[Callable[[Matrix, Matrix], Matrix]] = None
    dpsi: Optional[Callable[[Matrix, Matrix], float]] = None
    family: Optional[str] = None
    params: dict = field(default_factory=dict)
    allow_zero_psi: bool = False
    _dfact: object = field(default=None, repr=False)

    def d_factorization(self):
        """Cached rank factorization D = D1 P^T (computed on first use)."""
        if self._dfact is None:
            from .alignment import factor_d
            self._dfact = factor_d(self.d)
        return self._dfact


@dataclass
class EigenPairBlock:
    """A candidate eigen-pair (X, Lambda) with Lambda = X^T H(X) X."""

    lam: Matrix
    x: StiefelPoint


def psi_value(p: NepvProblem, x: Matrix) -> float:
    val = float(p.psi(x))
    if val < 0.0 or (val == 0.0 and not p.allow_zero_psi):
        raise PositivityError(f"psi(X) = {val:.3e} must be positive")
    return val


def objective(p: NepvProblem, x, validate: bool = True) -> float:
    """f(X) = phi(X) + psi(X) * tr(X^T D)."""
    m = _checked(x, validate)
    return float(p.phi(m)) + psi_value(p, m) * float(np.trace(m.T @ p.d))


def build_h(p: NepvProblem, x, validate: bool = True) -> Matrix:
    """Assemble the coefficient matrix H(X); symmetric by construction."""
    m = _checked(x, validate)
    dxt = p.d @ m.T
    return p.h_phi(m) + float(np.trace(m.T @ p.d)) * p.h_psi(m) + psi_value(p, m) * (dxt + dxt.T)


def nres(p: NepvProblem, x, validate: bool = True) -> float:
    """Normalized residual ||H X - X (X^T H X)||_1 / ||H||_1."""
    m = _checked(x, validate)
    h = build_h(p, m, validate=False)
    denom = np.linalg.norm(h, 1)
    if denom == 0.0:
        raise DegenerateProblemError("H(X) vanishes; the residual is undefined")
    hx = h @ m
    return float(np.linalg.norm(hx - m @ (m.T @ hx), 1) / denom)


def _check_spd(b: Matrix, name: str = "B") -> Matrix:
    b = require_symmetric(b, name=name)
    try:
        scipy.linalg.cholesky(b)
    except scipy.linalg.LinAlgError as exc:
        raise DefinitenessError(f"{name} must be positive definite") from exc
    return b


def make_alpha_problem(a: Matrix, b: Matrix, d: Matrix, alpha: float) -> NepvProblem:
    """Weighted trace-ratio family.

    phi(X) = (1-alpha) tr(X^T A X) / tr(X^T B X),
    psi(X) = alpha / sqrt(tr(X^T B X)).

    alpha outside [0, 1] is allowed (the formulas stay valid); at alpha = 0
    the psi term vanishes and the problem is plainly unitarily invariant.
    """
    a = require_symmetric(a, name="A")
    b = _check_spd(b)
    d = np.asarray(d, dtype=float)
    n = a.shape[0]
    k = d.shape[1]
    alpha = float(alpha)

    def phi(x):
        return (1.0 - alpha) * np.trace(x.T @ (a @ x)) / np.trace(x.T @ (b @ x))

    def psi(x):
        return alpha / np.sqrt(np.trace(x.T @ (b @ x)))

    def h_phi(x):
        t = np.trace(x.T @ (b @ x))
        return (2.0 / t) * ((1.0 - alpha) * a - phi(x) * b)

    def h_psi(x):
        t = np.trace(x.T @ (b @ x))
        return (-psi(x) / t) * b

    def dh_phi(x, e):
        t = np.trace(x.T @ (b @ x))
        hp = h_phi(x)
        return (-2.0 * np.trace(x.T @ (b @ e)) / t) * hp - (2.0 * np.trace(x.T @ (hp @ e)) / t) * b

    def dh_psi(x, e):
        t = np.trace(x.T @ (b @ x))
        return (-3.0 * np.trace(x.T @ (h_psi(x) @ e)) / t) * b

    def dpsi(x, e):
        return float(np.trace(x.T @ (h_psi(x) @ e)))

    return NepvProblem(
        dim_n=n, dim_k=k, d=d,
        phi=phi, psi=psi, h_phi=h_phi, h_psi=h_psi,
        dh_phi=dh_phi, dh_psi=dh_psi, dpsi=dpsi,
        family="alpha", params={"a": a, "b": b, "alpha": alpha},
        allow_zero_psi=(alpha == 0.0),
    )


def make_theta_problem(a: Matrix, b: Matrix, d: Matrix, theta: float) -> NepvProblem:
    """Power-weighted trace family.

    phi(X) = tr(X^T A X) / tr(X^T B X)^theta,
    psi(X) = 1 / tr(X^T B X)^theta.

    At theta = 0 this is the unbalanced orthogonal Procrustes problem with
    H(X) = 2A + D X^T + X D^T.
    """
    a = require_symmetric(a, name="A")
    b = _check_spd(b)
    d = np.asarray(d, dtype=float)
    n = a.shape[0]
    k = d.shape[1]
    theta = float(theta)

    def psi(x):
        return np.trace(x.T @ (b @ x)) ** (-theta)

    def phi(x):
        return np.trace(x.T @ (a @ x)) * psi(x)

    def h_phi(x):
        t = np.trace(x.T @ (b @ x))
        s = np.trace(x.T @ (a @ x))
        return 2.0 * psi(x) * (a - theta * (s / t) * b)

    def h_psi(x):
        t = np.trace(x.T @ (b @ x))
        return (-2.0 * theta * psi(x) / t) * b

    def dh_phi(x, e):
        t = np.trace(x.T @ (b @ x))
        s = np.trace(x.T @ (a @ x))
        # theta set to 1 inside the bracket only; the psi weight keeps theta
        h_phi_1 = 2.0 * psi(x) * (a - (s / t) * b)
        return (-2.0 * theta * np.trace(x.T @ (b @ e)) / t) * h_phi_1 \
            - (2.0 * theta * np.trace(x.T @ (h_phi(x) @ e)) / t) * b

    def dh_psi(x, e):
        t = np.trace(x.T @ (b @ x))
        return (-2.0 * (theta + 1.0) * np.trace(x.T @ (h_psi(x) @ e)) / t) * b

    def dpsi(x, e):
        return float(np.trace(x.T @ (h_psi(x) @ e)))

    return NepvProblem(
        dim_n=n, dim_k=k, d=d,
        phi=phi, psi=psi, h_phi=h_phi, h_psi=h_psi,
        dh_phi=dh_phi, dh_psi=dh_psi, dpsi=dpsi,
        family="theta", params={"a": a, "b": b, "theta": theta},
    )

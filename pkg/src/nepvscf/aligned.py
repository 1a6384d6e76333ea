"""The aligned coefficient matrix G(X), its derivative, and the aligned objective.

G(X) = H_phi(X) + tr(M) H_psi(X) + psi(X) (D Q_o^T X^T + X Q_o D^T), where
Q_o, M are the canonical polar factors of X^T D.  G agrees with H at every
aligned rotation of X, is unitarily invariant, and is differentiable on the
set of rank-preserving X, which is what the local rate analysis needs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .alignment import CanonicalPolarBundle, canonical_polar
from .errors import NepvError
from .problems import NepvProblem, _checked, psi_value

Matrix = np.ndarray


@dataclass
class AlignedEvaluation:
    g: Matrix
    bundle: CanonicalPolarBundle
    phi_val: float
    psi_val: float
    tr_m: float


def g_matrix(p: NepvProblem, x, validate: bool = True) -> AlignedEvaluation:
    """Evaluate G(X) directly from the canonical polar factors of X^T D.

    Raises RankPreservingError when rank(X^T D) < rank(D); there G is not
    defined.  This direct assembly avoids materializing any particular
    alignment of X (the align-then-H route is kept as a test oracle).
    """
    xm = _checked(x, validate)
    bundle = canonical_polar(xm, p.d_factorization())
    phi_val = float(p.phi(xm))
    psi_val = psi_value(p, xm)
    tr_m = bundle.tr_m
    dqx = p.d @ bundle.q_o.T @ xm.T
    g = p.h_phi(xm) + tr_m * p.h_psi(xm) + psi_val * (dqx + dqx.T)
    return AlignedEvaluation(g=g, bundle=bundle, phi_val=phi_val, psi_val=psi_val, tr_m=tr_m)


class DgOperator:
    """Directional derivative E -> DG(X)[E] with per-X quantities precomputed.

    Building one of these once and applying it to many directions is what
    the rate operators do; ``dg`` below is the one-shot convenience form.
    """

    def __init__(self, p: NepvProblem, x, validate: bool = True):
        if p.dh_phi is None or p.dh_psi is None or p.dpsi is None:
            raise NepvError("problem lacks dh_phi/dh_psi/dpsi derivative callbacks")
        xm = _checked(x, validate)
        self.p = p
        self.x = xm
        self.fact = p.d_factorization()
        self.bundle = canonical_polar(xm, self.fact)
        self.psi_val = psi_value(p, xm)
        self.tr_m = self.bundle.tr_m
        self.h_psi_x = p.h_psi(xm)
        dq = p.d @ self.bundle.q_o.T
        self.sym_dq_xt = dq @ xm.T + xm @ dq.T   # D Q_o^T X^T + X Q_o D^T
        r = self.fact.r
        if r:
            lam, w = np.linalg.eigh(self.bundle.m1)
            self._lam = lam
            self._w = w
            self._cho = scipy.linalg.cho_factor(self.bundle.m1)

    def _polar_derivative(self, e: Matrix):
        """dM trace and dQ_o along E, reusing the M1 eigendecomposition."""
        fact, bundle = self.fact, self.bundle
        if fact.r == 0:
            k = self.x.shape[1]
            return 0.0, np.zeros((k, k))
        xe = self.x @ e.T
        rhs = fact.d1.T @ (xe + xe.T) @ fact.d1
        rhs = 0.5 * (rhs + rhs.T)
        w, lam = self._w, self._lam
        l = w @ ((w.T @ rhs @ w) / (lam[:, None] + lam[None, :])) @ w.T
        num = e.T @ fact.d1 - bundle.q1 @ l
        dq_o = scipy.linalg.cho_solve(self._cho, num.T).T @ fact.p.T
        return float(np.trace(l)), dq_o

    def __call__(self, e: Matrix) -> Matrix:
        p, xm = self.p, self.x
        e = np.asarray(e, dtype=float)
        tr_dm, dq_o = self._polar_derivative(e)
        out = p.dh_phi(xm, e)
        out = out + tr_dm * self.h_psi_x
        out = out + self.tr_m * p.dh_psi(xm, e)
        out = out + p.dpsi(xm, e) * self.sym_dq_xt
        t5 = p.d @ dq_o.T @ xm.T
        out = out + self.psi_val * (t5 + t5.T)
        t6 = p.d @ self.bundle.q_o.T @ e.T
        out = out + self.psi_val * (t6 + t6.T)
        return out


def dg(p: NepvProblem, x, e: Matrix, validate: bool = True) -> Matrix:
    """DG(X)[E]: Frechet derivative of the aligned coefficient matrix."""
    return DgOperator(p, x, validate=validate)(e)


def aligned_objective(p: NepvProblem, x, validate: bool = True) -> float:
    """g(X) = phi(X) + psi(X) * sum of singular values of X^T D.

    Equals the original objective at any alignment of X, and is defined for
    every orthonormal X (no rank-preserving requirement).
    """
    xm = _checked(x, validate)
    sig = np.linalg.svd(xm.T @ p.d, compute_uv=False)
    return float(p.phi(xm)) + psi_value(p, xm) * float(np.sum(sig))

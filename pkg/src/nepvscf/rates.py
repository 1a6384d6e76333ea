"""Solution certificates, local rate operators, and observed-rate estimation.

At a certified solution the SCF error dynamics linearize to

    L(Z) = S .* (Xp^T DG(X*)[Xp Z] Xb),   S_ij = 1/(lambda_j - lambda_{k+i}),

acting on (n-k)-by-k matrices, where Xb/Xp are eigenvector bases of the top
and bottom blocks of G(X*).  The spectral radius rho(L) is the asymptotic
per-step contraction factor of the iteration in subspace angle; the shifted
variant L_sigma(Z) = S_sigma .* Q(Z) + Z governs the level-shifted scheme.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse.linalg

from .aligned import DgOperator, g_matrix
from .alignment import RegularityReport, canonical_polar, d_canonical_polar, regularity_check
from .errors import CapabilityError, GapError, MispositionError, RankPreservingError, SingularScalingError
from .kernels import (
    DEFAULT_DENSE_CAP,
    matricize,
    sin_theta,
    spectral_radius,
    sym_eig,
)
from .problems import NepvProblem, StiefelPoint, as_matrix, nres
from .solver import ScfReport

Matrix = np.ndarray


@dataclass
class SolutionCertificate:
    """Eigen-structure of G at a converged solution, ready for rate analysis.

    ``x_star`` keeps the solution basis as handed in (aligned, D-regular);
    ``x_basis``/``x_perp`` hold eigenvector bases of the top and bottom
    blocks, which the Hadamard-scaled operators require.
    """

    x_star: StiefelPoint
    lambda_star: np.ndarray      # (k,) descending
    lambda_perp: np.ndarray      # (n-k,) descending
    x_perp: Matrix               # (n, n-k)
    gap: float                   # lambda_k - lambda_{k+1}
    regular: RegularityReport
    nres_at_star: float
    x_basis: Matrix              # (n, k) eigenvectors spanning R(x_star)
    g: Matrix                    # G(x_star)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.g.shape[0]

    @property
    def k(self) -> int:
        return self.x_basis.shape[1]

    @property
    def operator_shape(self) -> tuple[int, int]:
        return (self.n - self.k, self.k)

    def shift_for_repositioning(self) -> float:
        """Any shift beyond lambda_max(G) - lambda_min(G) keeps the target
        eigenvalues on top of the shifted operator."""
        all_vals = np.concatenate([self.lambda_star, self.lambda_perp])
        return float(all_vals.max() - all_vals.min())


@dataclass
class RateEstimate:
    rho: Optional[float] = None
    method: Optional[str] = None
    converged: bool = True
    sigma: Optional[float] = None
    mu_min: Optional[float] = None
    sigma_lower: Optional[float] = None
    asymmetry: Optional[float] = None
    warning: Optional[str] = None


def certify(p: NepvProblem, x_star, cert_tol: float = 1e-10,
            subspace_tol: float = 1e-8) -> SolutionCertificate:
    """Build a SolutionCertificate at a converged, D-regular solution.

    Verifies the residual, the rank-preserving condition, that x_star spans
    the top-k eigenspace of G(x_star), and that the gap is positive.
    """
    xm = as_matrix(x_star)
    res = nres(p, xm)
    if res > cert_tol:
        raise ValueError(f"residual {res:.3e} exceeds certification tolerance {cert_tol:.1e}")
    reg = regularity_check(xm, p.d)
    if not reg.rank_preserving:
        raise RankPreservingError(
            f"rank(X^T D) = {reg.ell} < rank(D) = {reg.r}: solution is not D-regular"
        )
    g = g_matrix(p, xm).g
    eig = sym_eig(g)
    k = xm.shape[1]
    top = eig.vectors[:, :k]
    mismatch = sin_theta(xm, top)
    if mismatch > subspace_tol:
        raise MispositionError(
            f"solution basis is {mismatch:.3e} away from the top-{k} eigenspace; "
            "the target eigenvalues are not the largest ones (consider a level shift)"
        )
    gap = float(eig.values[k - 1] - eig.values[k]) if k < g.shape[0] else np.inf
    if not gap > 0:
        raise GapError(f"nonpositive gap lambda_k - lambda_(k+1) = {gap:.3e}")
    return SolutionCertificate(
        x_star=StiefelPoint(xm), lambda_star=eig.values[:k].copy(),
        lambda_perp=eig.values[k:].copy(), x_perp=eig.vectors[:, k:].copy(),
        gap=gap, regular=reg, nres_at_star=res,
        x_basis=top.copy(), g=g,
    )


class RateOperators:
    """Callable forms of the rate operators at a certificate, with the
    per-point derivative data precomputed and the dense matricization cached."""

    def __init__(self, cert: SolutionCertificate, p: NepvProblem):
        self.cert = cert
        self.dgop = DgOperator(p, cert.x_basis)
        self.shape = cert.operator_shape

    def sandwich(self, z: Matrix) -> Matrix:
        """Xp^T DG(X*)[Xp Z] Xb."""
        c = self.cert
        return c.x_perp.T @ self.dgop(c.x_perp @ z) @ c.x_basis

    def denominators(self, sigma: float = 0.0) -> Matrix:
        c = self.cert
        return c.lambda_star[None, :] - c.lambda_perp[:, None] + sigma

    def apply_q(self, z: Matrix) -> Matrix:
        c = self.cert
        z = np.asarray(z, dtype=float)
        return c.lambda_perp[:, None] * z - z * c.lambda_star[None, :] + self.sandwich(z)

    def apply_l(self, z: Matrix, sigma: Optional[float] = None,
                denom_tol: float = 1e-12) -> Matrix:
        z = np.asarray(z, dtype=float)
        if sigma is None:
            return (1.0 / self.denominators()) * self.sandwich(z)
        denom = self.denominators(sigma)
        scale = max(np.abs(self.cert.lambda_star).max(), 1.0)
        if np.any(denom <= denom_tol * scale):
            raise SingularScalingError(
                f"lambda_j - lambda_(k+i) + sigma has entries <= 0 at sigma = {sigma}"
            )
        return (1.0 / denom) * self.apply_q(z) + z

    def q_matrix(self, dense_cap: int = DEFAULT_DENSE_CAP) -> Matrix:
        """Dense matricization of Q (column-major vec convention), cached."""
        m = self.shape[0] * self.shape[1]
        if m > dense_cap:
            raise CapabilityError(
                f"dense matricization of dimension {m} exceeds cap {dense_cap}"
            )
        key = "q_matrix"
        if key not in self.cert._cache:
            self.cert._cache[key] = matricize(self.apply_q, self.shape)
        return self.cert._cache[key]

    def l_matrix(self, sigma: Optional[float] = None,
                 dense_cap: int = DEFAULT_DENSE_CAP) -> Matrix:
        """Dense L or L_sigma built from the cached Q matricization.

        L_sigma = diag(vec(S_sigma)) Kq + I, which at sigma = 0 coincides
        with the plain operator; only the diagonal scaling depends on sigma,
        so shift sweeps reuse one matricization.
        """
        kq = self.q_matrix(dense_cap)
        denom = self.denominators(0.0 if sigma is None else sigma)
        if sigma is not None:
            scale = max(np.abs(self.cert.lambda_star).max(), 1.0)
            if np.any(denom <= 1e-12 * scale):
                raise SingularScalingError(
                    f"lambda_j - lambda_(k+i) + sigma has entries <= 0 at sigma = {sigma}"
                )
        s_vec = (1.0 / denom).reshape(-1, order="F")
        return s_vec[:, None] * kq + np.eye(kq.shape[0])


def rate_operators(cert: SolutionCertificate, p: NepvProblem) -> RateOperators:
    if "ops" not in cert._cache:
        cert._cache["ops"] = RateOperators(cert, p)
    return cert._cache["ops"]


def apply_L(cert: SolutionCertificate, p: NepvProblem, z: Matrix) -> Matrix:
    """L(Z) = S .* (Xp^T DG(X*)[Xp Z] Xb)."""
    if not cert.gap > 0:
        raise GapError("rate operator needs a positive gap")
    return rate_operators(cert, p).apply_l(z)


def apply_L_shifted(cert: SolutionCertificate, p: NepvProblem, z: Matrix, sigma: float) -> Matrix:
    """L_sigma(Z) = S_sigma .* Q(Z) + Z."""
    return rate_operators(cert, p).apply_l(z, sigma=float(sigma))


def apply_Q(cert: SolutionCertificate, p: NepvProblem, z: Matrix) -> Matrix:
    """Q(Z) = Lambda_perp Z - Z Lambda_star + Xp^T DG(X*)[Xp Z] Xb."""
    return rate_operators(cert, p).apply_q(z)


def rho_L(cert: SolutionCertificate, p: NepvProblem, sigma: Optional[float] = None,
          method: str = "auto", tol: float = 1e-10,
          dense_cap: int = DEFAULT_DENSE_CAP) -> RateEstimate:
    """Spectral radius of L (or L_sigma): the local convergence rate."""
    if not cert.gap > 0:
        raise GapError("rate operator needs a positive gap")
    ops = rate_operators(cert, p)
    m = ops.shape[0] * ops.shape[1]
    if method == "auto":
        method = "dense" if m <= dense_cap else "power"
    if method == "dense":
        kl = ops.l_matrix(sigma=sigma, dense_cap=dense_cap)
        rho = float(np.max(np.abs(np.linalg.eigvals(kl))))
        return RateEstimate(rho=rho, method="dense", converged=True, sigma=sigma)
    res = spectral_radius(lambda z: ops.apply_l(z, sigma=sigma), ops.shape,
                          method="power", tol=tol, dense_cap=dense_cap)
    return RateEstimate(rho=res.rho, method=res.method, converged=res.converged, sigma=sigma)


def sigma_lower(cert: SolutionCertificate, p: NepvProblem,
                asym_tol: float = 1e-6, dense_cap: int = DEFAULT_DENSE_CAP) -> RateEstimate:
    """Level-shift threshold sigma_L = -mu_min/2 - gap.

    mu_min is the smallest eigenvalue of the symmetrized matricization of Q;
    the asymmetry diagnostic ||K - K^T||/||K|| is reported (expected tiny for
    twice-differentiable problems) and flagged, never hidden.
    """
    ops = rate_operators(cert, p)
    m = ops.shape[0] * ops.shape[1]
    if m <= dense_cap:
        kq = ops.q_matrix(dense_cap)
        norm = np.linalg.norm(kq)
        asym = float(np.linalg.norm(kq - kq.T) / norm) if norm > 0 else 0.0
        mu_min = float(np.linalg.eigvalsh(0.5 * (kq + kq.T))[0])
    else:
        # too large to materialize: Lanczos on the operator itself, which is
        # valid to the extent Q is symmetric; probe the asymmetry stochastically
        rng = np.random.default_rng(0)
        probes = []
        for _ in range(5):
            z1 = rng.standard_normal(ops.shape)
            z2 = rng.standard_normal(ops.shape)
            a = float(np.sum(z1 * ops.apply_q(z2)))
            b = float(np.sum(z2 * ops.apply_q(z1)))
            probes.append(abs(a - b) / max(abs(a), abs(b), 1e-300))
        asym = float(max(probes))

        def matvec(v):
            z = v.reshape(ops.shape, order="F")
            return ops.apply_q(z).reshape(-1, order="F")

        linop = scipy.sparse.linalg.LinearOperator((m, m), matvec=matvec, dtype=float)
        vals = scipy.sparse.linalg.eigsh(linop, k=1, which="SA", return_eigenvectors=False)
        mu_min = float(vals[0])
    warning = None
    if asym > asym_tol:
        warning = f"Q matricization asymmetry {asym:.3e} exceeds {asym_tol:.1e}"
    sl = -0.5 * mu_min - cert.gap
    return RateEstimate(mu_min=mu_min, sigma_lower=sl, asymmetry=asym, warning=warning)


def tail_rate(values, window: int = 10, floor: float = 1e-12,
              onset: float = 1e-3) -> Optional[float]:
    """Geometric-mean per-step ratio over the decaying tail of a sequence.

    Uses the last ``window`` ratios before the sequence first dips to
    ``floor`` (censored values excluded); returns None for histories that
    are too short or not decaying below ``onset``.
    """
    s = np.asarray([v for v in values if v is not None and np.isfinite(v)], dtype=float)
    if s.size < 4:
        return None
    censored = np.nonzero(s <= floor)[0]
    if censored.size:
        s = s[: censored[0]]
    # tail segment that has decayed below the onset level
    below = np.nonzero(s < onset)[0]
    if below.size < 4:
        return None
    start = below[0]
    if not np.all(s[start:] < onset):
        # keep only the part after the last excursion above onset
        start = int(np.nonzero(s >= onset)[0][-1]) + 1
    seg = s[start:]
    m = min(window, seg.size - 1)
    if m < 3:
        return None
    first, last = seg[-1 - m], seg[-1]
    if not last < first:
        return None
    return float((last / first) ** (1.0 / m))


def angle_history(report: ScfReport, reference=None) -> Optional[np.ndarray]:
    """Per-iteration subspace angles, from the report or recomputed from
    stored iterates against ``reference``."""
    vals = report.sin_theta_history
    if vals.size and not np.all(np.isnan(vals)):
        return vals
    if report.iterates is not None and reference is not None:
        ref = as_matrix(reference)
        return np.array([sin_theta(x, ref) for x in report.iterates])
    return None


def observed_rate(report: ScfReport, reference=None, metric: str = "angle",
                  window: int = 10, floor: float = 1e-12,
                  onset: float = 1e-3) -> Optional[float]:
    """Observed asymptotic convergence rate from an iteration history.

    metric="angle" uses subspace angles to the reference (the quantity the
    local theory bounds); metric="nres" uses the residual history instead.
    Returns None when the history does not support an estimate.
    """
    if metric == "angle":
        vals = angle_history(report, reference)
        if vals is None:
            return None
    elif metric == "nres":
        vals = report.nres_history
    else:
        raise ValueError(f"unknown metric {metric!r}")
    return tail_rate(vals, window=window, floor=floor, onset=onset)


@dataclass
class FdReport:
    """Worst relative errors of analytic derivatives against central differences."""

    errors: dict
    trials: int
    step: float

    def worst(self) -> float:
        vals = [v for v in self.errors.values() if v is not None]
        return max(vals) if vals else 0.0


def _rel(diff: float, an: float, fd: float = 0.0, ref: float = 0.0) -> float:
    """Relative error with a floor tied to the undifferentiated quantity.

    The floor keeps two degenerate regimes honest: an identically-zero
    analytic derivative must not divide by roundoff, and a finite-difference
    value that is pure cancellation noise (about eps * ref / h, up to
    5e-10 * ref at the smallest step used) must rate well below any real
    defect, which would be O(ref)."""
    return diff / max(an, fd, 1e-4 * ref, 1e-300)


def fd_validate(p: NepvProblem, x, trials: int = 20, step: Optional[float] = None,
                steps: Optional[Sequence[float]] = None, seed: int = 0) -> FdReport:
    """Central-difference check of every derivative the rate analysis uses.

    Reports the worst relative error over ``trials`` random unit directions
    for: the gradient identities of phi and psi, DH_phi, DH_psi, the polar
    factor derivatives DM and DQ_o, and the assembled DG.  Each direction is
    probed at several step sizes and the best agreement kept, balancing
    truncation against cancellation.  Polar entries are None when D = 0
    (nothing to differentiate).
    """
    xm = as_matrix(x)
    n, k = xm.shape
    scale = max(1.0, np.linalg.norm(xm))
    if step is not None:
        step_list = [step]
    else:
        step_list = [h * scale for h in (steps or (1e-4, 1e-5, 1e-6, 1e-7))]
    rng = np.random.default_rng(seed)
    fact = p.d_factorization()
    keys = ["phi_grad", "psi_grad", "dh_phi", "dh_psi", "dm", "dq_o", "dg"]
    worst = {key: (None if fact.r == 0 and key in ("dm", "dq_o") else 0.0) for key in keys}

    grad_phi = p.h_phi(xm) @ xm
    grad_psi = p.h_psi(xm) @ xm
    dgop = DgOperator(p, xm, validate=False)
    bundle = canonical_polar(xm, fact) if fact.r else None
    g_at_x = g_matrix(p, xm, validate=False).g
    nrm = np.linalg.norm

    def rel_err(fd_q, an_q, ref):
        fd_q = np.atleast_1d(np.asarray(fd_q, dtype=float))
        an_q = np.atleast_1d(np.asarray(an_q, dtype=float))
        return _rel(nrm(fd_q - an_q), nrm(an_q), nrm(fd_q), ref)

    for _ in range(trials):
        e = rng.standard_normal((n, k))
        e /= nrm(e)
        best = {key: np.inf for key in keys}
        an_dh_phi = p.dh_phi(xm, e)
        an_dh_psi = p.dh_psi(xm, e)
        an_dg = dgop(e)
        der = d_canonical_polar(xm, e, fact, bundle) if fact.r else None
        for h in step_list:
            xp, xme = xm + h * e, xm - h * e

            fd = (p.phi(xp) - p.phi(xme)) / (2 * h)
            an = float(np.sum(grad_phi * e))
            best["phi_grad"] = min(best["phi_grad"],
                                   rel_err(fd, an, nrm(grad_phi) + abs(p.phi(xm))))

            fd = (p.psi(xp) - p.psi(xme)) / (2 * h)
            an = float(np.sum(grad_psi * e))
            best["psi_grad"] = min(best["psi_grad"],
                                   rel_err(fd, an, nrm(grad_psi) + abs(p.psi(xm))))

            fd_m = (p.h_phi(xp) - p.h_phi(xme)) / (2 * h)
            best["dh_phi"] = min(best["dh_phi"], rel_err(fd_m, an_dh_phi, nrm(p.h_phi(xm))))

            fd_m = (p.h_psi(xp) - p.h_psi(xme)) / (2 * h)
            best["dh_psi"] = min(best["dh_psi"],
                                 rel_err(fd_m, an_dh_psi, nrm(p.h_psi(xm)) + nrm(p.h_phi(xm))))

            if fact.r:
                bp = canonical_polar(xp, fact)
                bm = canonical_polar(xme, fact)
                best["dm"] = min(best["dm"],
                                 rel_err((bp.m - bm.m) / (2 * h), der.dm, nrm(bundle.m)))
                best["dq_o"] = min(best["dq_o"],
                                   rel_err((bp.q_o - bm.q_o) / (2 * h), der.dq_o,
                                           nrm(bundle.q_o)))

            fd_m = (g_matrix(p, xp, validate=False).g
                    - g_matrix(p, xme, validate=False).g) / (2 * h)
            best["dg"] = min(best["dg"], rel_err(fd_m, an_dg, nrm(g_at_x)))
        for key in keys:
            if worst[key] is not None and np.isfinite(best[key]):
                worst[key] = max(worst[key], best[key])

    return FdReport(errors=worst, trials=trials, step=step_list[0])

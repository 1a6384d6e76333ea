"""SCF-type iteration with basis alignment, and its level-shifted variant.

Each step solves the symmetric eigenproblem for H(X_i) + sigma X_i X_i^T,
takes the eigenbasis of the k largest eigenvalues, and aligns it against D.
Convergence is measured by the normalized residual of the unshifted H.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .alignment import align
from .errors import DefinitenessError
from .kernels import sin_theta, sym_eig_topk
from .problems import NepvProblem, StiefelPoint, as_matrix, build_h, nres, objective

Matrix = np.ndarray


@dataclass
class ScfOptions:
    tol: float = 1e-13
    max_iters: int = 500
    shift: float = 0.0
    reference: Optional[Matrix] = None   # track subspace angles to this basis
    record_history: bool = True
    keep_iterates: bool = False
    gap_tol: float = 1e-12               # relative to ||H||, flags degenerate gaps
    detect_oscillation: bool = True
    oscillation_window: int = 6
    oscillation_band: float = 1e-3
    oscillation_min_iters: int = 30

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass
class StepRecord:
    nres: float
    objective: float
    gap: float
    sin_theta: Optional[float] = None


@dataclass
class StepResult:
    next: StiefelPoint
    lam: Matrix
    gap: float
    degenerate_gap: bool = False


@dataclass
class ScfReport:
    final_x: StiefelPoint
    final_lambda: Matrix
    converged: bool
    iterations: int
    history: list[StepRecord] = field(default_factory=list)
    divergence_kind: str = "none"        # none | max_iters | oscillation-detected
    shift: float = 0.0
    warnings: list[str] = field(default_factory=list)
    iterates: Optional[list[Matrix]] = None

    @property
    def eigen_pair(self):
        from .problems import EigenPairBlock
        return EigenPairBlock(lam=self.final_lambda, x=self.final_x)

    @property
    def nres_history(self) -> np.ndarray:
        return np.array([rec.nres for rec in self.history])

    @property
    def sin_theta_history(self) -> np.ndarray:
        return np.array([np.nan if rec.sin_theta is None else rec.sin_theta
                         for rec in self.history])


def scf_step(p: NepvProblem, x, shift: float = 0.0) -> StepResult:
    """One iteration: eigen-solve H(X) + shift * X X^T, keep top-k, align.

    Lambda is reported in the aligned basis (rotated by the alignment Q);
    the gap is lambda_k - lambda_{k+1} of the shifted operator.
    """
    xm = as_matrix(x)
    h = build_h(p, xm, validate=False)
    if shift:
        h = h + shift * (xm @ xm.T)
    top = sym_eig_topk(h, p.dim_k, sym_tol=np.inf)
    ar = align(top.vectors, p.d, validate=False)
    lam = ar.q.T @ (top.values[:, None] * ar.q)
    degenerate = top.gap <= 1e-12 * max(np.linalg.norm(h), 1.0)
    return StepResult(next=ar.aligned_x, lam=lam, gap=top.gap, degenerate_gap=degenerate)


def _two_cycle(values: list[float], window: int, band: float) -> bool:
    """True when the last ``window`` residuals alternate between two levels."""
    if len(values) < window:
        return False
    tail = np.array(values[-window:])
    evens, odds = tail[0::2], tail[1::2]
    scale = max(tail.max(), 1e-300)
    same_even = (evens.max() - evens.min()) <= band * scale
    same_odd = (odds.max() - odds.min()) <= band * scale
    distinct = abs(evens.mean() - odds.mean()) > band * scale
    return bool(same_even and same_odd and distinct)


def run_scf(p: NepvProblem, x0, opts: Optional[ScfOptions] = None) -> ScfReport:
    """SCF-type iteration from x0 until NRes <= tol or max_iters.

    x0 is aligned first when needed.  Divergence is reported in the
    ``divergence_kind`` field, never raised.
    """
    opts = opts or ScfOptions()
    x = align(as_matrix(x0), p.d).aligned_x.matrix
    shift = opts.shift
    history: list[StepRecord] = []
    iterates: list[Matrix] = []
    warnings: list[str] = []
    nres_vals: list[float] = []

    def make_record(xm: Matrix, res: float, gap: float) -> StepRecord:
        st = None
        if opts.reference is not None:
            st = sin_theta(xm, as_matrix(opts.reference))
        return StepRecord(nres=res, objective=objective(p, xm, validate=False),
                          gap=gap, sin_theta=st)

    res = nres(p, x, validate=False)
    if res <= opts.tol:
        lam = x.T @ build_h(p, x, validate=False) @ x
        return ScfReport(final_x=StiefelPoint(x), final_lambda=lam, converged=True,
                         iterations=0, history=[], shift=shift)

    converged = False
    divergence_kind = "none"
    lam = None
    it = 0
    for it in range(1, opts.max_iters + 1):
        step = scf_step(p, x, shift)
        x = step.next.matrix
        lam = step.lam
        if step.degenerate_gap:
            warnings.append(f"iteration {it}: near-degenerate gap {step.gap:.3e}")
        res = nres(p, x, validate=False)
        nres_vals.append(res)
        if opts.record_history:
            history.append(make_record(x, res, step.gap))
        if opts.keep_iterates:
            iterates.append(x.copy())
        if res <= opts.tol:
            converged = True
            break
        if (opts.detect_oscillation and it >= opts.oscillation_min_iters
                and _two_cycle(nres_vals, opts.oscillation_window, opts.oscillation_band)):
            divergence_kind = "oscillation-detected"
            break
    if not converged and divergence_kind == "none":
        divergence_kind = "max_iters"
    if lam is None:
        lam = x.T @ build_h(p, x, validate=False) @ x
    return ScfReport(
        final_x=StiefelPoint(x), final_lambda=lam, converged=converged,
        iterations=it, history=history,
        divergence_kind="none" if converged else divergence_kind,
        shift=shift, warnings=warnings,
        iterates=iterates if opts.keep_iterates else None,
    )


def run_level_shifted_scf(p: NepvProblem, x0, sigma: float,
                          opts: Optional[ScfOptions] = None) -> ScfReport:
    """SCF on the level-shifted operator H(X) + sigma X X^T."""
    opts = opts or ScfOptions()
    return run_scf(p, x0, dataclasses.replace(opts, shift=float(sigma)))


def initial_guess_linear(a: Matrix, b: Matrix, k: int, d: Optional[Matrix] = None) -> StiefelPoint:
    """Eigenvectors of the k largest eigenvalues of the pencil (A, B).

    The B-orthonormal eigenvectors are re-orthonormalized to X^T X = I via
    the orthonormal polar factor (preserving the span), then aligned
    against D when given.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    try:
        w, v = scipy.linalg.eigh(a, b)
    except scipy.linalg.LinAlgError as exc:
        raise DefinitenessError("B must be positive definite") from exc
    top = v[:, ::-1][:, :k]
    u, _, vt = np.linalg.svd(top, full_matrices=False)
    x = u @ vt
    if d is not None:
        x = align(x, d).aligned_x.matrix
    return StiefelPoint(x)

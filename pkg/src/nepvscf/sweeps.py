"""Parameter sweeps with warm starts, and level-shift sweeps at a fixed problem.

A parameter sweep walks the grid using each computed solution as the next
starting guess; where the plain iteration fails, a level-shifted solve with
the configured fallback shift supplies the reference solution, as used to
chart rates across the divergent band.
"""
from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import NepvError
from .problems import NepvProblem, nres
from .rates import certify, observed_rate, rho_L, sigma_lower
from .solver import ScfOptions, initial_guess_linear, run_level_shifted_scf, run_scf

Matrix = np.ndarray


@dataclass
class SweepPoint:
    param: float
    converged: bool
    iterations: int
    final_nres: float
    rho: Optional[float] = None
    observed: Optional[float] = None
    observed_nres: Optional[float] = None
    gap: Optional[float] = None
    sigma_used: float = 0.0
    divergence_kind: str = "none"
    error: Optional[str] = None


@dataclass
class ShiftPoint:
    sigma: float
    rho: Optional[float] = None
    observed: Optional[float] = None
    converged: Optional[bool] = None
    iterations: Optional[int] = None
    error: Optional[str] = None


@dataclass
class ShiftSweepResult:
    rows: list[ShiftPoint]
    sigma_l: Optional[float]
    mu_min: Optional[float]
    asymmetry: Optional[float]
    sigma_star: Optional[float]
    rho_star: Optional[float]
    reference_sigma: float


def default_guess(p: NepvProblem):
    """Pencil-based starting point for the built-in problem families."""
    if "a" not in p.params or "b" not in p.params:
        raise NepvError("no default initial guess: problem has no (A, B) data")
    return initial_guess_linear(p.params["a"], p.params["b"], p.dim_k, p.d)


def _polish(p, x, sigma, iters):
    if iters <= 0:
        return x
    opts = ScfOptions(tol=1e-300, max_iters=iters, shift=sigma, detect_oscillation=False)
    return run_scf(p, x, opts).final_x


def parameter_sweep(
    build: Callable[[float], NepvProblem],
    grid: Sequence[float],
    x0=None,
    fallback_sigma: Optional[float] = None,
    opts: Optional[ScfOptions] = None,
    measure_observed: bool = False,
    polish_iters: int = 0,
    rate_method: str = "auto",
) -> list[SweepPoint]:
    """Warm-started sweep over ``grid``; returns one row per point.

    Failures at a point (no reference solution, certification error) are
    recorded in the row and the sweep continues with the previous warm start.
    """
    opts = opts or ScfOptions(max_iters=2000)
    x = x0 if x0 is not None else default_guess(build(grid[0]))
    rows: list[SweepPoint] = []
    for t in grid:
        p = build(t)
        run_opts = dataclasses.replace(opts, shift=0.0, keep_iterates=measure_observed)
        plain = run_scf(p, x, run_opts)
        sigma_used = 0.0
        xstar = plain.final_x if plain.converged else None
        if xstar is None and fallback_sigma is not None:
            ls = run_level_shifted_scf(p, x, fallback_sigma,
                                       dataclasses.replace(opts, keep_iterates=False))
            if ls.converged:
                xstar, sigma_used = ls.final_x, fallback_sigma
        final_nres = float(plain.nres_history[-1]) if plain.history \
            else nres(p, plain.final_x, validate=False)
        row = SweepPoint(param=float(t), converged=plain.converged,
                         iterations=plain.iterations, final_nres=final_nres,
                         sigma_used=sigma_used, divergence_kind=plain.divergence_kind)
        if xstar is None:
            row.error = "no reference solution (plain diverged, no working fallback shift)"
        else:
            xstar = _polish(p, xstar, sigma_used, polish_iters)
            try:
                cert = certify(p, xstar)
                row.gap = cert.gap
                row.rho = rho_L(cert, p, method=rate_method).rho
            except NepvError as exc:
                row.error = f"{type(exc).__name__}: {exc}"
            except ValueError as exc:
                row.error = f"certify: {exc}"
            if measure_observed and plain.converged:
                row.observed = observed_rate(plain, reference=xstar.matrix)
                row.observed_nres = observed_rate(plain, metric="nres")
            x = xstar
        rows.append(row)
    return rows


def divergence_interval(rows: Sequence[SweepPoint], by: str = "rho") -> Optional[tuple[float, float]]:
    """Parameter range where the iteration is locally divergent.

    by="rho" reads the certified rate curve (rho > 1); by="flag" uses the
    plain-run convergence flags instead.
    """
    if by == "rho":
        bad = [r.param for r in rows if r.rho is not None and r.rho > 1.0]
    elif by == "flag":
        bad = [r.param for r in rows if not r.converged]
    else:
        raise ValueError(f"unknown selector {by!r}")
    if not bad:
        return None
    return (min(bad), max(bad))


def shift_sweep(
    p: NepvProblem,
    x0,
    sigma_grid: Sequence[float],
    reference_sigma: Optional[float] = None,
    opts: Optional[ScfOptions] = None,
    measure_observed: bool = True,
    polish_iters: int = 200,
    refine: bool = True,
    workers: int = 1,
) -> ShiftSweepResult:
    """Chart rho(L_sigma) over a shift grid at one problem instance.

    The reference solution comes from the plain iteration when it converges,
    else from the level-shifted iteration at ``reference_sigma`` (default:
    the largest grid shift).  The optimal shift is the grid argmin, refined
    by a bounded scalar minimization between its neighbors.
    """
    opts = opts or ScfOptions(max_iters=2000)
    if x0 is None:
        x0 = default_guess(p)
    plain = run_scf(p, x0, opts)
    if plain.converged:
        xstar, ref_sigma = plain.final_x, 0.0
    else:
        ref_sigma = reference_sigma if reference_sigma is not None else float(np.max(sigma_grid))
        ls = run_level_shifted_scf(p, x0, ref_sigma, opts)
        if not ls.converged:
            raise NepvError(
                f"cannot obtain a reference solution: plain SCF and the "
                f"sigma={ref_sigma} fallback both failed"
            )
        xstar = ls.final_x
    xstar = _polish(p, xstar, ref_sigma, polish_iters)
    cert = certify(p, xstar)
    bound = sigma_lower(cert, p)

    def eval_sigma(sig: float) -> ShiftPoint:
        row = ShiftPoint(sigma=float(sig))
        try:
            row.rho = rho_L(cert, p, sigma=float(sig)).rho
        except NepvError as exc:
            row.error = f"{type(exc).__name__}: {exc}"
            return row
        if measure_observed:
            rep = run_level_shifted_scf(
                p, x0, float(sig),
                dataclasses.replace(opts, reference=xstar.matrix))
            row.converged = rep.converged
            row.iterations = rep.iterations
            row.observed = observed_rate(rep)
        return row

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(eval_sigma, sigma_grid))
    else:
        rows = [eval_sigma(s) for s in sigma_grid]

    valid = [(r.sigma, r.rho) for r in rows if r.rho is not None]
    sigma_star = rho_star = None
    if valid:
        sigmas, rhos = zip(*valid)
        i = int(np.argmin(rhos))
        sigma_star, rho_star = sigmas[i], rhos[i]
        if refine:
            lo = sigmas[max(i - 1, 0)]
            hi = sigmas[min(i + 1, len(sigmas) - 1)]
            if hi > lo:
                res = minimize_scalar(lambda s: rho_L(cert, p, sigma=s).rho,
                                      bounds=(lo, hi), method="bounded",
                                      options={"xatol": 1e-8})
                if res.fun <= rho_star:
                    sigma_star, rho_star = float(res.x), float(res.fun)
    return ShiftSweepResult(rows=rows, sigma_l=bound.sigma_lower, mu_min=bound.mu_min,
                            asymmetry=bound.asymmetry, sigma_star=sigma_star,
                            rho_star=rho_star, reference_sigma=ref_sigma)

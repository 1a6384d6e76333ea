"""Runtime invariant suite backing the CLI ``check`` command.

Each check is independent and returns a pass/fail row; numerical thresholds
follow the module contracts.  Checks that do not apply to the instance
(e.g. polar calculus when D = 0) report as passed with an "n/a" note.
"""
from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .aligned import aligned_objective, g_matrix
from .alignment import align, canonical_polar, d_canonical_polar
from .kernels import solve_lyapunov_spd, spectral_radius
from .problems import NepvProblem, build_h, objective
from .rates import fd_validate
from .solver import ScfOptions, run_scf

FD_TOL = 1e-6


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _rand_orth(rng, n, k):
    q, _ = np.linalg.qr(rng.standard_normal((n, k)))
    return q


def _rand_rot(rng, k):
    q, _ = np.linalg.qr(rng.standard_normal((k, k)))
    return q


def run_problem_checks(p: NepvProblem, seed: int = 0, fd_trials: int = 20,
                       rotations: int = 20, alignment_samples: int = 1000) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    n, k = p.dim_n, p.dim_k
    # validate at the B-dominant eigenbasis when pencil data is available: a
    # deterministic, well-scaled point where the trace weights are O(1) and
    # the gradients do not vanish (randomly drawn bases can land arbitrarily
    # close to the null directions of B, ruining finite-difference scaling)
    if "b" in p.params:
        w, v = np.linalg.eigh(p.params["b"])
        x = align(v[:, ::-1][:, :k], p.d).aligned_x.matrix
    else:
        x = align(_rand_orth(rng, n, k), p.d).aligned_x.matrix
    fact = p.d_factorization()
    results: list[CheckResult] = []

    def add(name, passed, detail=""):
        results.append(CheckResult(name=name, passed=bool(passed), detail=detail))

    def guarded(name, fn):
        try:
            fn()
        except Exception as exc:
            add(name, False, f"{type(exc).__name__}: {exc}")

    def check_fd():
        rep = fd_validate(p, x, trials=fd_trials, seed=seed)
        for key, err in rep.errors.items():
            if err is None:
                add(f"fd:{key}", True, "n/a (D = 0)")
            else:
                add(f"fd:{key}", err <= FD_TOL, f"max rel err {err:.3e}")
    guarded("fd", check_fd)

    def check_symmetries():
        grad = p.h_phi(x) @ x
        defect = np.linalg.norm(x.T @ grad - (x.T @ grad).T)
        add("xt-grad-symmetric", defect <= 1e-10, f"defect {defect:.3e}")
        h = build_h(p, x)
        rel = np.linalg.norm(h - h.T) / max(np.linalg.norm(h), 1e-300)
        add("build-h-symmetric", rel <= 1e-12, f"rel defect {rel:.3e}")
    guarded("symmetries", check_symmetries)

    def check_invariance():
        worst_h = worst_g = 0.0
        ev = g_matrix(p, x)
        for _ in range(rotations):
            q = _rand_rot(rng, k)
            xq = x @ q
            worst_h = max(worst_h,
                          np.linalg.norm(p.h_phi(xq) - p.h_phi(x)),
                          np.linalg.norm(p.h_psi(xq) - p.h_psi(x)))
            worst_g = max(worst_g, np.linalg.norm(g_matrix(p, xq).g - ev.g))
        scale = max(np.linalg.norm(ev.g), 1.0)
        add("h-unitary-invariance", worst_h <= 1e-10 * scale, f"worst {worst_h:.3e}")
        add("g-unitary-invariance", worst_g <= 1e-10 * scale, f"worst {worst_g:.3e}")
    guarded("invariance", check_invariance)

    def check_aligned_forms():
        ev = g_matrix(p, x)
        href = build_h(p, align(x, p.d).aligned_x.matrix)
        diff = np.linalg.norm(ev.g - href) / max(np.linalg.norm(href), 1e-300)
        add("g-equals-h-at-alignment", diff <= 1e-10, f"rel diff {diff:.3e}")
        a = aligned_objective(p, x)
        b = objective(p, align(x, p.d).aligned_x.matrix)
        add("aligned-objective", abs(a - b) <= 1e-12 * max(abs(b), 1.0), f"|diff| {abs(a - b):.3e}")
    guarded("aligned-forms", check_aligned_forms)

    def check_alignment():
        y = _rand_orth(rng, n, k)
        once = align(y, p.d).aligned_x.matrix
        twice = align(once, p.d).aligned_x.matrix
        add("align-idempotent", np.linalg.norm(once - twice) <= 1e-12,
            f"drift {np.linalg.norm(once - twice):.3e}")
        base = np.trace(once.T @ p.d)
        worst = -np.inf
        for _ in range(alignment_samples):
            q = _rand_rot(rng, k)
            worst = max(worst, np.trace(q.T @ (y.T @ p.d)))
        add("align-maximizes-trace", base >= worst - 1e-12,
            f"aligned {base:.12f} vs best sampled {worst:.12f}")
    guarded("alignment", check_alignment)

    def check_polar():
        if fact.r == 0:
            add("polar-reconstruction", True, "n/a (D = 0)")
            add("polar-trace-identity", True, "n/a (D = 0)")
            return
        bundle = canonical_polar(x, fact)
        scale = max(np.linalg.norm(p.d), 1e-300)
        rec = np.linalg.norm(x.T @ p.d - bundle.q_o @ bundle.m) / scale
        sig = np.linalg.svd(x.T @ p.d, compute_uv=False)
        tr_gap = abs(bundle.tr_m - sig.sum()) / max(sig.sum(), 1e-300)
        add("polar-reconstruction", rec <= 1e-10 and tr_gap <= 1e-10,
            f"recon {rec:.3e}, trace gap {tr_gap:.3e}")
        e = rng.standard_normal((n, k))
        der = d_canonical_polar(x, e, fact, bundle)
        lhs = np.trace(der.dm)
        rhs = np.trace(bundle.q_o @ p.d.T @ e)
        add("polar-trace-identity", abs(lhs - rhs) <= 1e-10 * max(abs(rhs), 1.0),
            f"|tr dM - tr(Qo D^T E)| = {abs(lhs - rhs):.3e}")
    guarded("polar", check_polar)

    def check_lyapunov():
        r = 4
        w = rng.standard_normal((r, r))
        m1 = w @ w.T + r * np.eye(r)
        c = rng.standard_normal((r, r))
        c = c + c.T
        l = solve_lyapunov_spd(m1, c)
        kron = np.kron(np.eye(r), m1) + np.kron(m1, np.eye(r))
        l_ref = np.linalg.solve(kron, c.reshape(-1, order="F")).reshape((r, r), order="F")
        rel = np.linalg.norm(l - l_ref) / max(np.linalg.norm(l_ref), 1e-300)
        add("lyapunov-kronecker", rel <= 1e-10, f"rel err {rel:.3e}")
    guarded("lyapunov", check_lyapunov)

    def check_spectral_radius():
        shape = (4, 2)
        a = rng.standard_normal((8, 8))
        op = lambda z: (a @ z.reshape(-1, order="F")).reshape(shape, order="F")
        dense = spectral_radius(op, shape, method="dense")
        power = spectral_radius(op, shape, method="power")
        rel = abs(dense.rho - power.rho) / max(dense.rho, 1e-300)
        add("spectral-radius-paths", rel <= 1e-6 and power.converged, f"rel gap {rel:.3e}")
    guarded("spectral-radius", check_spectral_radius)

    def check_iterate_orthonormality():
        rep = run_scf(p, x, ScfOptions(tol=1e-300, max_iters=20, keep_iterates=True,
                                       detect_oscillation=False))
        drift = max(np.linalg.norm(xi.T @ xi - np.eye(k)) for xi in rep.iterates)
        add("iterate-orthonormality", drift <= 1e-12, f"max drift {drift:.3e}")
    guarded("iterates", check_iterate_orthonormality)

    return results

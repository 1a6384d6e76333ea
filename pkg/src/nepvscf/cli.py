"""Command-line driver: solve, sweep, shift-sweep, check, reproduce.

Problems come from a preset, from Matrix Market files, or from generator
specs; options are read from a flat key=value config file with command-line
overrides.  Outputs are CSV (plot-ready, full double precision) plus JSON
summaries, with PNG figures rendered alongside unless --no-plots.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import presets
from .checks import run_problem_checks
from .errors import NepvError
from .fileio import config_hash, fmt, parse_config, parse_grid, read_matrix, write_matrix
from .kernels import require_symmetric, sin_theta
from .problems import NepvProblem, make_alpha_problem, make_theta_problem, nres, objective
from .rates import certify, observed_rate, rho_L, sigma_lower, tail_rate
from .solver import ScfOptions, run_scf
from .sweeps import default_guess, parameter_sweep, shift_sweep

GENERATORS = ("tridiag", "diag-iota", "random-gaussian", "random-rank-r")


@dataclass
class ExperimentConfig:
    family: str = "alpha"
    alpha: Optional[float] = None
    theta: Optional[float] = None
    preset: Optional[str] = None
    matrix_a: Optional[str] = None
    matrix_b: Optional[str] = None
    matrix_d: Optional[str] = None
    n: int = 50
    k: int = 2
    r: Optional[int] = None
    seed: int = 7
    grid: Optional[str] = None
    sigma_grid: Optional[str] = None
    sigma: Optional[float] = None
    fallback_sigma: float = 100.0
    tol: float = 1e-13
    max_iters: int = 500
    out: str = "out"
    workers: int = 1
    plots: bool = True

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: v for k, v in d.items() if v is not None}

    def semantic_dict(self) -> dict:
        """Config keys that define the experiment (not where output lands)."""
        d = self.to_dict()
        for key in ("out", "plots", "workers"):
            d.pop(key, None)
        return d


def _coerce(key: str, val: str):
    if key in ("n", "k", "r", "seed", "max_iters", "workers"):
        return int(val)
    if key in ("alpha", "theta", "sigma", "fallback_sigma", "tol"):
        return float(val)
    if key == "plots":
        return val.lower() not in ("0", "false", "no")
    return val


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if getattr(args, "config", None):
        for key, val in parse_config(args.config).items():
            key = key.replace("-", "_")
            if not hasattr(cfg, key):
                raise ValueError(f"unknown config key {key!r}")
            setattr(cfg, key, _coerce(key, val))
    for key in vars(cfg):
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            setattr(cfg, key, cli_val)
    if getattr(args, "no_plots", False):
        cfg.plots = False
    return cfg


def _generate(spec: str, which: str, cfg: ExperimentConfig) -> np.ndarray:
    base = {"a": 0, "b": 1, "d": 2}[which]
    if spec == "tridiag":
        return presets.tridiag_stiffness(cfg.n)
    if spec == "diag-iota":
        return presets.index_diag(cfg.n)
    if spec == "random-gaussian":
        rng = np.random.default_rng(cfg.seed + base)
        if which == "d":
            return rng.standard_normal((cfg.n, cfg.k))
        w = rng.standard_normal((cfg.n, cfg.n))
        return 0.5 * (w + w.T)
    if spec == "random-rank-r":
        if which != "d":
            raise ValueError("random-rank-r only generates the D matrix")
        if cfg.r is None:
            raise ValueError("random-rank-r needs r")
        return presets.random_d(cfg.n, cfg.k, cfg.seed + base, rank=cfg.r)
    raise ValueError(f"unknown generator {spec!r} (expected path or one of {GENERATORS})")


def _matrix_source(spec: Optional[str], which: str, cfg: ExperimentConfig) -> Optional[np.ndarray]:
    if spec is None:
        return None
    if spec in GENERATORS:
        return _generate(spec, which, cfg)
    return read_matrix(spec)


def build_problem(cfg: ExperimentConfig, param: Optional[float] = None) -> NepvProblem:
    """Instantiate the configured problem at ``param`` (alpha or theta)."""
    if cfg.preset and any((cfg.matrix_a, cfg.matrix_b, cfg.matrix_d)):
        raise ValueError("give either a preset or explicit matrices, not both")
    if cfg.preset:
        pid = cfg.preset
        if pid in ("ex1", "ex2", "ex3"):
            val = param if param is not None else (cfg.alpha if cfg.alpha is not None else 0.5)
        else:
            val = param if param is not None else (cfg.theta if cfg.theta is not None else 0.5)
        if pid == "ex1":
            return presets.ex1_problem(val)
        if pid == "ex2":
            return presets.ex2_problem(val)
        if pid == "ex3":
            return presets.ex3_problem(val, n=cfg.n if cfg.n != 50 else 200,
                                       k=cfg.k if cfg.k != 2 else 40,
                                       seed=cfg.seed, rank=cfg.r)
        if pid == "ex4":
            return presets.ex4_problem(val)
        if pid == "ex5":
            return presets.ex5_problem(val)
        if pid == "ex6":
            return presets.ex6_problem(val, n=cfg.n if cfg.n != 50 else 200,
                                       k=cfg.k if cfg.k != 2 else 50,
                                       seed=cfg.seed, rank=cfg.r if cfg.r is not None else 20)
        raise ValueError(f"unknown preset {pid!r}")
    a = _matrix_source(cfg.matrix_a, "a", cfg)
    b = _matrix_source(cfg.matrix_b, "b", cfg)
    d = _matrix_source(cfg.matrix_d, "d", cfg)
    if a is None or b is None or d is None:
        raise ValueError("need matrix_a, matrix_b, matrix_d (paths or generator specs) "
                         "unless a preset is selected")
    a = require_symmetric(a, name="A")
    if cfg.family == "alpha":
        val = param if param is not None else (cfg.alpha if cfg.alpha is not None else 0.5)
        return make_alpha_problem(a, b, d, val)
    if cfg.family == "theta":
        val = param if param is not None else (cfg.theta if cfg.theta is not None else 0.5)
        return make_theta_problem(a, b, d, val)
    raise ValueError(f"unknown family {cfg.family!r}")


def _meta(cfg: ExperimentConfig, **extra) -> dict:
    meta = {"config_hash": config_hash(cfg.semantic_dict()), "seed": cfg.seed,
            "tol": cfg.tol, "max_iters": cfg.max_iters}
    meta.update(extra)
    return meta


def _jsonify(obj):
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _write_history_csv(path, records, meta):
    from .fileio import write_csv
    rows = [(i + 1, r.nres, r.objective, r.sin_theta, r.gap)
            for i, r in enumerate(records)]
    write_csv(path, ["iter", "nres", "objective", "sin_theta", "gap"], rows, meta)


def cmd_solve(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    p = build_problem(cfg)
    x0 = default_guess(p)
    opts = ScfOptions(tol=cfg.tol, max_iters=cfg.max_iters,
                      shift=cfg.sigma or 0.0, keep_iterates=True)
    rep = run_scf(p, x0, opts)
    result = {
        "converged": rep.converged,
        "iterations": rep.iterations,
        "divergence_kind": rep.divergence_kind,
        "nres": nres(p, rep.final_x),
        "objective": objective(p, rep.final_x),
        "lambda": rep.final_lambda,
        "shift": rep.shift,
        "config_hash": config_hash(cfg.semantic_dict()),
        "seed": cfg.seed,
        "tol": cfg.tol,
    }
    records = rep.history
    if rep.converged:
        polish = run_scf(p, rep.final_x, ScfOptions(tol=1e-300, max_iters=200,
                                                    shift=cfg.sigma or 0.0,
                                                    detect_oscillation=False))
        xstar = polish.final_x
        for rec, xi in zip(records, rep.iterates):
            rec.sin_theta = sin_theta(xi, xstar.matrix)
        try:
            cert = certify(p, xstar)
            result["rho"] = rho_L(cert, p).rho
            result["gap"] = cert.gap
            result["regular"] = {
                "definite": cert.regular.definite,
                "rank_preserving": cert.regular.rank_preserving,
                "min_eig": cert.regular.min_eig,
                "ell": cert.regular.ell,
                "r": cert.regular.r,
            }
            bound = sigma_lower(cert, p)
            result["sigma_lower"] = bound.sigma_lower
        except (NepvError, ValueError) as exc:
            result["certification_error"] = f"{type(exc).__name__}: {exc}"
        result["observed_rate"] = tail_rate([rec.sin_theta for rec in records])
        result["observed_rate_nres"] = tail_rate([rec.nres for rec in records])
        write_matrix(out / "x_star.mtx", xstar.matrix)
    _write_history_csv(out / "history.csv", records, _meta(cfg))
    (out / "report.json").write_text(json.dumps(_jsonify(result), indent=2) + "\n")
    if cfg.plots:
        from .plots import plot_history
        plot_history(records, out / "history.png")
    print(f"converged={rep.converged} iterations={rep.iterations} "
          f"nres={fmt(result['nres'])}" + (f" rho={fmt(result['rho'])}" if "rho" in result else ""))
    return 0


def cmd_sweep(cfg: ExperimentConfig) -> int:
    from .fileio import write_csv
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if not cfg.grid:
        raise ValueError("sweep needs --grid start:stop:count")
    grid = parse_grid(cfg.grid)
    opts = ScfOptions(tol=cfg.tol, max_iters=cfg.max_iters)
    rows = parameter_sweep(lambda t: build_problem(cfg, t), grid,
                           fallback_sigma=cfg.fallback_sigma, opts=opts,
                           measure_observed=True, polish_iters=200)
    cols = ["param", "converged", "observed_rate", "rho_L", "gap", "sigma_used",
            "observed_rate_nres", "iterations", "final_nres", "error"]
    write_csv(out / "sweep.csv", cols,
              [(r.param, r.converged, r.observed, r.rho, r.gap, r.sigma_used,
                r.observed_nres, r.iterations, r.final_nres, r.error) for r in rows],
              _meta(cfg, fallback_sigma=cfg.fallback_sigma))
    if cfg.plots:
        from .plots import plot_rate_curve
        xlabel = "alpha" if cfg.family == "alpha" or (cfg.preset or "").startswith(("ex1", "ex2", "ex3")) else "theta"
        plot_rate_curve([r.param for r in rows],
                        [np.nan if r.rho is None else r.rho for r in rows],
                        [np.nan if r.observed is None else r.observed for r in rows],
                        out / "sweep.png", xlabel=xlabel)
    n_div = sum(not r.converged for r in rows)
    print(f"swept {len(rows)} points, {n_div} divergent; wrote {out / 'sweep.csv'}")
    return 0


def cmd_shift_sweep(cfg: ExperimentConfig) -> int:
    from .fileio import write_csv
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if not cfg.sigma_grid:
        raise ValueError("shift-sweep needs --sigma-grid start:stop:count")
    grid = parse_grid(cfg.sigma_grid)
    p = build_problem(cfg)
    opts = ScfOptions(tol=cfg.tol, max_iters=cfg.max_iters)
    res = shift_sweep(p, None, grid, reference_sigma=cfg.fallback_sigma,
                      opts=opts, workers=cfg.workers)
    write_csv(out / "shifts.csv", ["sigma", "rho_L_sigma", "observed_rate", "converged",
                                   "iterations", "error"],
              [(r.sigma, r.rho, r.observed, r.converged, r.iterations, r.error)
               for r in res.rows],
              _meta(cfg, sigma_L=res.sigma_l, sigma_star=res.sigma_star,
                    rho_star=res.rho_star))
    summary = {"sigma_L": res.sigma_l, "mu_min": res.mu_min, "asymmetry": res.asymmetry,
               "sigma_star": res.sigma_star, "rho_star": res.rho_star,
               "reference_sigma": res.reference_sigma,
               "config_hash": config_hash(cfg.semantic_dict()), "seed": cfg.seed, "tol": cfg.tol}
    (out / "shift_summary.json").write_text(json.dumps(_jsonify(summary), indent=2) + "\n")
    if cfg.plots:
        from .plots import plot_shift_curve
        plot_shift_curve([r.sigma for r in res.rows],
                         [np.nan if r.rho is None else r.rho for r in res.rows],
                         [np.nan if r.observed is None else r.observed for r in res.rows],
                         out / "shifts.png", sigma_l=res.sigma_l, sigma_star=res.sigma_star)
    print(f"sigma_L={fmt(res.sigma_l)} sigma_star={fmt(res.sigma_star)} "
          f"rho_star={fmt(res.rho_star)}; wrote {out / 'shifts.csv'}")
    return 0


def cmd_check(cfg: ExperimentConfig) -> int:
    p = build_problem(cfg)
    results = run_problem_checks(p, seed=cfg.seed)
    width = max(len(r.name) for r in results)
    ok = True
    for r in results:
        status = "pass" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  {status}  {r.detail}")
        ok = ok and r.passed
    print(f"{'overall':<{width}}  {'pass' if ok else 'FAIL'}")
    return 0 if ok else 1


REPRODUCE_PLANS = {
    "ex1": {"preset": "ex1", "grid": (0.0, 1.0, 200), "samples": [0.1, 0.3, 0.46, 0.6, 0.9],
            "fallback": 100.0, "shift_at": 0.6, "shift_grid": (5.0, 150.0, 120),
            "xlabel": "alpha"},
    "ex2": {"preset": "ex2", "grid": (0.0, 1.0, 200), "samples": [0.1, 0.305, 0.5, 0.9],
            "fallback": 50.0, "shift_at": 0.5, "shift_grid": (0.5, 30.0, 120),
            "xlabel": "alpha"},
    "ex3": {"preset": "ex3", "grid": (0.0, 1.0, 13), "samples": [0.3, 0.7],
            "fallback": 100.0, "shift_at": None, "shift_grid": None, "xlabel": "alpha"},
    "ex4": {"preset": "ex4", "grid": (-0.5, 1.5, 200), "samples": [0.0, 0.1, 1.0],
            "fallback": 100.0, "shift_at": 0.0, "shift_grid": (-12.0, 10.0, 120),
            "xlabel": "theta"},
    "ex5": {"preset": "ex5", "grid": (0.0, 6.0, 200), "samples": [1.0, 3.0, 4.75],
            "fallback": 40.0, "shift_at": 3.0, "shift_grid": (0.5, 60.0, 120),
            "xlabel": "theta"},
    "ex6": {"preset": "ex6", "grid": (-0.5, 1.5, 13), "samples": [0.0, 0.8],
            "fallback": 40.0, "shift_at": None, "shift_grid": None, "xlabel": "theta"},
}


def cmd_reproduce(cfg: ExperimentConfig, example_id: str) -> int:
    from .fileio import write_csv
    if example_id not in REPRODUCE_PLANS:
        raise ValueError(f"unknown example id {example_id!r} "
                         f"(expected one of {sorted(REPRODUCE_PLANS)})")
    plan = REPRODUCE_PLANS[example_id]
    cfg = dataclasses.replace(cfg, preset=plan["preset"])
    out = Path(cfg.out) / example_id
    out.mkdir(parents=True, exist_ok=True)
    lo, hi, count = plan["grid"]
    if cfg.grid:
        lo, hi, count = (lambda g: (g[0], g[-1], len(g)))(parse_grid(cfg.grid))
    grid = np.linspace(lo, hi, int(count))
    opts = ScfOptions(tol=cfg.tol, max_iters=max(cfg.max_iters, 2000))
    build = lambda t: build_problem(cfg, t)
    rows = parameter_sweep(build, grid, fallback_sigma=plan["fallback"], opts=opts,
                           measure_observed=True, polish_iters=200)
    cols = ["param", "converged", "observed_rate", "rho_L", "gap", "sigma_used",
            "observed_rate_nres", "iterations", "final_nres", "error"]
    write_csv(out / "rate_curve.csv", cols,
              [(r.param, r.converged, r.observed, r.rho, r.gap, r.sigma_used,
                r.observed_nres, r.iterations, r.final_nres, r.error) for r in rows],
              _meta(cfg, example=example_id))
    if cfg.plots:
        from .plots import plot_rate_curve
        plot_rate_curve([r.param for r in rows],
                        [np.nan if r.rho is None else r.rho for r in rows],
                        [np.nan if r.observed is None else r.observed for r in rows],
                        out / "rate_curve.png", xlabel=plan["xlabel"],
                        title=example_id)

    # residual histories and full-precision rates at the sampled parameters
    sample_rows = []
    for t in plan["samples"]:
        p = build(t)
        x0 = default_guess(p)
        rep = run_scf(p, x0, dataclasses.replace(opts, keep_iterates=True))
        xstar = rep.final_x if rep.converged else None
        if xstar is None:
            from .solver import run_level_shifted_scf
            ls = run_level_shifted_scf(p, x0, plan["fallback"], opts)
            xstar = ls.final_x if ls.converged else None
        rho = obs = obs_nres = gap = None
        if xstar is not None:
            sigma_used = 0.0 if rep.converged else plan["fallback"]
            polish = run_scf(p, xstar, ScfOptions(tol=1e-300, max_iters=400,
                                                  shift=sigma_used,
                                                  detect_oscillation=False))
            xstar = polish.final_x
            for rec, xi in zip(rep.history, rep.iterates):
                rec.sin_theta = sin_theta(xi, xstar.matrix)
            try:
                cert = certify(p, xstar)
                gap = cert.gap
                rho = rho_L(cert, p).rho
            except (NepvError, ValueError):
                pass
            if rep.converged:
                obs = observed_rate(rep, reference=xstar.matrix)
                obs_nres = observed_rate(rep, metric="nres")
        sample_rows.append((t, rep.converged, rep.iterations, rho, obs, obs_nres, gap))
        tag = f"{t:g}".replace("-", "m").replace(".", "p")
        _write_history_csv(out / f"history_{plan['xlabel']}_{tag}.csv", rep.history,
                           _meta(cfg, param=t, example=example_id))
        if cfg.plots:
            from .plots import plot_history
            plot_history(rep.history, out / f"history_{plan['xlabel']}_{tag}.png",
                         title=f"{example_id}: {plan['xlabel']} = {t:g}")
    write_csv(out / "samples.csv",
              ["param", "converged", "iterations", "rho_L", "observed_rate",
               "observed_rate_nres", "gap"],
              sample_rows, _meta(cfg, example=example_id))

    summary = {"example": example_id, "config_hash": config_hash(cfg.semantic_dict()),
               "seed": cfg.seed, "tol": cfg.tol, "grid": [lo, hi, int(count)]}
    if plan["shift_at"] is not None:
        slo, shi, scount = plan["shift_grid"]
        p = build(plan["shift_at"])
        res = shift_sweep(p, None, np.linspace(slo, shi, int(scount)),
                          reference_sigma=plan["fallback"], opts=opts,
                          workers=cfg.workers)
        write_csv(out / "shifts.csv", ["sigma", "rho_L_sigma", "observed_rate",
                                       "converged", "iterations", "error"],
                  [(r.sigma, r.rho, r.observed, r.converged, r.iterations, r.error)
                   for r in res.rows],
                  _meta(cfg, example=example_id, param=plan["shift_at"]))
        summary["shift"] = {"at": plan["shift_at"], "sigma_L": res.sigma_l,
                            "sigma_star": res.sigma_star, "rho_star": res.rho_star,
                            "mu_min": res.mu_min, "asymmetry": res.asymmetry}
        if cfg.plots:
            from .plots import plot_shift_curve
            plot_shift_curve([r.sigma for r in res.rows],
                             [np.nan if r.rho is None else r.rho for r in res.rows],
                             [np.nan if r.observed is None else r.observed for r in res.rows],
                             out / "shifts.png", sigma_l=res.sigma_l,
                             sigma_star=res.sigma_star, title=example_id)
    (out / "summary.json").write_text(json.dumps(_jsonify(summary), indent=2) + "\n")
    print(f"wrote {out}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="nepvscf",
        description="SCF-type solver and convergence-rate analysis for NEPv "
                    "with alignment (trace-ratio / Procrustes-type families).",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value config file")
    common.add_argument("--family", choices=["alpha", "theta"], default=None)
    common.add_argument("--alpha", type=float, default=None)
    common.add_argument("--theta", type=float, default=None)
    common.add_argument("--preset", default=None,
                        help="built-in instance: ex1 ... ex6")
    common.add_argument("--matrix-a", dest="matrix_a", default=None,
                        help="Matrix Market path or generator "
                             "(tridiag|diag-iota|random-gaussian)")
    common.add_argument("--matrix-b", dest="matrix_b", default=None)
    common.add_argument("--matrix-d", dest="matrix_d", default=None)
    common.add_argument("--n", type=int, default=None)
    common.add_argument("--k", type=int, default=None)
    common.add_argument("--r", type=int, default=None)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--sigma", type=float, default=None, help="level shift")
    common.add_argument("--fallback-sigma", dest="fallback_sigma", type=float, default=None,
                        help="shift used to obtain reference solutions where plain SCF fails")
    common.add_argument("--grid", default=None, help="parameter grid start:stop:count")
    common.add_argument("--sigma-grid", dest="sigma_grid", default=None,
                        help="shift grid start:stop:count")
    common.add_argument("--tol", type=float, default=None)
    common.add_argument("--max-iters", dest="max_iters", type=int, default=None)
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--workers", type=int, default=None)
    common.add_argument("--no-plots", dest="no_plots", action="store_true",
                        help="skip PNG figure rendering")

    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="single solve, report + history")
    sub.add_parser("sweep", parents=[common], help="warm-started parameter sweep")
    sub.add_parser("shift-sweep", parents=[common], help="rho(L_sigma) over a shift grid")
    sub.add_parser("check", parents=[common], help="derivative and invariant validation")
    rp = sub.add_parser("reproduce", parents=[common],
                        help="rerun a built-in experiment preset")
    rp.add_argument("example_id", choices=sorted(REPRODUCE_PLANS))
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        if args.command == "shift-sweep":
            return cmd_shift_sweep(cfg)
        if args.command == "check":
            return cmd_check(cfg)
        if args.command == "reproduce":
            return cmd_reproduce(cfg, args.example_id)
        raise ValueError(f"unknown command {args.command!r}")
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NepvError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

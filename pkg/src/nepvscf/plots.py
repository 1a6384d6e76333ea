"""Figure rendering for sweep and history outputs (Agg backend, PNG files)."""
from __future__ import annotations

from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finite(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = np.isfinite(x) & np.isfinite(y)
    return x[keep], y[keep]


def plot_history(records, path, title: str = "") -> None:
    """Semilog residual history; subspace angles added when available."""
    its = np.arange(1, len(records) + 1)
    nres = np.array([r.nres for r in records], dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4.2))
    ax.semilogy(*_finite(its, nres), "o-", ms=2.5, lw=0.9, label="NRes")
    angles = np.array([np.nan if r.sin_theta is None else r.sin_theta for r in records],
                      dtype=float)
    if np.any(np.isfinite(angles) & (angles > 0)):
        ax.semilogy(*_finite(its, angles), "s--", ms=2.5, lw=0.9,
                    label=r"$\|\sin\Theta\|_F$")
    ax.set_xlabel("iteration")
    ax.set_ylabel("residual / angle")
    ax.legend(frameon=False)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_rate_curve(params, rho, observed, path, xlabel: str = "parameter",
                    title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6, 4.2))
    x, y = _finite(params, rho)
    ax.plot(x, y, "-", lw=1.2, label=r"$\rho(\mathcal{L})$")
    xo, yo = _finite(params, observed)
    if xo.size:
        ax.plot(xo, yo, "o", ms=4, mfc="none", label="observed rate")
    ax.axhline(1.0, color="gray", lw=0.8, ls=":")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("rate")
    ax.legend(frameon=False)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_shift_curve(sigmas, rho, observed, path, sigma_l: Optional[float] = None,
                     sigma_star: Optional[float] = None, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6, 4.2))
    x, y = _finite(sigmas, rho)
    ax.plot(x, y, "-", lw=1.2, label=r"$\rho(\mathcal{L}_\sigma)$")
    xo, yo = _finite(sigmas, observed)
    if xo.size:
        ax.plot(xo, yo, "o", ms=4, mfc="none", label="observed rate")
    if sigma_l is not None:
        ax.axvline(sigma_l, color="k", lw=0.8, ls="--", label=r"$\sigma_L$")
    if sigma_star is not None:
        ax.axvline(sigma_star, color="tab:red", lw=0.8, ls=":", label=r"$\sigma_*$")
    ax.axhline(1.0, color="gray", lw=0.8, ls=":")
    ax.set_xlabel(r"level shift $\sigma$")
    ax.set_ylabel("rate")
    ax.legend(frameon=False)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

"""Figure rendering for the report paths.

Every CLI command that writes delimited output also renders a PNG next to
it.  All figures use the non-interactive Agg backend so the package works
headless.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

DPI = 150


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def save_evolution_figure(path, times, curves: dict, title: str = "reduced evolution"):
    """Observables vs time; ``curves`` maps label -> array."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, values in curves.items():
        ax.plot(times, values, label=label, lw=1.4)
    ax.set_xlabel("t")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    _save(fig, path)


def save_divisibility_figure(path, gamma_times, gamma_mins, max_opnorm):
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(gamma_times, gamma_mins, lw=1.4, label="min eig of decay operator")
    ax.axhline(0.0, color="k", lw=0.8, ls="--")
    ax.set_xlabel("t")
    ax.set_ylabel("min eig")
    ax.set_title(f"divisibility (max propagator norm = {max_opnorm:.6g})")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    _save(fig, path)


def save_distribution_figure(path, dist):
    labels, probs = [], []
    for idx, p in dist.items():
        labels.append("".join(str(x) for x in idx))
        probs.append(p)
    fig, ax = plt.subplots(figsize=(max(5, 0.35 * len(labels)), 4.0))
    ax.bar(np.arange(len(probs)), probs)
    ax.set_xticks(np.arange(len(probs)))
    ax.set_xticklabels(labels, rotation=90, fontsize=7)
    ax.set_ylabel("probability")
    ax.set_xlabel("outcome sequence")
    ax.set_title(f"joint distribution, times {tuple(round(t, 6) for t in dist.times)}")
    _save(fig, path)


def save_witness_figure(path, witnesses):
    fig, ax = plt.subplots(figsize=(7, 4.2))
    if witnesses:
        vals = [w[5] for w in witnesses]
        ax.semilogy(np.arange(len(vals)), vals, "o", ms=3)
    ax.set_xlabel("witness rank")
    ax.set_ylabel("residual")
    ax.set_title("Chapman-Kolmogorov witnesses")
    ax.grid(alpha=0.3)
    _save(fig, path)


def save_sweep_figure(path, thetas, ck, ncgd):
    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.semilogy(thetas, np.maximum(ck, 1e-18), label="CK residual")
    ax.semilogy(thetas, np.maximum(ncgd, 1e-18), label="NCGD residual", ls="--")
    ax.set_xlabel("basis rotation angle")
    ax.set_ylabel("residual")
    ax.set_title("classicality residuals under basis rotation")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    _save(fig, path)


def save_refinement_figure(path, rows):
    """rows: (M, Omega, observable, analytic, oracle, abs_error)."""
    by_obs: dict = {}
    for (M, _Om, obs, _a, _o, err) in rows:
        by_obs.setdefault(obs, []).append((M, err))
    fig, ax = plt.subplots(figsize=(7, 4.2))
    for obs, pts in by_obs.items():
        pts = sorted(pts)
        ax.loglog([p[0] for p in pts], [max(p[1], 1e-18) for p in pts],
                  "o-", ms=4, label=obs)
    ax.set_xlabel("modes per channel M")
    ax.set_ylabel("absolute error")
    ax.set_title("oracle refinement")
    ax.grid(alpha=0.3, which="both")
    ax.legend(fontsize=7)
    _save(fig, path)

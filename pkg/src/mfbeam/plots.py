"""Figure rendering for the CLI report paths.

Everything draws to files through the Agg backend; the CSV outputs stay the
canonical data, the figures are the quick-look companions.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_DPI = 150


def _new_axes(ncols=1, width=5.2, height=3.6):
    fig, axes = plt.subplots(1, ncols, figsize=(width * ncols, height))
    return fig, axes


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_solution_figure(path, t, eta, chi, title):
    """Mean and costate trajectories, one panel per state component."""
    n = eta.shape[1]
    fig, axes = _new_axes(ncols=n)
    if n == 1:
        axes = [axes]
    for i, ax in enumerate(axes):
        ax.plot(t, eta[:, i], label=rf"$\eta_{{{i + 1}}}$", color="tab:blue")
        ax.plot(t, chi[:, i], label=rf"$\chi_{{{i + 1}}}$", color="tab:red", ls="--")
        ax.set_xlabel("time [s]")
        ax.grid(alpha=0.3)
        ax.legend()
        ax.set_title(f"{title}, state {i + 1}")
    _finish(fig, path)


def save_convergence_figure(path, diffs, title):
    """Consecutive-iterate differences on a log scale."""
    fig, ax = _new_axes()
    its = np.arange(1, len(diffs) + 1)
    positive = np.asarray(diffs) > 0
    ax.semilogy(its[positive], np.asarray(diffs)[positive], marker="o", ms=3)
    ax.set_xlabel("iteration")
    ax.set_ylabel("consecutive difference")
    ax.grid(alpha=0.3, which="both")
    ax.set_title(title)
    _finish(fig, path)


def save_ensemble_figure(path, t, emp_mean, eta, n_agents):
    """Empirical ensemble mean against the solved mean path."""
    n = eta.shape[1]
    fig, axes = _new_axes(ncols=n)
    if n == 1:
        axes = [axes]
    for i, ax in enumerate(axes):
        ax.plot(t, eta[:, i], color="tab:blue", label="mean-field")
        ax.plot(t, emp_mean[:, i], color="tab:orange", ls="--",
                label=f"ensemble mean (N={n_agents})")
        ax.set_xlabel("time [s]")
        ax.grid(alpha=0.3)
        ax.legend()
        ax.set_title(f"state {i + 1}")
    _finish(fig, path)


def save_tracking_figure(path, t, theta_stats, attenuation_stats):
    """Tracking-error norm and attenuation over time: mean with a 10-90% band."""
    fig, axes = _new_axes(ncols=2)
    for ax, stats, label in ((axes[0], theta_stats, r"$\|\theta\|$"),
                             (axes[1], attenuation_stats, "attenuation")):
        ax.plot(t, stats["mean"], color="tab:blue", label="mean")
        ax.fill_between(t, stats["p10"], stats["p90"], alpha=0.25,
                        color="tab:blue", label="10-90%")
        ax.plot(t, stats["p50"], color="tab:blue", ls=":", label="median")
        ax.set_xlabel("time [s]")
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
        ax.legend()
    _finish(fig, path)


def save_poa_figure(path, table):
    """Grouped bars of the 2x2 price-of-anarchy table."""
    methods = list(table.keys())
    definitions = list(next(iter(table.values())).keys())
    fig, ax = _new_axes()
    width = 0.35
    xs = np.arange(len(definitions))
    for j, method in enumerate(methods):
        vals = [table[method][d]["poa"] for d in definitions]
        ax.bar(xs + (j - 0.5) * width, vals, width, label=method)
    ax.axhline(1.0, color="k", lw=0.8)
    ax.set_xticks(xs)
    ax.set_xticklabels(definitions)
    ax.set_ylabel("price of anarchy")
    ax.set_ylim(bottom=0.95)
    ax.grid(alpha=0.3, axis="y")
    ax.legend()
    _finish(fig, path)

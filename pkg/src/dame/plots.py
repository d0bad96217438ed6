"""Minimal SVG renderings of the analysis outputs.

These are deliberately plain matplotlib figures (scatter, line, interval
plots) written next to the tidy CSVs; the CSVs remain the primary
artifact and feed any external plotting tool.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Ellipse


def render_dc(path, lags, observed, replicates):
    """Replicate degree-correlation distributions with observed markers.

    ``observed`` maps lag -> value; ``replicates`` is (len(lags), S).
    """
    fig, ax = plt.subplots(figsize=(6, 4))
    data = [replicates[k][np.isfinite(replicates[k])] for k in range(len(lags))]
    ax.boxplot(data, positions=range(len(lags)), widths=0.5)
    for k, lag in enumerate(lags):
        if np.isfinite(observed.get(lag, np.nan)):
            ax.plot(k, observed[lag], marker="*", markersize=14, color="firebrick",
                    linestyle="none", zorder=3)
    ax.set_xticks(range(len(lags)))
    ax.set_xticklabels([f"lag {lag}" for lag in lags])
    ax.set_ylabel("degree correlation")
    ax.set_title("posterior predictive degree correlation (star = observed)")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def render_ppc_degrees(path, times, node, observed, intervals):
    """Per-moment observed degree paths inside predictive 95% bands.

    ``observed`` is (moments, T); ``intervals`` is (moments, 2, T) holding
    the lower and upper band edges.
    """
    n_moments = observed.shape[0]
    fig, axes = plt.subplots(1, n_moments, figsize=(4 * n_moments, 3.2), sharex=True)
    axes = np.atleast_1d(axes)
    for m, ax in enumerate(axes):
        ax.fill_between(times, intervals[m, 0], intervals[m, 1], alpha=0.3,
                        color="steelblue", label="predictive 95%")
        ax.plot(times, observed[m], color="black", marker="o", markersize=3,
                label="observed")
        ax.set_title(f"moment {m + 1}")
        ax.set_xlabel("t")
    axes[0].set_ylabel(f"degree of node {node}")
    axes[0].legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def render_latent(path, coords, labels, ellipses, title):
    """Posterior-mean latent positions with 95% credible ellipses.

    ``coords`` is (N, 2); ``ellipses`` holds (center, half_axes, angle)
    per node, or None entries to skip.
    """
    fig, ax = plt.subplots(figsize=(6, 6))
    for k, label in enumerate(labels):
        if ellipses[k] is not None:
            center, axes_len, angle = ellipses[k]
            ax.add_patch(
                Ellipse(center, 2 * axes_len[0], 2 * axes_len[1], angle=angle,
                        fill=False, color="steelblue", alpha=0.6, linewidth=0.8)
            )
        ax.plot(*coords[k], marker="o", color="firebrick", markersize=3)
        ax.annotate(label, coords[k], fontsize=7,
                    xytext=(3, 3), textcoords="offset points")
    ax.set_xlabel("dimension 1")
    ax.set_ylabel("dimension 2")
    ax.set_title(title)
    ax.set_aspect("equal", adjustable="datalim")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def render_paths(path, times, series, ylabel):
    """Posterior-mean time paths with interval bands.

    ``series`` maps label -> (mean, lo, hi) arrays over ``times``.
    """
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (mean, lo, hi) in series.items():
        (line,) = ax.plot(times, mean, marker="o", markersize=3, label=label)
        ax.fill_between(times, lo, hi, alpha=0.2, color=line.get_color())
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    if len(series) > 1:
        ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)

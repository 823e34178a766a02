"""Static figures written next to the text reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


def plot_decay(bounds, path, title="bound sequence"):
    n = np.arange(1, len(bounds) + 1)
    b = np.asarray(bounds, float)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    pos = b > 0
    if pos.any():
        ax.semilogy(n[pos], b[pos], "o-")
    ax.set_xlabel("Duhamel depth n")
    ax.set_ylabel("b_n")
    ax.set_title(title)
    _save(fig, path)


def plot_ratios(ratios, path, title="LHS/RHS"):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist(np.asarray(ratios, float), bins=min(30, max(5, len(ratios) // 3)))
    ax.set_xlabel("ratio")
    ax.set_ylabel("trials")
    ax.set_title(title)
    _save(fig, path)


def plot_series(x, series: dict, path, xlabel="x", ylabel="y", logy=True):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, y in series.items():
        (ax.semilogy if logy else ax.plot)(x, y, "o-", label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(series) > 1:
        ax.legend()
    _save(fig, path)


def plot_refinement(summary: dict, path):
    """summary: estimate name -> list of (N, ratio_max)."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for name, levels in sorted(summary.items()):
        Ns = [n for n, _ in levels]
        ax.semilogy(Ns, [r for _, r in levels], "o-", label=name)
    ax.set_xlabel("N")
    ax.set_ylabel("ratio max")
    if summary:
        ax.legend(fontsize=7)
    _save(fig, path)

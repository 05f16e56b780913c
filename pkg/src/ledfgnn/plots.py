"""Figure rendering for report bundles.

Files only, Agg backend, and a fixed hash salt plus stripped date
metadata so repeated runs emit byte-identical SVG. Every number drawn
here must also appear in a CSV table of the same bundle; figures are
views of the tables, never the record.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "ledfgnn"

import matplotlib.pyplot as plt
import numpy as np

_FIG_KW = {"figsize": (6.4, 4.0), "dpi": 100}


def _finish(fig, ax, path, title, xlabel, ylabel):
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def save_line(path, x, series: dict[str, np.ndarray], *, title="",
              xlabel="", ylabel="") -> None:
    """One line per series entry over shared x values."""
    fig, ax = plt.subplots(**_FIG_KW)
    for label, ys in series.items():
        ax.plot(x, ys, marker="o", markersize=3, label=label)
    if len(series) > 1:
        ax.legend(fontsize=8)
    _finish(fig, ax, path, title, xlabel, ylabel)


def save_bars(path, groups: list[str], series: dict[str, np.ndarray], *,
              title="", xlabel="", ylabel="") -> None:
    """Grouped bars: one group per label, one bar per series entry."""
    fig, ax = plt.subplots(**_FIG_KW)
    base = np.arange(len(groups))
    width = 0.8 / max(1, len(series))
    for i, (label, ys) in enumerate(series.items()):
        offset = (i - (len(series) - 1) / 2) * width
        ax.bar(base + offset, ys, width=width, label=label)
    ax.set_xticks(base)
    ax.set_xticklabels(groups, rotation=30, ha="right", fontsize=8)
    if len(series) > 1:
        ax.legend(fontsize=8)
    _finish(fig, ax, path, title, xlabel, ylabel)

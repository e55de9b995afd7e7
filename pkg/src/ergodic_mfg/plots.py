"""SVG line plots for run artifacts (matplotlib, Agg backend).

The SVG writer is pinned to a fixed hash salt and no date stamp so reruns
produce the same file whenever the numbers agree.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update({"svg.hashsalt": "ergodic-mfg", "svg.fonttype": "none", "figure.figsize": (6, 4)})


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_densities(x: np.ndarray, h: float, curves: dict, path, title: str = "") -> Path:
    """Nodal weights divided by the spacing, one line per labelled measure."""
    fig, ax = plt.subplots()
    for label, w in curves.items():
        ax.plot(x, np.asarray(w) / h, label=label)
    ax.set_xlabel("x")
    ax.set_ylabel("density")
    ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def plot_series(x, series: dict, path, *, xlabel: str, ylabel: str, title: str = "",
                logx: bool = False, logy: bool = False, marker: str = "o") -> Path:
    fig, ax = plt.subplots()
    for label, y in series.items():
        y = np.asarray(y, float)
        if logy:
            y = np.where(y > 0, y, np.nan)
        ax.plot(x if not isinstance(x, dict) else x[label], y, marker=marker, label=label)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend()
    return _save(fig, path)

"""Run-curve plots: mean line with a min-max band across seeds, as SVG."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from sadq.metrics import COLUMNS, read_metrics


class MissingKey(KeyError):
    """Requested metric key is not a metrics-file column."""


def emit_plot(metrics_files, keys, path, log_y=False, title=None):
    """Plot one or more metric columns against env_steps.

    Multiple metrics files are treated as seeds of the same run: curves
    are aligned on the longest run's env_steps grid, the mean is drawn
    as a line, and the min-max envelope as a band.
    """
    if isinstance(keys, str):
        keys = [keys]
    if not metrics_files:
        raise ValueError("need at least one metrics file")
    for key in keys:
        if key not in COLUMNS:
            raise MissingKey(f"{key!r} is not a metrics column "
                             f"(have: {', '.join(COLUMNS)})")
    runs = [read_metrics(p) for p in metrics_files]
    runs = [r for r in runs if len(r["env_steps"])]
    if not runs:
        raise ValueError("all metrics files were empty")

    fig, axes = plt.subplots(len(keys), 1, figsize=(7.0, 3.2 * len(keys)),
                             squeeze=False)
    grid = max(runs, key=lambda r: r["env_steps"][-1])["env_steps"]
    grid = grid.astype(np.float64)
    for ax, key in zip(axes[:, 0], keys):
        curves = np.stack([
            np.interp(grid, r["env_steps"].astype(np.float64), r[key])
            for r in runs])
        ax.plot(grid, curves.mean(axis=0), linewidth=1.5)
        if len(runs) > 1:
            ax.fill_between(grid, curves.min(axis=0), curves.max(axis=0),
                            alpha=0.25, linewidth=0)
        ax.set_xlabel("env_steps")
        ax.set_ylabel(key)
        if log_y:
            ax.set_yscale("log")
        ax.grid(alpha=0.3)
    if title:
        axes[0, 0].set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path

"""Figure rendering for experiment runs.

Renders one learning-curve figure per metric (worst best-response gap and
mean L1 policy distance to the final iterate) with thin per-seed lines and a
bold mean line, saved as PNG files next to the delimited traces.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _curve_figure(seed_curves, ylabel, path):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    common = None
    for seed, (iterations, values) in sorted(seed_curves.items()):
        ax.plot(iterations, values, linewidth=0.8, alpha=0.6, label=f"seed {seed}")
        if common is None or len(iterations) < len(common):
            common = np.asarray(iterations)
    if len(seed_curves) > 1:
        stacked = []
        for _, (iterations, values) in sorted(seed_curves.items()):
            stacked.append(np.interp(common, iterations, values))
        ax.plot(common, np.mean(stacked, axis=0), linewidth=2.0, color="black", label="mean")
    ax.set_xlabel("iteration")
    ax.set_ylabel(ylabel)
    finite_positive = [
        v for _, (_, values) in seed_curves.items() for v in values if v > 0
    ]
    if finite_positive:
        ax.set_yscale("log")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_run_figures(out_dir, gap_curves: dict, distance_curves: dict) -> list[Path]:
    """Write nash_gap.png and policy_distance.png into out_dir; returns the paths."""
    out_dir = Path(out_dir)
    written = []
    if gap_curves:
        path = out_dir / "nash_gap.png"
        _curve_figure(gap_curves, "worst best-response gap", path)
        written.append(path)
    if distance_curves:
        path = out_dir / "policy_distance.png"
        _curve_figure(distance_curves, "mean L1 distance to final policy", path)
        written.append(path)
    return written

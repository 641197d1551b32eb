"""Panel rendering for parsed curve data."""

from __future__ import annotations

from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .curves import CurveData, read_curves

ESTIMATOR_LABELS = {
    "tau_obs": "observational estimate",
    "tau_iv": "IV-only estimate",
    "tau_param": "corrected estimate",
    "tau_shared": "corrected estimate (shared representation)",
}
ORACLE_LABEL = {"scalar": "true effect", "401k": "reference (unmasked IV)"}


def _mask_runs(masked: np.ndarray):
    """Contiguous (start, end, is_masked) runs over the grid (end exclusive)."""
    runs = []
    start = 0
    for i in range(1, masked.shape[0] + 1):
        if i == masked.shape[0] or masked[i] != masked[start]:
            runs.append((start, i, bool(masked[start])))
            start = i
    return runs


def _draw_curve(ax, x, mean, stderr, masked, color, label):
    """Mean line (dashed over masked stretches) with a stderr band."""
    if stderr.max() > 0:
        ax.fill_between(x, mean - stderr, mean + stderr, color=color, alpha=0.2,
                        linewidth=0)
    first = True
    for start, end, is_masked in _mask_runs(masked):
        hi = min(end + 1, x.shape[0])  # overlap one point for continuity
        ax.plot(x[start:hi], mean[start:hi],
                linestyle="--" if is_masked else "-",
                color=color, label=label if first else None)
        first = False


def build_figures(data: CurveData, mode: str = "scalar") -> dict:
    """One figure per estimator plus an overlay; returns name -> Figure."""
    if mode not in ("scalar", "401k"):
        raise ValueError(f"mode must be 'scalar' or '401k', got {mode!r}")
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    figures = {}
    xlabel = "years of education" if mode == "401k" else "x"

    for i, name in enumerate(data.estimators):
        order = np.argsort(data.x[name], kind="stable")
        x = data.x[name][order]
        fig, ax = plt.subplots(figsize=(5, 3.5))
        _draw_curve(ax, x, data.mean[name][order], data.stderr[name][order],
                    data.masked[name][order], colors[i % len(colors)],
                    ESTIMATOR_LABELS.get(name, name))
        ax.plot(x, data.oracle[name][order], color="black", linestyle=":",
                linewidth=1.2, label=ORACLE_LABEL[mode])
        ax.set_xlabel(xlabel)
        ax.set_ylabel("estimated effect")
        ax.set_title(ESTIMATOR_LABELS.get(name, name))
        ax.legend(fontsize=8)
        fig.tight_layout()
        figures[name] = fig

    fig, ax = plt.subplots(figsize=(6, 4))
    for i, name in enumerate(data.estimators):
        order = np.argsort(data.x[name], kind="stable")
        _draw_curve(ax, data.x[name][order], data.mean[name][order],
                    data.stderr[name][order], data.masked[name][order],
                    colors[i % len(colors)], ESTIMATOR_LABELS.get(name, name))
    first = data.estimators[0]
    order = np.argsort(data.x[first], kind="stable")
    ax.plot(data.x[first][order], data.oracle[first][order], color="black",
            linestyle=":", linewidth=1.2, label=ORACLE_LABEL[mode])
    ax.set_xlabel(xlabel)
    ax.set_ylabel("estimated effect")
    ax.set_title("all estimators")
    ax.legend(fontsize=8)
    fig.tight_layout()
    figures["overlay"] = fig
    return figures


def render(curves_path: Union[str, Path], out_dir: Union[str, Path],
           mode: str = "scalar") -> list:
    """Parse a curve file and write one PNG per panel; returns the paths."""
    data = read_curves(curves_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    figures = build_figures(data, mode=mode)
    try:
        for name, fig in figures.items():
            path = out / f"{name}.png"
            fig.savefig(path, dpi=120)
            written.append(path)
    finally:
        for fig in figures.values():
            plt.close(fig)
    return written

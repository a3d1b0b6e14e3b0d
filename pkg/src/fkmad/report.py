"""Figure rendering for run artifacts: loss curves, score timelines, eval bars.

Every function writes a PNG next to the delimited outputs and returns the
path.  The Agg backend is forced before pyplot loads so rendering works
headless, and savefig strips the embedded timestamp so repeated runs of the
same experiment produce identical bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .data import LabeledSeries
from .evaluate import EvalReport
from .losses import LossBreakdown

_SAVE_KW = dict(dpi=110, metadata={"Date": None})


def _shade_labels(ax, labels: np.ndarray) -> None:
    """Translucent spans over contiguous label-1 segments."""
    labels = np.asarray(labels).astype(bool)
    t = 0
    n = labels.shape[0]
    while t < n:
        if labels[t]:
            start = t
            while t < n and labels[t]:
                t += 1
            ax.axvspan(start, t, color="tab:red", alpha=0.18, lw=0)
        else:
            t += 1


def loss_curves(history: list[LossBreakdown], path: str) -> str:
    steps = [h.step for h in history]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
    ax1.plot(steps, [h.total for h in history], lw=1.2, color="black")
    ax1.set_xlabel("step")
    ax1.set_ylabel("total loss")
    ax1.set_title("training loss")
    for name in ("recon", "passivity", "margin", "step_small",
                 "step_smooth", "gate_reg"):
        ax2.plot(steps, [getattr(h, name) for h in history], lw=1.0, label=name)
    ax2.set_xlabel("step")
    ax2.set_ylabel("component value (unweighted)")
    ax2.set_yscale("symlog", linthresh=1e-6)
    ax2.legend(fontsize=8)
    ax2.set_title("components")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def score_timeline(fused: np.ndarray, path: str,
                   labels: np.ndarray | None = None,
                   threshold: float | None = None) -> str:
    fig, ax = plt.subplots(figsize=(11, 3.2))
    if labels is not None:
        _shade_labels(ax, labels[:fused.shape[0]])
    ax.plot(np.arange(fused.shape[0]), fused, lw=0.8, color="tab:blue")
    if threshold is not None:
        ax.axhline(threshold, color="tab:orange", lw=1.0, ls="--",
                   label=f"threshold {threshold:.3g}")
        ax.legend(fontsize=8)
    ax.set_xlabel("timestep")
    ax.set_ylabel("fused score")
    ax.set_title("anomaly score timeline")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def eval_bars(report: EvalReport, path: str) -> str:
    names = ("precision", "recall", "f1")
    raw = [report.precision, report.recall, report.f1]
    adj = [report.adjusted_precision, report.adjusted_recall,
           report.adjusted_f1]
    x = np.arange(3)
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    ax.bar(x - 0.18, raw, width=0.36, label="raw", color="tab:blue")
    ax.bar(x + 0.18, adj, width=0.36, label="point-adjusted",
           color="tab:orange")
    for xi, v in zip(x - 0.18, raw):
        ax.text(xi, v + 0.01, f"{v:.3f}", ha="center", fontsize=8)
    for xi, v in zip(x + 0.18, adj):
        ax.text(xi, v + 0.01, f"{v:.3f}", ha="center", fontsize=8)
    ax.set_xticks(x, names)
    ax.set_ylim(0, 1.1)
    ax.legend(fontsize=8)
    ax.set_title("detection metrics")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def series_preview(series: LabeledSeries, path: str,
                   max_channels: int = 4) -> str:
    k = min(series.width, max_channels)
    fig, axes = plt.subplots(k, 1, figsize=(11, 1.6 * k), sharex=True,
                             squeeze=False)
    for c in range(k):
        ax = axes[c, 0]
        if series.labels is not None:
            _shade_labels(ax, series.labels)
        ax.plot(series.values[:, c], lw=0.6, color="tab:blue")
        ax.set_ylabel(series.feature_names[c], fontsize=8)
    axes[-1, 0].set_xlabel("timestep")
    axes[0, 0].set_title("series preview (anomalous spans shaded)")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path

"""Figures for training curves, ensemble selection, categorical accuracy and attention."""

from __future__ import annotations

import math
from contextlib import contextmanager
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

GOLDEN = (math.sqrt(5) - 1.0) / 2.0
COLORS = ["#08589e", "#2b8cbe", "#4eb3d3", "#7bccc4", "#a8ddb5"]

STYLE = {
    "axes.prop_cycle": matplotlib.cycler(color=COLORS),
    "axes.labelsize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "font.family": "DejaVu Sans",
    "legend.fontsize": 8,
    "legend.frameon": False,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "savefig.bbox": "tight",
    # stable element ids so identical inputs give identical SVG bytes
    "svg.hashsalt": "drbilstm",
    "svg.fonttype": "none",
}


@contextmanager
def styled(width: float = 5.0, height: float = None):
    with matplotlib.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(width, height or width * GOLDEN))
        try:
            yield fig, ax
        finally:
            plt.close(fig)


def _save(fig, path) -> None:
    fmt = str(path).rsplit(".", 1)[-1].lower()
    meta = {"Date": None} if fmt == "svg" else {}
    if fmt == "png":
        meta = {"Software": None}
    fig.savefig(path, metadata=meta)


def plot_history(history, path) -> None:
    """Train/dev accuracy and mean loss per epoch."""
    epochs = [r.epoch for r in history]
    with styled() as (fig, ax):
        ax.plot(epochs, [r.train_acc for r in history], marker="o", label="train accuracy")
        ax.plot(epochs, [r.dev_acc for r in history], marker="s", label="dev accuracy")
        ax.set_xlabel("epoch")
        ax.set_ylabel("accuracy")
        ax.set_ylim(0, 1.02)
        loss_ax = ax.twinx()
        loss_ax.plot(epochs, [r.mean_loss for r in history], color="0.5", linestyle="--", label="mean loss")
        loss_ax.set_ylabel("mean loss")
        lines = ax.get_lines() + loss_ax.get_lines()
        ax.legend(lines, [ln.get_label() for ln in lines], loc="center right")
        _save(fig, path)


def plot_ensemble_curve(steps, path) -> None:
    """Dev (and test, when known) accuracy against ensemble size."""
    ns = [s.n for s in steps]
    with styled() as (fig, ax):
        ax.plot(ns, [100 * s.dev_accuracy for s in steps], marker="o", label="dev")
        if all(s.test_accuracy is not None for s in steps):
            ax.plot(ns, [100 * s.test_accuracy for s in steps], marker="s", label="test")
        ax.set_xlabel("number of models")
        ax.set_ylabel("accuracy (%)")
        ax.set_xticks(ns)
        ax.legend()
        _save(fig, path)


def plot_categorical(report, path) -> None:
    """Grouped bars of per-tag accuracy for every system in the report."""
    rows = report.rows
    names = report.systems
    x = np.arange(len(rows))
    width = 0.8 / max(len(names), 1)
    with styled(width=7.0, height=3.0) as (fig, ax):
        for k, name in enumerate(names):
            acc = [np.nan if r.accuracies[k] is None else 100 * r.accuracies[k] for r in rows]
            ax.bar(x + (k - (len(names) - 1) / 2) * width, acc, width, label=name)
        ax.set_xticks(x)
        ax.set_xticklabels([r.tag for r in rows], rotation=45, ha="right")
        ax.set_ylabel("accuracy (%)")
        ax.set_ylim(0, 100)
        ax.legend(ncol=max(len(names), 1), loc="lower right")
        _save(fig, path)


def plot_heatmap(weights: np.ndarray, premise: Sequence[str], hypothesis: Sequence[str], path) -> None:
    """Grayscale grid of attention weights; darker cells carry more weight."""
    n, m = weights.shape
    with styled(width=max(2.5, 0.35 * m + 1.5), height=max(2.5, 0.35 * n + 1.0)) as (fig, ax):
        ax.imshow(weights, cmap="Greys", vmin=0.0, vmax=1.0, aspect="equal", interpolation="nearest")
        ax.set_xticks(range(m))
        ax.set_xticklabels(hypothesis, rotation=90)
        ax.set_yticks(range(n))
        ax.set_yticklabels(premise)
        ax.set_xlabel("hypothesis")
        ax.set_ylabel("premise")
        ax.xaxis.set_ticks_position("top")
        ax.xaxis.set_label_position("top")
        for spine in ax.spines.values():
            spine.set_visible(True)
        _save(fig, path)

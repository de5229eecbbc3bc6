"""Figures written next to the delimited command output (Agg backend, no display)."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.bbox": "tight",
    "svg.hashsalt": "alsx",
}


def _save(fig, path) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, metadata={"Date": None} if str(path).endswith(".svg") else None)
    plt.close(fig)
    return str(path)


def plot_training(history, path) -> str:
    """Training loss and validation accuracy per epoch."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3))
        ep = [r.epoch for r in history.epochs]
        ax.plot(ep, [r.train_loss for r in history.epochs], color="C0", marker="o", ms=3)
        ax.set_xlabel("epoch")
        ax.set_ylabel("training loss", color="C0")
        ax2 = ax.twinx()
        ax2.plot(ep, [r.val_exact for r in history.epochs], color="C1", label="exact")
        ax2.plot(ep, [r.val_within1 for r in history.epochs], color="C2", label="within one bin")
        ax2.set_ylim(0, 1.02)
        ax2.set_ylabel("validation accuracy")
        ax2.legend(loc="lower right", frameon=False)
        if history.best_epoch:
            ax.axvline(history.best_epoch, color="0.6", lw=0.8, ls="--")
        return _save(fig, path)


def plot_costs(rows, path, title: str = "") -> str:
    """Grouped bars of before/after power, area and delay, normalized to before.

    ``rows`` holds (label, power_before, power_after, area_before, area_after,
    delay_before, delay_after).
    """
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 3, figsize=(3 + 0.6 * len(rows) * 3, 3), sharey=True)
        labels = [r[0] for r in rows]
        x = np.arange(len(rows))
        for k, (ax, name) in enumerate(zip(axes, ("power", "area", "delay"))):
            before = np.array([r[1 + 2 * k] for r in rows], dtype=float)
            after = np.array([r[2 + 2 * k] for r in rows], dtype=float)
            ratio = np.divide(after, before, out=np.ones_like(after), where=before > 0)
            ax.bar(x, np.ones_like(ratio), 0.4, color="0.8", label="before")
            ax.bar(x + 0.4, ratio, 0.4, color="C0", label="after")
            ax.set_xticks(x + 0.2, labels, rotation=45, ha="right")
            ax.set_title(name)
        axes[0].set_ylabel("relative to exact")
        axes[0].legend(frameon=False, loc="lower left")
        if title:
            fig.suptitle(title)
        return _save(fig, path)


def plot_netlist_costs(names, power, area, path) -> str:
    """Power and area per netlist."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(2 + 0.5 * len(names), 3))
        x = np.arange(len(names))
        ax.bar(x - 0.2, power, 0.4, label="power")
        ax.bar(x + 0.2, area, 0.4, label="area")
        ax.set_xticks(x, names, rotation=45, ha="right")
        ax.legend(frameon=False)
        return _save(fig, path)

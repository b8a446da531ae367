"""Figures written next to the JSONL metrics (Agg backend, files only)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .ranker import TASKS  # noqa: E402


def plot_eval(rows: list[dict], path: str | Path) -> Path:
    """Grouped bars: recall@1 per task for each flag combination."""
    combos = []
    for r in rows:
        key = (r["graph"], r["mask"], r["utility"])
        if key not in combos:
            combos.append(key)
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / max(len(combos), 1)
    x = np.arange(len(TASKS))
    for i, (graph, mask, util) in enumerate(combos):
        vals = []
        for t in TASKS:
            hit = [r for r in rows if (r["graph"], r["mask"], r["utility"], r["task"]) == (graph, mask, util, t)]
            v = hit[0]["recall_at_1"] if hit and hit[0]["n"] else 0.0
            vals.append(v)
        label = f"{graph}, mask {'on' if mask else 'off'}, utility {'on' if util else 'off'}"
        ax.bar(x + (i - (len(combos) - 1) / 2) * width, vals, width, label=label)
    ax.set_xticks(x, TASKS)
    ax.set_ylim(0, 1)
    ax.set_ylabel("recall@1")
    ax.legend(fontsize=7, loc="lower right")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def plot_training(history: list[dict], path: str | Path) -> Path:
    """Train loss and valid recall@1 per epoch."""
    epochs = [h["epoch"] for h in history]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(epochs, [h["train_loss"] for h in history], marker="o")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("train cross-entropy")
    for t in TASKS:
        pts = [(h["epoch"], h["valid"][t]["recall_at_1"]) for h in history
               if "valid" in h and h["valid"][t]["n"]]
        if pts:
            ax2.plot(*zip(*pts), marker="o", label=t)
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("valid recall@1")
    ax2.set_ylim(0, 1)
    ax2.legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path

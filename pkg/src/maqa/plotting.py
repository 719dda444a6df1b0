"""PNG figures for sweeps and run reports (headless matplotlib)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_sweep(rows: Sequence, path: str | Path) -> Path:
    """Precision, recall and F1 against the swept value; failed points are gaps."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    xs = [r.value for r in rows]
    for metric in ("precision", "recall", "f1"):
        ys = [getattr(r, metric) for r in rows]
        ax.plot(xs, [float("nan") if y is None else y for y in ys], marker="o", label=metric)
    ax.set_xlabel(rows[0].axis if rows else "value")
    ax.set_ylabel("score")
    ax.set_ylim(0, 1.05)
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_latency(latency: dict[str, float], path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    stages = list(latency)
    ax.bar(stages, [latency[s] for s in stages], color="tab:blue")
    ax.set_ylabel("mean seconds per question")
    return _save(fig, path)


def plot_arecall(curve: Sequence[tuple[int, float]], path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot([k for k, _ in curve], [v for _, v in curve], marker="o")
    ax.set_xscale("log")
    ax.set_xlabel("K")
    ax.set_ylabel("ARecall@K")
    ax.set_ylim(0, 1.05)
    ax.grid(alpha=0.3)
    return _save(fig, path)

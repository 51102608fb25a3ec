"""Report figures written next to the CSV outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps PNG bytes reproducible
_META = {"Software": None}


def _save(fig, path: str | Path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)


def plot_balance(freq_before: Sequence[float], freq_after: Sequence[float], path: str | Path,
                 labels: Sequence[str] | None = None) -> None:
    """Label occurrence before and after replication, side by side."""
    before, after = np.asarray(freq_before), np.asarray(freq_after)
    x = np.arange(len(before))
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.2), sharey=True)
    for ax, vals, name in ((axes[0], before, "before balancing"), (axes[1], after, "after balancing")):
        ax.bar(x, vals, color="0.4")
        ax.axhline(1.0 / len(vals), color="tab:orange", lw=1, ls="--")
        ax.set_title(name)
        ax.set_xticks(x)
        ax.set_xticklabels(labels if labels is not None else [str(i) for i in x], fontsize=7)
        ax.set_xlabel("category")
    axes[0].set_ylabel("label frequency")
    _save(fig, path)


def plot_sweep(candidates: Sequence[dict], path: str | Path) -> None:
    """Mean/reference-mean and std/reference-std of the label distribution versus c."""
    c = [row["c"] for row in candidates]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.2))
    axes[0].plot(c, [row["mean"] for row in candidates], "o-", label="mean")
    axes[0].plot(c, [row["ref_mean"] for row in candidates], "s--", label="midpoint")
    axes[1].plot(c, [np.sqrt(row["var"]) for row in candidates], "o-", label="std")
    axes[1].plot(c, [np.sqrt(row["ref_var"]) for row in candidates], "s--", label="uniform std")
    for ax in axes:
        ax.set_xlabel("c")
        ax.legend(frameon=False)
    _save(fig, path)


def plot_training(epochs: Sequence[int], losses: Sequence[float], f1: Sequence[float], path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.plot(epochs, losses, color="tab:blue")
    ax.set_xlabel("epoch")
    ax.set_ylabel("train BCE", color="tab:blue")
    ax2 = ax.twinx()
    ax2.plot(epochs, f1, color="tab:red")
    ax2.set_ylabel("validation micro-F1", color="tab:red")
    ax2.set_ylim(0, 1)
    _save(fig, path)


def plot_intersection(scores: Sequence[tuple[int, int, int]], path: str | Path) -> None:
    """Tagged-word count, reference size and overlap per category (log scale)."""
    scores = np.asarray(scores, dtype=float)
    x = np.arange(len(scores))
    fig, ax = plt.subplots(figsize=(8, 3.2))
    w = 0.28
    ax.bar(x - w, scores[:, 1] + 1, w, label="reference vocabulary")
    ax.bar(x, scores[:, 0] + 1, w, label="tagged words")
    ax.bar(x + w, scores[:, 2] + 1, w, label="intersection")
    ax.set_yscale("log")
    ax.set_xticks(x)
    ax.set_xlabel("category")
    ax.set_ylabel("words + 1")
    ax.legend(frameon=False, fontsize=8)
    _save(fig, path)


def plot_corpus(lengths: Sequence[int], label_counts: Sequence[int], path: str | Path) -> None:
    """Labels-per-note distribution and log-frequency of note lengths."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.2))
    ks, freq = np.unique(np.asarray(label_counts), return_counts=True)
    axes[0].bar(ks, freq, color="0.4")
    axes[0].set_xlabel("labels per note")
    axes[0].set_ylabel("notes")
    axes[1].hist(lengths, bins=30, color="0.4", log=True)
    axes[1].set_xlabel("tokens per note")
    axes[1].set_ylabel("notes (log)")
    _save(fig, path)

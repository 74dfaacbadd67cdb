"""Render learning curves, category reports, and rule frequency tables to
PNG files next to their CSV counterparts."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .distill import TrainHistory
from .probe import CATEGORIES, CategoryReport


def plot_history(history: TrainHistory, path) -> None:
    epochs = range(len(history))
    fig, (ax_mse, ax_norm) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax_mse.plot(epochs, history.train_mse, label="train")
    ax_mse.plot(epochs, history.val_mse, label="validation")
    ax_mse.set_xlabel("epoch")
    ax_mse.set_ylabel("MSE")
    ax_mse.set_yscale("log")
    ax_mse.legend()
    ax_norm.plot(epochs, history.val_normalized, color="tab:purple")
    ax_norm.axvline(history.best_epoch, color="gray", linestyle=":",
                    label=f"best epoch {history.best_epoch}")
    ax_norm.set_xlabel("epoch")
    ax_norm.set_ylabel("validation MSE / chance MSE")
    ax_norm.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_category_report(report: CategoryReport, path) -> None:
    cats = [c for c in CATEGORIES if c in report.rows]
    means = [report.mean_mse(c) for c in cats]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(cats, means, color="tab:blue")
    ax.set_ylabel("mean MSE")
    for label in ax.get_xticklabels():
        label.set_rotation(20)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_rule_frequencies(counts: list, path, top: int = 30) -> None:
    """Horizontal bar chart of the ``top`` most frequent (rule, count) pairs."""
    shown = counts[:top]
    labels = [rule for rule, _ in shown][::-1]
    values = [count for _, count in shown][::-1]
    fig, ax = plt.subplots(figsize=(7, max(2.5, 0.25 * len(shown))))
    ax.barh(labels, values, color="tab:green")
    ax.set_xlabel("count")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

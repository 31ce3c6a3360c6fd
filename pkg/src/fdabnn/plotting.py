"""Figures written next to the CSV reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_spectra(reports, reference, path):
    """Sine coefficients per harmonic (top) and their gap to ``reference`` (bottom)."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, len(reports), figsize=(2.6 * len(reports), 4.2), squeeze=False)
        for col, rep in enumerate(reports):
            idx = np.array([h[0] for h in rep.harmonics])
            axes[0, col].bar(idx, rep.sine, width=0.8, color="C0")
            axes[0, col].set_title(rep.function)
            delta = rep.sine - reference.sine
            axes[1, col].bar(idx, delta, width=0.8, color="C3")
            axes[1, col].set_xlabel("harmonic")
        axes[0, 0].set_ylabel("sine coefficient")
        axes[1, 0].set_ylabel("minus sign's")
        return _save(fig, path)


def plot_mse(rows, path):
    """Truncation MSE against the number of Fourier terms, log scale."""
    n = [r[0] for r in rows]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.4, 2.6))
        ax.semilogy(n, [r[1] for r in rows], "o-", label="quadrature")
        ax.semilogy(n, [r[2] for r in rows], "k--", lw=0.8, label="Parseval")
        ax.set_xlabel("n")
        ax.set_ylabel("mean squared error")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_surrogates(curves: dict[str, tuple[np.ndarray, np.ndarray]], path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.6, 2.6))
        for label, (t, g) in curves.items():
            ax.plot(t, g, lw=1, label=label)
        ax.set_xlabel("t")
        ax.set_ylabel("backward gradient")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_training_curves(history: list[dict], path):
    epochs = [h["epoch"] for h in history]
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(6.4, 2.6))
        ax1.plot(epochs, [h["train_loss"] for h in history], "o-")
        ax1.set_xlabel("epoch")
        ax1.set_ylabel("train loss")
        ax2.plot(epochs, [h["train_acc"] for h in history], "o-", label="train")
        ax2.plot(epochs, [h["test_acc"] for h in history], "s-", label="test")
        ax2.set_xlabel("epoch")
        ax2.set_ylabel("accuracy")
        ax2.legend(frameon=False)
        return _save(fig, path)

"""Figure rendering for CLI reports.

Every report path that writes delimited output can also render a figure
next to it; these helpers keep the matplotlib usage in one place and
always go through the Agg backend so they work headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def save_training_curves(log, path) -> None:
    """Two-panel loss/accuracy figure for a training log."""
    steps = [r.step for r in log.records]
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax_loss.plot(steps, [r.train_loss for r in log.records], label="train")
    ax_loss.plot(steps, [r.val_loss for r in log.records], label="validation")
    ax_loss.set_xlabel("step")
    ax_loss.set_ylabel("cross-entropy loss")
    ax_loss.legend()
    ax_acc.plot(steps, [r.val_accuracy for r in log.records], color="tab:green")
    ax_acc.axvline(log.best_step, color="gray", linestyle=":", linewidth=1)
    ax_acc.set_xlabel("step")
    ax_acc.set_ylabel("validation accuracy")
    ax_acc.set_ylim(0.0, 1.0)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_compression_chart(reports, path) -> None:
    """Bar chart of compression rates for a list of report dicts."""
    labels = []
    for rep in reports:
        rank = rep.get("rank")
        if rank is None:
            labels.append(rep["format"])
        elif isinstance(rank, int):
            labels.append(f"{rep['format']} {rank}")
        else:
            labels.append(f"{rep['format']} ({','.join(str(v) for v in rank)})")
    rates = [rep["compression_rate"] for rep in reports]
    fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * len(labels)), 3.5))
    ax.bar(range(len(labels)), rates, color="tab:blue")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("compression rate")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

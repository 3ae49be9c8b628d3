from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}
# PNG metadata carries the matplotlib version by default
_SAVE = {"dpi": 120, "metadata": {"Software": None}}


def _label(run) -> str:
    ctype, pct = run.corruption
    corr = "clean" if ctype == "none" else f"{ctype} {pct:g}%"
    return f"{run.loss} / {corr}"


def plot_learning_curves(runs, path: str | Path) -> Path:
    """Dev WER and its sub/ins/del components per evaluated epoch."""
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 4, figsize=(12, 3), sharex=True)
        for run in runs:
            pts = [r for r in run.history if r.get("dev_wer") is not None]
            if not pts:
                continue
            ep = [r["epoch"] for r in pts]
            axes[0].plot(ep, [100 * r["dev_wer"] for r in pts], label=_label(run))
            for ax, key in zip(axes[1:], ("sub", "ins", "del")):
                ax.plot(ep, [r[key] for r in pts])
        axes[0].set_ylabel("dev WER [%]")
        for ax, title in zip(axes, ("WER", "substitutions", "insertions", "deletions")):
            ax.set_title(title)
            ax.set_xlabel("epoch")
        axes[0].legend(loc="upper right")
        fig.tight_layout()
        fig.savefig(path, **_SAVE)
        plt.close(fig)
    return path


def plot_wer_summary(rows, path: str | Path) -> Path:
    """Bar chart of final test WER per run, grouped by corruption."""
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4, 0.7 * len(rows) + 1), 3))
        labels = []
        for i, r in enumerate(rows):
            value = r["test_wer"] if r["test_wer"] is not None else r["dev_wer"]
            color = "0.6" if r["loss"] == "rnnt" else "C0"
            ax.bar(i, 100 * (value or 0.0), color=color)
            if r["werdr"] is not None:
                ax.annotate(f"{100 * r['werdr']:.0f}%", (i, 100 * (value or 0.0)), ha="center", va="bottom", fontsize=7)
            corr = "clean" if r["corruption_type"] == "none" else f"{r['corruption_type']}{r['corruption_pct']:g}"
            labels.append(f"{r['loss']}\n{corr}")
        ax.set_xticks(range(len(rows)), labels)
        ax.set_ylabel("test WER [%]")
        fig.tight_layout()
        fig.savefig(path, **_SAVE)
        plt.close(fig)
    return path

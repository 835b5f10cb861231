"""Figures for the experiment report (delta distributions, improvement counts)."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.bbox": "tight",
}

CATEGORY_COLORS = {
    "Misspelling": "#c0504d",
    "Naturality": "#4f81bd",
    "Ordering": "#9bbb59",
    "Paraphrasing": "#8064a2",
}


def _save(fig, path):
    # no timestamp/software metadata, so reruns write identical files
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def delta_boxplot(deltas, models, categories, path, metric_label="nDCG@10"):
    """One box per (model, category) of per-query deltas. ``deltas`` maps (model, category) -> list."""
    with plt.rc_context(STYLE):
        width = max(4.0, 1.2 * len(models) * max(1, len(categories)) / 2)
        fig, ax = plt.subplots(figsize=(width, 3.2))
        n = max(1, len(categories))
        step = 0.8 / n
        for ci, cat in enumerate(categories):
            pos = [mi + (ci - (n - 1) / 2) * step for mi in range(len(models))]
            data = [deltas.get((m, cat)) or [np.nan] for m in models]
            bp = ax.boxplot(data, positions=pos, widths=step * 0.85, patch_artist=True,
                            showfliers=True, manage_ticks=False)
            for box in bp["boxes"]:
                box.set_facecolor(CATEGORY_COLORS.get(cat, "#888888"))
                box.set_alpha(0.75)
            ax.plot([], [], color=CATEGORY_COLORS.get(cat, "#888888"), lw=6, label=cat)
        ax.axhline(0.0, color="k", lw=0.6, ls="--")
        ax.set_xticks(range(len(models)))
        ax.set_xticklabels(models)
        ax.set_ylabel(f"{metric_label} delta")
        ax.legend(ncol=min(4, n), loc="lower left", frameon=False)
        _save(fig, path)


def improvement_bars(counts, models, categories, path):
    """Grouped bars of variations beating the original, ``counts[(model, category)]``."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 1.0 * len(models) + 2), 3.0))
        n = max(1, len(categories))
        step = 0.8 / n
        x = np.arange(len(models))
        for ci, cat in enumerate(categories):
            ax.bar(x + (ci - (n - 1) / 2) * step, [counts.get((m, cat), 0) for m in models],
                   width=step, color=CATEGORY_COLORS.get(cat, "#888888"), label=cat)
        ax.set_xticks(x)
        ax.set_xticklabels(models)
        ax.set_ylabel("variations better than original")
        ax.legend(ncol=min(4, n), frameon=False)
        _save(fig, path)

"""Report figures written next to the CSV/JSON outputs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
}
# fixed metadata keeps PNG bytes reproducible across runs
PNG_META = {"Software": None}


def _save(fig, path: str | Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="png", metadata=PNG_META)
    plt.close(fig)


def element_count_figure(before: dict[str, int], after: dict[str, int], path: str | Path):
    """Grouped bar chart of per-kind element counts before and after cleaning."""
    kinds = sorted(set(before) | set(after))
    x = np.arange(len(kinds))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.6 * len(kinds) + 1.5), 3.0))
        ax.bar(x - 0.2, [before.get(k, 0) for k in kinds], 0.4, label="before", color="#8d99ae")
        ax.bar(x + 0.2, [after.get(k, 0) for k in kinds], 0.4, label="after", color="#2b2d42")
        ax.set_xticks(x)
        ax.set_xticklabels(kinds, rotation=45, ha="right")
        ax.set_ylabel("elements")
        ax.set_title("element counts before and after normalization")
        ax.legend(frameon=False)
        fig.tight_layout()
        _save(fig, path)


def loss_figure(steps, series: dict[str, list[float]], path: str | Path, title: str = ""):
    """Log-scale loss curves against training step."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.0))
        for name, values in series.items():
            values = np.asarray(values, dtype=np.float64)
            if np.all(values > 0):
                ax.semilogy(steps, values, label=name, linewidth=1.0)
            else:
                ax.plot(steps, values, label=name, linewidth=1.0)
        ax.set_xlabel("step")
        ax.set_ylabel("loss")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        fig.tight_layout()
        _save(fig, path)

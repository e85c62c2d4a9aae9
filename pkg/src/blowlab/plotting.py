"""Figures for blow-up ladders; always rendered off-screen to files."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import numpy as np
from matplotlib import pyplot as plt

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
FIG_WIDTH = 5.0

RC = {
    "font.size": 9,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "figure.dpi": 150,
    "savefig.bbox": "tight",
}


def ladder_figure(rungs, values, predictions, path, title=None):
    """Log-log plot of |value| and |prediction| against T - t."""
    rungs = np.asarray(rungs, dtype=float)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(FIG_WIDTH, FIG_WIDTH * GOLDEN))
        ax.loglog(rungs, np.abs(values), "o-", label="series")
        pred = np.asarray(predictions, dtype=float)
        ok = np.isfinite(pred)
        if ok.any():
            ax.loglog(rungs[ok], np.abs(pred[ok]), "--", label="leading asymptotics")
        ax.invert_xaxis()
        ax.set_xlabel(r"$T - t$")
        ax.set_ylabel("magnitude at $x_0$")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
    return path

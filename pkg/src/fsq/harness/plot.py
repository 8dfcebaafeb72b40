"""Static SVG learning curve drawn from ``curve.csv``."""

from __future__ import annotations

import csv

import numpy as np


def rolling_mean(values, window: int) -> np.ndarray:
    """Trailing mean; the first ``window - 1`` points average what exists so far."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return values
    csum = np.cumsum(np.insert(values, 0, 0.0))
    idx = np.arange(1, values.size + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)


def read_curve(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {
        "episode": np.array([int(r["episode"]) for r in rows], dtype=np.int64),
        "steps": np.array([int(r["steps"]) for r in rows], dtype=np.int64),
        "return": np.array([float(r["return"]) for r in rows]),
        "epsilon": np.array([float(r["epsilon"]) for r in rows]),
        "mean_loss": np.array([float(r["mean_loss"]) for r in rows]),
    }


def write_svg_plot(curve_path, svg_path, window: int = 100, threshold: float | None = None, title: str = ""):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    curve = read_curve(curve_path)
    with matplotlib.rc_context({"svg.hashsalt": "fsq", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.plot(curve["episode"], curve["return"], color="0.75", linewidth=0.8, label="episode return")
        ax.plot(curve["episode"], rolling_mean(curve["return"], window), linewidth=1.8,
                label=f"rolling {window}-episode mean")
        if threshold is not None:
            ax.axhline(threshold, color="tab:red", linestyle="--", linewidth=1.0, label="success threshold")
        ax.set_xlabel("episode")
        ax.set_ylabel("undiscounted return")
        if title:
            ax.set_title(title)
        ax.legend(loc="lower right", fontsize=8)
        fig.tight_layout()
        fig.savefig(svg_path, format="svg", metadata={"Date": None})
        plt.close(fig)

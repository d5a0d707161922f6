import logging
import os
from typing import Dict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".svg", ".pdf")


def write_curves(curves: Dict[str, pd.DataFrame], path: str, x: str = "t", y: str = "value",
                 title: str = "") -> str:
    """Write oscillation curves as an image or as a gnuplot data file.

    Image suffixes go through matplotlib; anything else gets one whitespace
    block per curve, separated by blank lines, with a ``# name`` comment.
    """
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)

    if path.lower().endswith(IMAGE_SUFFIXES):
        fig, ax = plt.subplots(figsize=(8, 5))
        for name, df in curves.items():
            ax.plot(df[x], df[y], marker="o", markersize=3, label=name)
        if all((df[x] > 0).all() for df in curves.values()):
            ax.set_xscale("log")
        ax.set_yscale("symlog", linthresh=1e-12)
        ax.set_xlabel(x)
        ax.set_ylabel(y)
        if title:
            ax.set_title(title)
        ax.legend()
        ax.grid(True, alpha=0.3)
        plt.tight_layout()
        fig.savefig(path, dpi=150, bbox_inches="tight")
        plt.close(fig)
    else:
        blocks = []
        for name, df in curves.items():
            rows = "\n".join(f"{a:.17g} {b:.17g}" for a, b in zip(df[x], df[y]))
            blocks.append(f"# {name}\n# {x} {y}\n{rows}")
        with open(path, "w", encoding="utf-8") as f:
            f.write("\n\n\n".join(blocks) + "\n")

    logger.info(f"Wrote plot data to {path}")
    return path

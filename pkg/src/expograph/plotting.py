"""Line figures rendered off-screen to PNG bytes.

Only the Agg backend is used and PNG metadata is stripped, so equal inputs
give byte-identical files.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["Series", "FigureSpec", "render_png"]

STYLE = {
    "figure.figsize": (5.0, 3.6),
    "figure.dpi": 100,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "lines.linewidth": 1.4,
    "svg.hashsalt": "expograph",
}


@dataclass(frozen=True)
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray
    style: str = "-"


@dataclass(frozen=True)
class FigureSpec:
    title: str
    xlabel: str
    ylabel: str
    series: tuple[Series, ...]
    logy: bool = False
    logx: bool = False
    ylim: tuple[float, float] | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def sidecar(self) -> dict:
        """Axis and series description written next to the data file."""
        return {
            "title": self.title,
            "x": {"label": self.xlabel, "scale": "log" if self.logx else "linear"},
            "y": {"label": self.ylabel, "scale": "log" if self.logy else "linear"},
            "series": [s.label for s in self.series],
            **self.extra,
        }


def render_png(spec: FigureSpec) -> bytes:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        try:
            for s in spec.series:
                y = np.asarray(s.y, dtype=float)
                if spec.logy:
                    # exact zeros (finite-time averaging) would vanish on a log axis
                    y = np.where(y > 0, y, np.nan)
                ax.plot(s.x, y, s.style, label=s.label)
            ax.set_title(spec.title)
            ax.set_xlabel(spec.xlabel)
            ax.set_ylabel(spec.ylabel)
            if spec.logy:
                ax.set_yscale("log")
            if spec.logx:
                ax.set_xscale("log")
            if spec.ylim is not None:
                ax.set_ylim(*spec.ylim)
            if len(spec.series) > 1:
                ax.legend()
            fig.tight_layout()
            buf = io.BytesIO()
            fig.savefig(buf, format="png", metadata={"Software": None})
        finally:
            plt.close(fig)
    return buf.getvalue()

"""Static figures written next to the CSV outputs.

Figures are built on bare :class:`~matplotlib.figure.Figure` objects (no
pyplot state) and saved as SVG with a fixed hash salt and no timestamp, so
reruns produce identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

from matplotlib.figure import Figure  # noqa: E402

from .inference import Envelope  # noqa: E402
from .series import TimeSeriesData  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "itsim"

BAND_COLOR = "#9ecae1"
SMOOTH_BAND_COLOR = "#fdae6b"


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    fig.savefig(path, format=path.suffix.lstrip(".") or "svg", metadata={"Date": None} if path.suffix == ".svg" else None)
    return path


def plot_envelope(
    envelope: Envelope,
    data: TimeSeriesData,
    path,
    smoothed: Envelope | None = None,
    title: str | None = None,
) -> Path:
    """Observed series, simulated band and mean prediction, with a rule at t0."""
    fig = Figure(figsize=(7, 4))
    ax = fig.add_subplot()
    ax.fill_between(
        envelope.times,
        envelope.lower,
        envelope.upper,
        color=BAND_COLOR,
        alpha=0.6,
        linewidth=0,
        label=f"{100 * (1 - envelope.alpha):g}% envelope",
    )
    ax.plot(envelope.times, envelope.mean_prediction, color="#3182bd", linestyle="--", label="mean prediction")
    if smoothed is not None:
        ax.fill_between(
            smoothed.times, smoothed.lower, smoothed.upper, color=SMOOTH_BAND_COLOR, alpha=0.5, linewidth=0,
            label="smoothed envelope",
        )
        ax.plot(smoothed.times, smoothed.observed, color="#d62728", label="smoothed observed")
    horizon = envelope.times[-1]
    keep = data.times <= horizon
    ax.plot(data.times[keep], data.outcome[keep], color="black", marker="o", markersize=2.5, linewidth=1, label="observed")
    ax.axvline(data.t0 + 0.5, color="grey", linewidth=1)
    ax.set_xlabel("month")
    ax.set_ylabel(data.outcome_name)
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8, frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def plot_widths(widths, path, first_horizon: int = 1, title: str | None = None) -> Path:
    """Mean envelope width against months since t0."""
    fig = Figure(figsize=(5, 3.5))
    ax = fig.add_subplot()
    h = range(first_horizon, first_horizon + len(widths))
    ax.plot(list(h), widths, marker="o", color="black")
    ax.set_xlabel("months after t0")
    ax.set_ylabel("mean envelope width")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)

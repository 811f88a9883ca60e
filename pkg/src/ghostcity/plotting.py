"""PNG figures for the report stages.

PNGs are written without the software/version text chunk so repeated runs
give identical bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}
DAY_NAMES = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)


def plot_daily(series: dict, path, title: str = "Population (normalised)"):
    """One line per region; ``series`` maps a label to a DaySeries."""
    fig, ax = plt.subplots(figsize=(9, 3.5))
    for label, s in series.items():
        ax.plot(np.arange(len(s)), s.values, lw=1.2, label=label)
        ticks = np.arange(0, len(s), max(1, len(s) // 8))
        ax.set_xticks(ticks, [s.dates[k].isoformat() for k in ticks], rotation=30, ha="right", fontsize=7)
    ax.set_title(title)
    if series:
        ax.legend(fontsize=8)
    _save(fig, path)


def plot_hourly(profiles: dict, path):
    fig, ax = plt.subplots(figsize=(9, 3))
    for label, p in profiles.items():
        ax.plot(np.arange(168), p.values, lw=1.2, label=label)
    ax.set_xticks(np.arange(0, 168, 24), DAY_NAMES)
    ax.set_xlim(0, 167)
    ax.set_ylabel("distinct users")
    if profiles:
        ax.legend(fontsize=8)
    _save(fig, path)


def plot_flows(inflow, outflow, path, title: str):
    fig, ax = plt.subplots(figsize=(9, 3))
    x = np.arange(len(inflow))
    ax.plot(x, inflow.values, lw=1.2, color="tab:red", label="inflow")
    ax.plot(x, outflow.values, lw=1.2, color="tab:blue", label="outflow")
    if len(inflow):
        ticks = np.arange(0, len(inflow), max(1, len(inflow) // 8))
        ax.set_xticks(ticks, [inflow.dates[k].isoformat() for k in ticks], rotation=30, ha="right", fontsize=7)
    ax.set_title(title)
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_ranking(ranking, names: dict, path, ylabel: str, top: int = 20):
    fig, ax = plt.subplots(figsize=(8, 3.5))
    rows = list(ranking)[:top]
    ax.bar(np.arange(len(rows)), [v for _, v in rows], color="tab:red")
    ax.set_xticks(np.arange(len(rows)), [names.get(r, r) for r, _ in rows], rotation=45, ha="right", fontsize=7)
    ax.set_ylabel(ylabel)
    _save(fig, path)


def save_rgb(img: np.ndarray, path):
    """Write an ``(h, w, 3)`` uint8 image as PNG."""
    plt.imsave(path, img, metadata=_META)

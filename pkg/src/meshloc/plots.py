"""Matplotlib renderings of the evaluation reports.

Every function takes the same rows that are written to CSV and saves one
PNG.  The Agg backend is forced so figures render headless.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import BUCKETS, PersistenceMatrix, empirical_cdf  # noqa: E402
from .trace import DAY_NAMES  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": (6.4, 3.6),
    "savefig.dpi": 120,
}

BUCKET_LABELS = ("0%", "<=25%", "<=50%", "<=75%", "<=100%")


def _day_name(day: int) -> str:
    return DAY_NAMES[day] if day < len(DAY_NAMES) else f"d{day}"


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def weekly_histogram(rows: Sequence[Mapping], path: Path, title: str = "") -> Path:
    """Stacked bars of node shares per error bucket, active-node count on a twin axis."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        weeks = [r["week"] for r in rows]
        bottom = np.zeros(len(rows))
        colors = plt.cm.RdYlGn_r(np.linspace(0.1, 0.9, len(BUCKETS)))
        for bucket, label, color in zip(BUCKETS, BUCKET_LABELS, colors):
            vals = np.array([r[bucket] for r in rows], dtype=float)
            ax.bar(weeks, vals, bottom=bottom, color=color, label=label, width=0.85)
            bottom += vals
        ax.set_xlabel("week")
        ax.set_ylabel("proportion of nodes")
        ax.set_ylim(0, 1)
        if rows:
            twin = ax.twinx()
            twin.plot(weeks, [r["active_nodes"] for r in rows], color="k", lw=1)
            twin.set_ylabel("active nodes")
        ax.legend(loc="lower left", ncol=len(BUCKETS), frameon=False)
        if title:
            ax.set_title(title)
        return _save(fig, path)


def history_sweep(sweep: Mapping[int, Mapping[int, float]], path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for length, series in sorted(sweep.items()):
            weeks = sorted(series)
            ax.plot(weeks, [series[w] for w in weeks], marker=".", lw=1, label=f"{length} week(s)")
        ax.set_xlabel("week")
        ax.set_ylabel("nodes with error <= 50%")
        ax.set_ylim(0, 1.02)
        ax.legend(frameon=False)
        return _save(fig, path)


def per_day(series: Mapping[int, Mapping[int, float]], path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        weeks = sorted(series)
        days = sorted({d for w in weeks for d in series[w]})
        for day in days:
            pts = [(w, series[w][day]) for w in weeks if day in series[w]]
            if pts:
                ax.plot(*zip(*pts), lw=1, marker=".", label=_day_name(day))
        ax.set_xlabel("week")
        ax.set_ylabel("nodes with error <= 50%")
        ax.set_ylim(0, 1.02)
        ax.legend(frameon=False, ncol=len(days) or 1)
        return _save(fig, path)


def prevalence(matrix: PersistenceMatrix, path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for day in range(matrix.days):
            ys = [matrix.percentage(day, s) for s in range(matrix.slots)]
            ys = [np.nan if y is None else y for y in ys]
            ax.plot(range(matrix.slots), ys, lw=1, label=_day_name(day))
        ax.set_xlabel("slot of day")
        ax.set_ylabel("same prevalent cluster as week before (%)")
        ax.set_ylim(0, 101)
        ax.legend(frameon=False, ncol=matrix.days)
        return _save(fig, path)


def cdf_by_day(gaps: Mapping[int, Sequence[float]], path: Path, xlabel: str) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for day, values in sorted(gaps.items()):
            if not values:
                continue
            pts = empirical_cdf(values)
            ax.step([p[0] for p in pts], [p[1] for p in pts], where="post", lw=1, label=_day_name(day))
        ax.set_xlabel(xlabel)
        ax.set_ylabel("CDF")
        ax.set_ylim(0, 1.02)
        ax.legend(frameon=False)
        return _save(fig, path)


def clustering_levels(gathering: Sequence[float], completeness: Sequence[float], path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for values, label in ((gathering, "gathering level"), (completeness, "completeness level")):
            if values:
                pts = empirical_cdf(values)
                ax.step([p[0] for p in pts], [p[1] for p in pts], where="post", label=label)
        ax.set_xlabel("ratio")
        ax.set_ylabel("CDF of nodes")
        ax.set_xlim(0, 1.02)
        ax.set_ylim(0, 1.02)
        ax.legend(frameon=False)
        return _save(fig, path)

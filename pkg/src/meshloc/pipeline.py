"""End-to-end study: cluster, generate agendas, judge, and write reports.

Everything lands under one run directory: CSV tables, JSON exports, PNG
figures and a manifest with the configuration and input digests.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import __version__
from . import plots
from .agenda import GridConfig
from .clustering import cluster_sessions, completeness_level, gathering_level
from .config import RunConfig
from .errors import MeshlocError
from .evaluation import (
    BUCKETS,
    Relaxation,
    clip_sessions,
    collect_reports,
    empirical_cdf,
    evaluate_all,
    history_sweep,
    nonactivity_gaps,
    per_day_accuracy,
    prevalence_persistence,
    weekly_summary,
)
from .trace import DAY_NAMES, Session, TraceConfig, import_dartmouth, read_trace, sessionize_all, trace_span

log = logging.getLogger(__name__)


class EmptyStudyWindow(MeshlocError):
    pass


def load_sessions(path: str | Path, cfg: TraceConfig = TraceConfig(),
                  strict: bool = True) -> dict[str, list[Session]]:
    """Sessions per node from a canonical CSV/directory or a Dartmouth ``*.mv`` directory."""
    path = Path(path)
    if path.is_dir() and any(path.glob("*.mv")):
        records = import_dartmouth(path, strict=strict)
    else:
        records = read_trace(path, strict=strict)
    return sessionize_all(records, cfg)


def file_digest(path: Path) -> str:
    h = hashlib.sha256()
    paths = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
    for p in paths:
        h.update(p.name.encode())
        with p.open("rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    return h.hexdigest()


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else (round(v, 6) if isinstance(v, float) else v) for v in row])
    return path


def study_weeks(rc: RunConfig, sessions_by_node: Mapping[str, Sequence[Session]]) -> tuple[int, int]:
    grid = rc.grid()
    span = trace_span({n: list(s) for n, s in sessions_by_node.items()})
    lo = rc.from_ts if rc.from_ts is not None else (span[0] if span else None)
    hi = rc.to_ts if rc.to_ts is not None else (span[1] if span else None)
    if lo is None or hi is None or hi <= lo:
        raise EmptyStudyWindow("empty study window")
    first, last = grid.week_of(lo), grid.week_of(hi - 1) + 1
    window = (grid.cycle_start(first), grid.cycle_start(last))
    if not any(clip_sessions(s, *window) for s in sessions_by_node.values()):
        raise EmptyStudyWindow("no activity inside the study window")
    return first, last


def run_digest(rc: RunConfig, input_digests: Mapping[str, str]) -> str:
    blob = json.dumps({"config": rc.as_dict(), "inputs": dict(input_digests)}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def clustering_outputs(sessions_by_node, grid: GridConfig, first: int, last: int, rc: RunConfig,
                       out: Path) -> list[tuple[str, float, float, int, int]]:
    window = (grid.cycle_start(first), grid.cycle_start(last))
    rows = []
    cdir = out / "clusterings"
    cdir.mkdir(parents=True, exist_ok=True)
    for node, sess in sorted(sessions_by_node.items()):
        clipped = clip_sessions(sess, *window)
        if not clipped:
            continue
        c = cluster_sessions(clipped, rc.cluster_threshold, enabled=rc.clustering, fixpoint=rc.fixpoint)
        (cdir / f"{node}.json").write_text(json.dumps(c.to_json(node), sort_keys=True))
        rows.append((node, gathering_level(c), completeness_level(c), len(c.clusters), len(c.aps)))
    return rows


def run_pipeline(sessions_by_node: Mapping[str, Sequence[Session]], rc: RunConfig, out: Path,
                 input_digests: Mapping[str, str] | None = None) -> dict:
    """Run the whole study and write every report under ``out``."""
    input_digests = dict(input_digests or {})
    first, last = study_weeks(rc, sessions_by_node)
    grid = rc.grid()
    out.mkdir(parents=True, exist_ok=True)
    figs = out / "figures"
    written: list[Path] = []
    summary: dict = {"first_week": first, "last_week": last, "nodes": len(sessions_by_node)}

    # clustering over the whole window
    levels = clustering_outputs(sessions_by_node, grid, first, last, rc, out)
    written.append(write_csv(out / "clustering_levels.csv",
                             ["node_id", "gathering", "completeness", "clusters", "visited_aps"], levels))
    if rc.figures and levels:
        written.append(plots.clustering_levels([r[1] for r in levels], [r[2] for r in levels],
                                               figs / "clustering_levels.png"))
    if levels:
        g = [r[1] for r in levels]
        summary["gathering_eq_1"] = sum(v == 1.0 for v in g) / len(g)
        summary["gathering_in_half_open"] = sum(0.5 < v < 1.0 for v in g) / len(g)

    # agendas and error rates for the primary history length
    ecfg = rc.evaluation()
    evals = evaluate_all(sessions_by_node, grid, first, last, ecfg)
    adir = out / "agendas"
    adir.mkdir(exist_ok=True)
    for node, ev in evals.items():
        if ev.last_agenda is not None:
            (adir / f"{node}.json").write_text(json.dumps(ev.last_agenda.to_json(), sort_keys=True))

    for relax in ecfg.relaxations:
        reports = collect_reports(evals, relax)
        written.append(write_csv(out / f"a_er_{relax.value}.csv",
                                 ["node_id", "week", "total_slots", "bad", "a_er"],
                                 [(r.node_id, r.week, r.total_slots, r.bad, r.a_er) for r in reports]))
        rows = weekly_summary(reports)
        written.append(write_csv(out / f"histogram_{relax.value}.csv",
                                 ["week", "active_nodes", *BUCKETS, "le50"],
                                 [(r["week"], r["active_nodes"], *(r[b] for b in BUCKETS), r["le50"])
                                  for r in rows]))
        if rows:
            summary[f"mean_le50_{relax.value}"] = sum(r["le50"] for r in rows) / len(rows)
            summary[f"weekly_le50_{relax.value}"] = {r["week"]: r["le50"] for r in rows}
        if rc.figures and rows:
            written.append(plots.weekly_histogram(rows, figs / f"histogram_{relax.value}.png"))

    days = per_day_accuracy(evals)
    written.append(write_csv(out / "per_day.csv", ["week", *[DAY_NAMES[d] if d < 7 else f"d{d}"
                                                             for d in range(grid.days)]],
                             [(w, *(days[w].get(d) for d in range(grid.days))) for w in sorted(days)]))
    if rc.figures and days:
        written.append(plots.per_day(days, figs / "per_day.png"))

    # history-length sweep
    primary = rc.history[0]
    sweep = {primary: {r["week"]: r["le50"] for r in weekly_summary(collect_reports(evals))}}
    others = [h for h in rc.history if h != primary]
    if others:
        sweep.update(history_sweep(sessions_by_node, grid, others, first, last, ecfg))
    weeks = sorted({w for s in sweep.values() for w in s})
    written.append(write_csv(out / "history_sweep.csv", ["week", *[f"history_{h}" for h in rc.history]],
                             [(w, *(sweep[h].get(w) for h in rc.history)) for w in weeks]))
    if rc.figures and weeks:
        written.append(plots.history_sweep(sweep, figs / "history_sweep.png"))

    # raw-behavior persistence
    if last - first >= 2:
        prev = prevalence_persistence(sessions_by_node, grid, range(first, last), rc.cluster_threshold)
        written.append(write_csv(out / "prevalence.csv", ["day", *[f"slot_{j}" for j in range(grid.slots)]],
                                 [(DAY_NAMES[d] if d < 7 else d,
                                   *(prev.percentage(d, j) for j in range(grid.slots)))
                                  for d in range(grid.days)]))
        written.append(write_csv(out / "prevalence_counts.csv", ["day", *[f"slot_{j}" for j in range(grid.slots)]],
                                 [(DAY_NAMES[d] if d < 7 else d, *prev.eligible[d]) for d in range(grid.days)]))
        if rc.figures:
            written.append(plots.prevalence(prev, figs / "prevalence.png"))
    if last - first >= 4:
        gaps = nonactivity_gaps(sessions_by_node, grid, first, 4)
        rows = [(DAY_NAMES[d] if d < 7 else d, x, p) for d in sorted(gaps) for x, p in empirical_cdf(gaps[d])]
        written.append(write_csv(out / "nonactivity_cdf.csv", ["day", "gap_hours", "cdf"], rows))
        if rc.figures:
            written.append(plots.cdf_by_day(gaps, figs / "nonactivity_cdf.png", "longest inactive stretch (h)"))

    manifest = {
        "version": __version__,
        "config": rc.as_dict(),
        "inputs": input_digests,
        "study_weeks": [first, last],
        "outputs": sorted(str(p.relative_to(out)) for p in written),
        "summary": {k: v for k, v in summary.items() if not isinstance(v, dict)},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=str))
    return summary


def relaxation_gain(summary: Mapping) -> float | None:
    a = summary.get(f"weekly_le50_{Relaxation.EXACT.value}")
    b = summary.get(f"weekly_le50_{Relaxation.ONE_HOP.value}")
    if not a or not b:
        return None
    weeks = sorted(set(a) & set(b))
    return sum(b[w] - a[w] for w in weeks) / len(weeks) if weeks else None

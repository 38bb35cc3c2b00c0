"""Command-line front end: ``meshloc <subcommand> [options]``.

Exit codes: 0 success, 2 usage / input errors, 3 empty study window.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import networkx as nx

from . import __version__
from .clustering import cluster_sessions, completeness_level, gathering_level
from .config import RunConfig, apply, load_config, load_synthetic
from .errors import MalformedLine, MeshlocError, WorkloadOutOfRange
from .evaluation import clip_sessions
from .location_service import ServiceConfig, read_workload, run_simulation
from .pipeline import (
    EmptyStudyWindow,
    file_digest,
    load_sessions,
    run_digest,
    run_pipeline,
    study_weeks,
    write_csv,
)
from .planner import NodePlanner
from .trace import (
    group_by_node,
    import_dartmouth,
    read_trace,
    sessionize_all,
    write_records,
)

log = logging.getLogger("meshloc")

EXIT_USAGE = 2
EXIT_EMPTY_WINDOW = 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE) -> None:
        super().__init__(message)
        self.code = code


def _add_common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration")
    g.add_argument("--config", help="key=value configuration file (default: $MESHLOC_CONFIG)")
    g.add_argument("--days", type=int, help="days per cycle (7)")
    g.add_argument("--slots-per-day", type=int, help="slots per day (24)")
    g.add_argument("--cluster-threshold", "--k", dest="cluster_threshold", type=float,
                   help="clustering threshold k in [0,1] (0.5)")
    g.add_argument("--history", help="history length(s) in weeks, comma separated (2)")
    g.add_argument("--relaxation", choices=["exact", "one_hop", "both"])
    g.add_argument("--inactivity-cycles", type=int, help="idle cycles before re-bootstrap (2)")
    g.add_argument("--inactivity-timeout", type=int, help="seconds of silence closing a session (1200)")
    g.add_argument("--validity-weeks", type=int)
    g.add_argument("--week-anchor", type=int, help="epoch second of a Monday 00:00")
    g.add_argument("--timezone-offset", type=int)
    g.add_argument("--from", dest="from_ts", type=int, help="study window start (epoch s)")
    g.add_argument("--to", dest="to_ts", type=int, help="study window end (epoch s)")
    g.add_argument("--fixpoint", action="store_const", const=True, default=None,
                   help="re-examine rejected links until no merge happens")
    g.add_argument("--no-clustering", dest="clustering", action="store_const", const=False, default=None,
                   help="treat every AP as its own cluster")
    g.add_argument("--judge-with", choices=["snapshot", "current"])
    g.add_argument("--seed", type=int)
    g.add_argument("--no-figures", dest="figures", action="store_const", const=False, default=None)
    g.add_argument("--lenient", action="store_true", help="skip malformed trace lines instead of failing")


_CONFIG_KEYS = ("days", "slots_per_day", "cluster_threshold", "history", "relaxation", "inactivity_cycles",
                "inactivity_timeout", "validity_weeks", "week_anchor", "timezone_offset", "from_ts",
                "to_ts", "fixpoint", "clustering", "judge_with", "seed", "figures")


def resolve_config(args: argparse.Namespace) -> RunConfig:
    rc = load_config(getattr(args, "config", None))
    apply(rc, {k: getattr(args, k, None) for k in _CONFIG_KEYS})
    if not 0.0 <= rc.cluster_threshold <= 1.0:
        raise CliError(f"cluster threshold {rc.cluster_threshold} outside [0,1]")
    if not rc.history or min(rc.history) < 1:
        raise CliError("history lengths must be >= 1 week")
    return rc


def _sessions(args, rc: RunConfig):
    path = Path(args.traces)
    if not path.exists():
        raise CliError(f"no such trace path: {path}")
    return load_sessions(path, rc.trace(), strict=not args.lenient)


# --------------------------------------------------------------------------
# subcommands


def cmd_ingest(args: argparse.Namespace) -> int:
    rc = resolve_config(args)
    errors: list[MalformedLine] = []
    if args.dartmouth:
        src = Path(args.dartmouth)
        if not src.is_dir():
            raise CliError(f"not a directory: {src}")
        records = import_dartmouth(src, strict=not args.lenient, errors=errors)
    elif args.csv:
        src = Path(args.csv)
        if not src.exists():
            raise CliError(f"no such file: {src}")
        records = read_trace(src, strict=not args.lenient, errors=errors)
    else:
        raise CliError("ingest needs --dartmouth DIR or --csv FILE")
    sessions = sessionize_all(records, rc.trace())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for node, recs in group_by_node(records).items():
            with (out / f"{node}.csv").open("w") as fh:
                write_records(sorted(recs, key=lambda r: r.timestamp), fh)
    n_sessions = sum(len(s) for s in sessions.values())
    print(f"records={len(records)} nodes={len(sessions)} sessions={n_sessions} skipped_lines={len(errors)}")
    return 0


def cmd_cluster(args: argparse.Namespace) -> int:
    rc = resolve_config(args)
    sessions = _sessions(args, rc)
    grid = rc.grid()
    first, last = study_weeks(rc, sessions)
    window = (grid.cycle_start(first), grid.cycle_start(last))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for node, sess in sorted(sessions.items()):
        clipped = clip_sessions(sess, *window)
        if not clipped:
            continue
        c = cluster_sessions(clipped, rc.cluster_threshold, enabled=rc.clustering, fixpoint=rc.fixpoint)
        (out / f"{node}.json").write_text(json.dumps(c.to_json(node), sort_keys=True, indent=1))
        rows.append((node, gathering_level(c), completeness_level(c), len(c.clusters), len(c.aps)))
    write_csv(out / "clustering_levels.csv", ["node_id", "gathering", "completeness", "clusters", "visited_aps"],
              rows)
    print(f"clustered {len(rows)} nodes into {out}")
    return 0


def cmd_agenda(args: argparse.Namespace) -> int:
    rc = resolve_config(args)
    sessions = _sessions(args, rc)
    grid = rc.grid()
    first, last = study_weeks(rc, sessions)
    week = args.week if args.week is not None else last
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = 0
    for node, sess in sorted(sessions.items()):
        planner = NodePlanner(node, sess, grid, k=rc.cluster_threshold, clustering_enabled=rc.clustering,
                              fixpoint=rc.fixpoint, inactivity_cycles=rc.inactivity_cycles)
        held = None
        for plan in planner.plan(min(first, week), week + 1, rc.history[0]):
            held = plan.bootstrap or plan.agenda
        if held is None:
            continue
        (out / f"{node}.json").write_text(json.dumps(held.to_json(), sort_keys=True))
        written += 1
    print(f"wrote {written} agendas for week {week} into {out}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    rc = resolve_config(args)
    rc.figures = False
    sessions = _sessions(args, rc)
    summary = run_pipeline(sessions, rc, Path(args.out), {str(args.traces): file_digest(Path(args.traces))})
    _print_summary(summary)
    return 0


def _print_summary(summary: dict) -> None:
    for key in sorted(summary):
        if not isinstance(summary[key], dict):
            print(f"{key}={summary[key]}")


def cmd_run(args: argparse.Namespace) -> int:
    rc = resolve_config(args)
    if args.synthetic:
        records = load_synthetic(args.synthetic, rc.trace())
        sessions = sessionize_all(records, rc.trace())
        inputs = {str(args.synthetic): file_digest(Path(args.synthetic))}
    elif args.traces:
        sessions = _sessions(args, rc)
        inputs = {str(args.traces): file_digest(Path(args.traces))}
    else:
        raise CliError("run needs --traces PATH or --synthetic FILE")
    out = Path(args.out) / f"run-{run_digest(rc, inputs)}"
    summary = run_pipeline(sessions, rc, out, inputs)
    _print_summary(summary)
    print(f"outputs in {out}")
    return 0


def _read_topology(path: Path) -> nx.Graph:
    g = nx.Graph()
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        a, b = [x.strip() for x in line.split(",")[:2]]
        g.add_edge(a, b)
    return g


def cmd_simulate(args: argparse.Namespace) -> int:
    rc = resolve_config(args)
    sessions = _sessions(args, rc)
    workload = []
    if args.workload:
        try:
            workload = read_workload(Path(args.workload).read_text().splitlines())
        except (OSError, ValueError) as exc:
            raise CliError(f"invalid workload: {exc}") from exc
    if rc.from_ts is not None or rc.to_ts is not None:
        lo = rc.from_ts if rc.from_ts is not None else 0
        hi = rc.to_ts if rc.to_ts is not None else 2**62
        sessions = {n: clip_sessions(s, lo, hi) for n, s in sessions.items()}
    topology = _read_topology(Path(args.topology)) if args.topology else None
    scfg = ServiceConfig(k=rc.cluster_threshold, clustering_enabled=rc.clustering, fixpoint=rc.fixpoint,
                         history_weeks=rc.history[0], inactivity_cycles=rc.inactivity_cycles)
    try:
        result = run_simulation(sessions, rc.grid(), scfg, workload, topology=topology)
    except WorkloadOutOfRange as exc:
        raise CliError(str(exc)) from exc
    report = result.to_json()
    report["config"] = rc.as_dict()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2, sort_keys=True))
    if args.lookups_csv:
        write_csv(Path(args.lookups_csv), ["time", "source", "target", "outcome", "true_ap"],
                  [(r.time, r.source, r.target, r.outcome, r.true_ap) for r in result.lookups])
    counts = report["messages"]["counts"]
    print(" ".join(f"{k}={v}" for k, v in counts.items()), f"lookups={report['lookups']}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    rc = resolve_config(args)
    if not Path(args.pattern).exists():
        raise CliError(f"no such file: {args.pattern}")
    records = load_synthetic(args.pattern, rc.trace())
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w") as fh:
        write_records(records, fh)
    print(f"records={len(records)} -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meshloc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert Dartmouth movement files or validate a canonical CSV")
    p.add_argument("--dartmouth", help="directory of <node>.mv files")
    p.add_argument("--csv", help="canonical node_id,timestamp,ap_id file")
    p.add_argument("--out", help="write one canonical CSV per node here")
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("cluster", help="per-node AP clustering exports")
    p.add_argument("--traces", required=True)
    p.add_argument("--out", default="clusterings")
    _add_common(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("agenda", help="agenda held by every node in a given week")
    p.add_argument("--traces", required=True)
    p.add_argument("--week", type=int, help="cycle index from the week anchor (default: after the trace)")
    p.add_argument("--out", default="agendas")
    _add_common(p)
    p.set_defaults(func=cmd_agenda)

    p = sub.add_parser("evaluate", help="prediction error reports (CSV only)")
    p.add_argument("--traces", required=True)
    p.add_argument("--out", default="reports")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="full study into a run-stamped directory, with figures")
    p.add_argument("--traces")
    p.add_argument("--synthetic", help="TOML description of a synthetic cohort")
    p.add_argument("--out", default="runs")
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("simulate", help="replay the location service over a trace")
    p.add_argument("--traces", required=True)
    p.add_argument("--workload", help="CSV time,source_node,target_node")
    p.add_argument("--topology", help="CSV edge list ap_id,ap_id for hop counts")
    p.add_argument("--out", default="report.json")
    p.add_argument("--lookups-csv", help="also write per-lookup outcomes here")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("synth", help="generate a synthetic trace from a TOML pattern")
    p.add_argument("pattern")
    p.add_argument("--out", default="synthetic.csv")
    _add_common(p)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"meshloc: error: {exc}", file=sys.stderr)
        return exc.code
    except EmptyStudyWindow as exc:
        print(f"meshloc: error: {exc}", file=sys.stderr)
        return EXIT_EMPTY_WINDOW
    except (MeshlocError, ValueError, OSError) as exc:
        print(f"meshloc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

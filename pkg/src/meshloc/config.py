"""Run configuration: defaults, ``key=value`` files and synthetic cohorts."""

from __future__ import annotations

import dataclasses
import os
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .agenda import GridConfig
from .evaluation import EvalConfig, Relaxation
from .trace import (
    DEFAULT_INACTIVITY_TIMEOUT,
    DEFAULT_WEEK_ANCHOR,
    PatternEntry,
    RawRecord,
    TraceConfig,
    WeeklyPattern,
    generate_synthetic,
)

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

CONFIG_ENV = "MESHLOC_CONFIG"

# End of 2004-02-29, the last day of the reference study window.
DEFAULT_STUDY_END = 1078117200


@dataclass
class RunConfig:
    days: int = 7
    slots_per_day: int = 24
    cluster_threshold: float = 0.5
    history: list[int] = field(default_factory=lambda: [2])
    relaxation: str = "both"
    inactivity_cycles: int = 2
    inactivity_timeout: int = DEFAULT_INACTIVITY_TIMEOUT
    validity_weeks: int = 1
    week_anchor: int = DEFAULT_WEEK_ANCHOR
    timezone_offset: int = 0
    from_ts: int | None = None
    to_ts: int | None = None
    fixpoint: bool = False
    clustering: bool = True
    judge_with: str = "snapshot"
    seed: int = 0
    output: str = "runs"
    figures: bool = True

    def grid(self, history_weeks: int | None = None) -> GridConfig:
        span = history_weeks if history_weeks is not None else self.history[0]
        return GridConfig(self.days, self.slots_per_day, max(span - 1, 0), self.validity_weeks,
                          self.week_anchor + self.timezone_offset)

    def trace(self) -> TraceConfig:
        return TraceConfig(self.inactivity_timeout, self.week_anchor, self.timezone_offset)

    def relaxations(self) -> tuple[Relaxation, ...]:
        if self.relaxation == "both":
            return (Relaxation.EXACT, Relaxation.ONE_HOP)
        return (Relaxation(self.relaxation),)

    def evaluation(self, history_weeks: int | None = None) -> EvalConfig:
        return EvalConfig(
            history_weeks=history_weeks if history_weeks is not None else self.history[0],
            k=self.cluster_threshold,
            inactivity_cycles=self.inactivity_cycles,
            relaxations=self.relaxations(),
            clustering_enabled=self.clustering,
            fixpoint=self.fixpoint,
            judge_with=self.judge_with,
        )

    def as_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


_ALIASES = {
    "k": "cluster_threshold",
    "slots": "slots_per_day",
    "from": "from_ts",
    "to": "to_ts",
    "history_weeks": "history",
}


def _coerce(name: str, raw: str) -> Any:
    f = {f.name: f for f in dataclasses.fields(RunConfig)}[name]
    kind = str(f.type)
    if name == "history":
        return [int(x) for x in str(raw).split(",") if x.strip()]
    if "bool" in kind:
        return str(raw).strip().lower() in ("1", "true", "yes", "on")
    if "float" in kind:
        return float(raw)
    if "int" in kind:
        if raw in ("", "none", "None", None):
            return None
        return int(raw)
    return str(raw)


def apply(cfg: RunConfig, values: dict[str, Any]) -> RunConfig:
    names = {f.name for f in dataclasses.fields(RunConfig)}
    for key, raw in values.items():
        if raw is None:
            continue
        name = key.strip().replace("-", "_")
        name = _ALIASES.get(name, name)
        if name not in names:
            raise ValueError(f"unknown configuration key {key!r}")
        setattr(cfg, name, _coerce(name, raw) if isinstance(raw, str) else raw)
    return cfg


def parse_config_text(text: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path: str | Path | None = None) -> RunConfig:
    """Defaults, overlaid with ``path`` or the file named by ``$MESHLOC_CONFIG``."""
    cfg = RunConfig()
    path = path or os.environ.get(CONFIG_ENV)
    if path:
        apply(cfg, parse_config_text(Path(path).read_text()))
    return cfg


# --------------------------------------------------------------------------
# synthetic cohorts


def random_pattern(rng: random.Random, aps: list[str], days: int = 7,
                   idle_prob: float = 0.3, max_block: int = 6) -> WeeklyPattern:
    """Whole-hour blocks on random APs, some of them idle."""
    entries = []
    for day in range(days):
        hour = 0
        while hour < 24:
            length = min(rng.randint(1, max_block), 24 - hour)
            if rng.random() >= idle_prob:
                entries.append(PatternEntry(day, hour, hour + length, rng.choice(aps)))
            hour += length
    return WeeklyPattern(entries, days)


def synthetic_cohort(spec: dict[str, Any], trace_cfg: TraceConfig = TraceConfig()) -> list[RawRecord]:
    """Records for a cohort described by a TOML-style mapping.

    Keys: ``nodes``, ``weeks``, ``seed``, ``jitter``, ``dwell_jitter``,
    ``first_week``, and either ``entries`` (one shared pattern, AP names may
    use ``{i}`` for the node index) or ``random = true`` with ``aps``.
    """
    nodes = int(spec.get("nodes", 1))
    weeks = int(spec.get("weeks", 4))
    seed = int(spec.get("seed", 0))
    jitter = int(spec.get("jitter", 0))
    dwell_jitter = int(spec.get("dwell_jitter", 0))
    first_week = int(spec.get("first_week", 0))
    days = int(spec.get("days_per_cycle", 7))
    rng = random.Random(seed)
    records: list[RawRecord] = []
    for i in range(nodes):
        node = f"{spec.get('prefix', 'n')}{i:03d}"
        if spec.get("random"):
            pool = [str(ap).format(i=i) for ap in spec.get("aps", ["A", "B", "C", "D"])]
            pattern = random_pattern(rng, pool, days, float(spec.get("idle_prob", 0.3)))
        else:
            raw_entries = []
            for e in spec.get("entries", []):
                e = dict(e)
                e["ap"] = str(e["ap"]).format(i=i)
                if e.get("pingpong"):
                    e["pingpong"] = str(e["pingpong"]).format(i=i)
                if isinstance(e["day"], str) and e["day"].lower() in ("all", "*"):
                    raw_entries.extend({**e, "day": d} for d in range(days))
                elif isinstance(e["day"], str) and e["day"].lower() == "weekdays":
                    raw_entries.extend({**e, "day": d} for d in range(min(5, days)))
                else:
                    raw_entries.append(e)
            pattern = WeeklyPattern.from_dict({"entries": raw_entries, "days_per_cycle": days})
        records.extend(generate_synthetic(pattern, weeks, jitter, seed * 1000003 + i, node,
                                          trace_cfg, first_week=first_week, dwell_jitter=dwell_jitter))
    return records


def load_synthetic(path: str | Path, trace_cfg: TraceConfig = TraceConfig()) -> list[RawRecord]:
    with open(path, "rb") as fh:
        spec = tomllib.load(fh)
    return synthetic_cohort(spec, trace_cfg)


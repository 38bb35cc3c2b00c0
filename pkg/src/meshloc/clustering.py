"""Per-node access-point clustering from roaming events.

Each node keeps a roaming matrix (how many times it roamed from AP ``i``
straight to AP ``j``) and a table of per-AP association statistics.  APs
linked by roaming in both directions are merged greedily, heaviest link
first, as long as the link is at least ``k`` times the heavier of the two
cluster weights.  A cluster's weight is its heaviest internal link.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import EmptyTrace, InvalidThreshold
from .trace import Session


@dataclass
class RoamingMatrix:
    counts: dict[tuple[str, str], int] = field(default_factory=dict)

    def get(self, i: str, j: str) -> int:
        return self.counts.get((i, j), 0)

    def add(self, i: str, j: str, n: int = 1) -> None:
        self.counts[(i, j)] = self.counts.get((i, j), 0) + n

    def total(self) -> int:
        return sum(self.counts.values())

    def aps(self) -> set[str]:
        return {a for pair in self.counts for a in pair}


@dataclass
class ApStat:
    total_associations: int = 0
    cumulated_duration: int = 0

    @property
    def mean_duration(self) -> float:
        if not self.total_associations:
            return 0.0
        return self.cumulated_duration / self.total_associations


ApStats = dict[str, ApStat]


def build_roaming_matrix(sessions: Sequence[Session]) -> tuple[RoamingMatrix, ApStats]:
    """Count roams between back-to-back sessions and accumulate AP statistics.

    A roam is a session starting exactly when the previous one ended; a gap
    means the node was disconnected in between.
    """
    matrix = RoamingMatrix()
    stats: ApStats = {}
    prev: Session | None = None
    for s in sorted(sessions, key=lambda s: (s.start, s.end)):
        st = stats.setdefault(s.ap_id, ApStat())
        st.total_associations += 1
        st.cumulated_duration += s.duration
        if prev is not None and prev.end == s.start and prev.ap_id != s.ap_id:
            matrix.add(prev.ap_id, s.ap_id)
        prev = s
    return matrix, stats


def link_cost(matrix: RoamingMatrix, i: str, j: str) -> int | None:
    """Cost of the link between ``i`` and ``j``, or None without roams both ways."""
    if i == j:
        raise ValueError("a link needs two distinct APs")
    rij, rji = matrix.get(i, j), matrix.get(j, i)
    if rij and rji:
        return rij + rji
    return None


def links(matrix: RoamingMatrix) -> dict[tuple[str, str], int]:
    """All links keyed by (lower AP id, higher AP id)."""
    out: dict[tuple[str, str], int] = {}
    for (i, j) in matrix.counts:
        if i == j:
            continue
        key = (i, j) if i < j else (j, i)
        if key in out:
            continue
        cost = link_cost(matrix, *key)
        if cost is not None:
            out[key] = cost
    return out


@dataclass(frozen=True)
class Cluster:
    id: int
    members: frozenset[str]
    weight: int
    locator: str


@dataclass(frozen=True)
class MergeRecord:
    a: str
    b: str
    cost: int
    weight_a: int
    weight_b: int
    k: float

    @property
    def valid(self) -> bool:
        return self.cost >= self.k * max(self.weight_a, self.weight_b)


@dataclass
class Clustering:
    clusters: list[Cluster]
    adjacency: set[tuple[int, int]]
    k: float
    merges: list[MergeRecord] = field(default_factory=list)
    snapshot: str = ""

    def __post_init__(self) -> None:
        self._by_ap = {ap: c for c in self.clusters for ap in c.members}
        self._by_id = {c.id: c for c in self.clusters}

    @property
    def aps(self) -> set[str]:
        return set(self._by_ap)

    def cluster_of(self, ap: str) -> Cluster | None:
        return self._by_ap.get(ap)

    def get(self, cluster_id: int) -> Cluster:
        return self._by_id[cluster_id]

    def neighbours(self, cluster_id: int) -> set[int]:
        out = set()
        for a, b in self.adjacency:
            if a == cluster_id:
                out.add(b)
            elif b == cluster_id:
                out.add(a)
        return out

    def to_json(self, node_id: str) -> dict:
        return {
            "node_id": node_id,
            "k": self.k,
            "clusters": [
                {"id": c.id, "members": sorted(c.members), "weight": c.weight, "locator": c.locator}
                for c in self.clusters
            ],
            "adjacency": [list(p) for p in sorted(self.adjacency)],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "Clustering":
        clusters = [
            Cluster(int(c["id"]), frozenset(c["members"]), int(c["weight"]), c["locator"])
            for c in data["clusters"]
        ]
        adjacency = {(int(a), int(b)) for a, b in data.get("adjacency", [])}
        return cls(clusters, adjacency, float(data["k"]), snapshot=data.get("snapshot", ""))


def elect_locator(members: Iterable[str], stats: Mapping[str, ApStat]) -> str:
    """Member with the longest cumulated association.

    Ties go to more associations, then to the smallest AP id.
    """
    def key(ap: str):
        st = stats.get(ap, ApStat())
        return (-st.cumulated_duration, -st.total_associations, ap)

    return min(members, key=key)


def _assemble(groups: Iterable[Iterable[str]], weights: Mapping[frozenset, int],
              link_costs: Mapping[tuple[str, str], int], stats: Mapping[str, ApStat],
              k: float, merges: list[MergeRecord]) -> Clustering:
    ordered = sorted((frozenset(g) for g in groups), key=lambda g: min(g))
    clusters = [
        Cluster(idx, members, weights.get(members, 0), elect_locator(members, stats))
        for idx, members in enumerate(ordered)
    ]
    owner = {ap: c.id for c in clusters for ap in c.members}
    adjacency = set()
    for (a, b) in link_costs:
        ca, cb = owner[a], owner[b]
        if ca != cb:
            adjacency.add((min(ca, cb), max(ca, cb)))
    return Clustering(clusters, adjacency, k, merges)


def cluster(matrix: RoamingMatrix, stats: Mapping[str, ApStat], k: float = 0.5,
            fixpoint: bool = False) -> Clustering:
    """Threshold-``k`` agglomerative clustering of the visited APs.

    Links are visited once in decreasing cost order (ties by AP id pair).  A
    link joins its two clusters when ``cost >= k * max(w_a, w_b)``; the
    merged weight is ``max(w_a, w_b, cost)``.  With ``fixpoint=True`` the
    remaining inter-cluster links are re-examined until a pass merges
    nothing.
    """
    if not 0.0 <= k <= 1.0:
        raise InvalidThreshold(f"k={k} outside [0, 1]")
    link_costs = links(matrix)
    aps = set(stats) | matrix.aps()

    parent = {ap: ap for ap in aps}
    weight = {ap: 0 for ap in aps}
    members = {ap: {ap} for ap in aps}

    def find(ap: str) -> str:
        while parent[ap] != ap:
            parent[ap] = parent[parent[ap]]
            ap = parent[ap]
        return ap

    order = sorted(link_costs.items(), key=lambda kv: (-kv[1], kv[0]))
    merges: list[MergeRecord] = []
    pending = order
    while True:
        failed = []
        merged_any = False
        for (a, b), cost in pending:
            ra, rb = find(a), find(b)
            if ra == rb:
                continue
            wa, wb = weight[ra], weight[rb]
            if cost >= k * max(wa, wb):
                merges.append(MergeRecord(a, b, cost, wa, wb, k))
                if len(members[ra]) < len(members[rb]):
                    ra, rb = rb, ra
                parent[rb] = ra
                members[ra] |= members.pop(rb)
                weight[ra] = max(wa, wb, cost)
                merged_any = True
            else:
                failed.append(((a, b), cost))
        if not fixpoint or not merged_any or not failed:
            break
        pending = failed

    roots = {find(ap) for ap in aps}
    groups = [members[r] for r in roots]
    weights = {frozenset(members[r]): weight[r] for r in roots}
    return _assemble(groups, weights, link_costs, stats, k, merges)


def singleton_clustering(matrix: RoamingMatrix, stats: Mapping[str, ApStat],
                         k: float = 0.5) -> Clustering:
    """Every AP on its own; used to run the service with clustering disabled."""
    aps = set(stats) | matrix.aps()
    return _assemble(([ap] for ap in aps), {}, links(matrix), stats, k, [])


def cluster_sessions(sessions: Sequence[Session], k: float = 0.5, enabled: bool = True,
                     fixpoint: bool = False) -> Clustering:
    matrix, stats = build_roaming_matrix(sessions)
    if enabled:
        return cluster(matrix, stats, k, fixpoint=fixpoint)
    return singleton_clustering(matrix, stats, k)


def gathering_level(c: Clustering) -> float:
    visited = len(c.aps)
    if not visited:
        raise EmptyTrace("no visited AP")
    return len(c.clusters) / visited


def completeness_level(c: Clustering) -> float:
    n = len(c.clusters)
    if n <= 1:
        return 0.0
    return len(c.adjacency) / (n * (n - 1) / 2)

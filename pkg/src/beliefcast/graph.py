"""The belief-augmented heterogeneous social network.

Three node kinds (user, media, belief), three relations:
  follow   user -> user, directed ("u1 follows u2")
  interact user -> media, one edge per distinct train-split response pair
  belief   user -- belief, undirected
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

from .values import BELIEF_VOCABULARY, is_belief

if TYPE_CHECKING:
    from .data import Dataset
    from .persona import LatentPersona


class GraphError(ValueError):
    """Raised on referential-integrity violations or unknown symbols."""


NODE_KINDS = ("user", "media", "belief")

RELATIONS = ("follow", "interact", "belief")


@dataclass(frozen=True)
class NodeRef:
    kind: str
    key: str

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise GraphError(f"unknown node kind {self.kind!r}")


@dataclass(frozen=True)
class Ablation:
    """Switches that drop graph components or embedding inputs."""

    without_belief: bool = False
    without_user_news: bool = False
    without_profile: bool = False
    without_history: bool = False
    random_init: bool = False


def apply_ablation(options: Ablation | Mapping[str, bool] | None) -> Ablation:
    """Canonicalize ablation flags; all-false input is the identity."""
    if options is None:
        return Ablation()
    if isinstance(options, Ablation):
        return options
    unknown = set(options) - {f for f in Ablation.__dataclass_fields__}
    if unknown:
        raise GraphError(f"unknown ablation flags: {sorted(unknown)}")
    return Ablation(**{k: bool(v) for k, v in options.items()})


@dataclass(frozen=True)
class HeteroGraph:
    """Immutable graph; all node and edge tuples sorted ascending."""

    users: tuple[str, ...]
    media: tuple[str, ...]
    beliefs: tuple[str, ...]
    follow: tuple[tuple[str, str], ...]
    interact: tuple[tuple[str, str], ...]
    belief_edges: tuple[tuple[str, str], ...]

    @property
    def node_count(self) -> int:
        return len(self.users) + len(self.media) + len(self.beliefs)

    @property
    def edge_count(self) -> int:
        return len(self.follow) + len(self.interact) + len(self.belief_edges)


def _sorted_unique(pairs: Iterable[tuple[str, str]]) -> tuple[tuple[str, str], ...]:
    return tuple(sorted(set(pairs)))


def _validate(graph: HeteroGraph) -> None:
    users, media, beliefs = set(graph.users), set(graph.media), set(graph.beliefs)
    for src, dst in graph.follow:
        if src not in users or dst not in users:
            raise GraphError(f"follow edge ({src!r}, {dst!r}) has an unknown endpoint")
    for u, m in graph.interact:
        if u not in users:
            raise GraphError(f"interact edge ({u!r}, {m!r}): unknown user")
        if m not in media:
            raise GraphError(f"interact edge ({u!r}, {m!r}): unknown media")
    for u, b in graph.belief_edges:
        if u not in users:
            raise GraphError(f"belief edge ({u!r}, {b!r}): unknown user")
        if b not in beliefs:
            raise GraphError(f"belief edge ({u!r}, {b!r}): unknown belief")


def build_graph(
    dataset: "Dataset",
    personas: Iterable["LatentPersona"] = (),
    options: Ablation | None = None,
    extra_users: Iterable[str] = (),
) -> HeteroGraph:
    """Assemble the heterogeneous graph from a dataset and extracted personas.

    ``extra_users`` admits influencer ids selected outside the dataset.
    Users without a persona simply get no belief edges. Interact edges come
    from train-split responses only, so evaluation structure never leaks
    into the graph.
    """
    options = apply_ablation(options)
    users = set(dataset.users) | set(extra_users)

    follow = _sorted_unique(dataset.follows)
    for src, dst in follow:
        if src not in users or dst not in users:
            raise GraphError(f"follow edge ({src!r}, {dst!r}) references an unknown user")

    if options.without_user_news:
        interact: tuple[tuple[str, str], ...] = ()
    else:
        interact = _sorted_unique(
            (r.user_id, r.news_id) for r in dataset.responses if r.split == "train"
        )

    belief_edges: list[tuple[str, str]] = []
    if not options.without_belief:
        for persona in personas:
            if persona.user_id not in users:
                raise GraphError(f"persona references unknown user {persona.user_id!r}")
            for symbol in tuple(persona.moral_values) + tuple(persona.human_values):
                if not is_belief(symbol):
                    raise GraphError(f"unknown belief symbol {symbol!r}")
                belief_edges.append((persona.user_id, symbol))

    graph = HeteroGraph(
        users=tuple(sorted(users)),
        media=tuple(sorted(dataset.news)),
        beliefs=() if options.without_belief else BELIEF_VOCABULARY,
        follow=follow,
        interact=interact,
        belief_edges=_sorted_unique(belief_edges),
    )
    _validate(graph)
    return graph


def select_influencers(
    seed_users: Iterable[str],
    follow_edges: Sequence[tuple[str, str]],
    top_n: int,
) -> set[str]:
    """Top ``top_n`` accounts by in-degree within the given edge multiset.

    Candidates are the seed users plus every edge endpoint. Ties break by
    ascending id. A ``top_n`` larger than the pool returns the whole pool.
    """
    if top_n < 0:
        raise GraphError("top_n must be >= 0")
    indegree = Counter(dst for _, dst in follow_edges)
    pool = set(seed_users)
    for src, dst in follow_edges:
        pool.add(src)
        pool.add(dst)
    ranked = sorted(pool, key=lambda uid: (-indegree[uid], uid))
    return set(ranked[:top_n])


def neighbors(
    graph: HeteroGraph, node: NodeRef, relation: str, direction: str = "out"
) -> list[NodeRef]:
    """Neighbors of ``node`` under one relation, in ascending key order.

    Directed relations (follow, interact) honor ``direction`` ("out"/"in");
    the undirected belief relation ignores it.
    """
    if relation not in RELATIONS:
        raise GraphError(f"unknown relation {relation!r}")
    if direction not in ("out", "in"):
        raise GraphError(f"unknown direction {direction!r}")
    node_sets = {"user": graph.users, "media": graph.media, "belief": graph.beliefs}
    if node.key not in set(node_sets[node.kind]):
        raise GraphError(f"unknown node {node.kind}:{node.key}")

    out: list[NodeRef] = []
    if relation == "follow":
        for src, dst in graph.follow:
            if direction == "out" and src == node.key and node.kind == "user":
                out.append(NodeRef("user", dst))
            elif direction == "in" and dst == node.key and node.kind == "user":
                out.append(NodeRef("user", src))
    elif relation == "interact":
        for u, m in graph.interact:
            if node.kind == "user" and direction == "out" and u == node.key:
                out.append(NodeRef("media", m))
            elif node.kind == "media" and direction == "in" and m == node.key:
                out.append(NodeRef("user", u))
    else:
        for u, b in graph.belief_edges:
            if node.kind == "user" and u == node.key:
                out.append(NodeRef("belief", b))
            elif node.kind == "belief" and b == node.key:
                out.append(NodeRef("user", u))
    return sorted(out, key=lambda ref: ref.key)


def follow_adjacency(graph: HeteroGraph) -> dict[str, set[str]]:
    """Undirected adjacency over follow edges."""
    adj: dict[str, set[str]] = defaultdict(set)
    for src, dst in graph.follow:
        adj[src].add(dst)
        adj[dst].add(src)
    return adj


def undirected_follow_distances(graph: HeteroGraph, source: str) -> dict[str, int]:
    """BFS hop distances from ``source`` on the undirected follow view."""
    adj = follow_adjacency(graph)
    dist = {source: 0}
    queue = deque([source])
    while queue:
        node = queue.popleft()
        for nxt in adj[node]:
            if nxt not in dist:
                dist[nxt] = dist[node] + 1
                queue.append(nxt)
    return dist


def distant_shared_belief_ratio(graph: HeteroGraph) -> float:
    """Fraction of belief-holding users with a same-belief peer >= 2 hops away.

    Hop distance is measured on the undirected follow view only, and an
    unreachable peer counts as >= 2. Users without belief edges are outside
    the denominator; an empty denominator yields 0.
    """
    beliefs_of: dict[str, set[str]] = defaultdict(set)
    holders_of: dict[str, set[str]] = defaultdict(set)
    for u, b in graph.belief_edges:
        beliefs_of[u].add(b)
        holders_of[b].add(u)
    if not beliefs_of:
        return 0.0
    adj = follow_adjacency(graph)
    qualifying = 0
    for user, beliefs in beliefs_of.items():
        sharers: set[str] = set()
        for b in beliefs:
            sharers |= holders_of[b]
        sharers.discard(user)
        # distance >= 2 means: not the user itself and not a direct neighbor
        if sharers - adj[user]:
            qualifying += 1
    return qualifying / len(beliefs_of)


@dataclass
class GraphStats:
    node_counts: dict[str, int] = field(default_factory=dict)
    edge_counts: dict[str, int] = field(default_factory=dict)
    total_edges: int = 0
    belief_histogram: dict[str, int] = field(default_factory=dict)


def graph_stats(graph: HeteroGraph) -> GraphStats:
    """Exact node/edge counts plus distinct-user counts per belief."""
    histogram = {b: 0 for b in graph.beliefs}
    users_per_belief: dict[str, set[str]] = defaultdict(set)
    for u, b in graph.belief_edges:
        users_per_belief[b].add(u)
    for b, holders in users_per_belief.items():
        histogram[b] = len(holders)
    return GraphStats(
        node_counts={
            "user": len(graph.users),
            "media": len(graph.media),
            "belief": len(graph.beliefs),
        },
        edge_counts={
            "follow": len(graph.follow),
            "interact": len(graph.interact),
            "belief": len(graph.belief_edges),
        },
        total_edges=graph.edge_count,
        belief_histogram=histogram,
    )


# ---------------------------------------------------------------------------
# Canonical serialization (the sorted form is what idempotence checks hash)


def graph_to_json(graph: HeteroGraph) -> str:
    obj = {
        "users": sorted(graph.users),
        "media": sorted(graph.media),
        "beliefs": sorted(graph.beliefs),
        "follow": sorted(list(e) for e in graph.follow),
        "interact": sorted(list(e) for e in graph.interact),
        "belief_edges": sorted(list(e) for e in graph.belief_edges),
    }
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": ")) + "\n"


def write_graph_json(graph: HeteroGraph, path) -> None:
    Path(path).write_text(graph_to_json(graph), encoding="utf-8", newline="\n")


def read_graph_json(path) -> HeteroGraph:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        graph = HeteroGraph(
            users=tuple(sorted(obj["users"])),
            media=tuple(sorted(obj["media"])),
            beliefs=_restore_belief_order(obj["beliefs"]),
            follow=_sorted_unique((s, d) for s, d in obj["follow"]),
            interact=_sorted_unique((u, m) for u, m in obj["interact"]),
            belief_edges=_sorted_unique((u, b) for u, b in obj["belief_edges"]),
        )
    except KeyError as exc:
        raise GraphError(f"graph file {path}: missing key {exc}") from exc
    _validate(graph)
    return graph


def _restore_belief_order(symbols: Sequence[str]) -> tuple[str, ...]:
    # belief nodes keep vocabulary order in memory; the file stores them sorted
    present = set(symbols)
    for s in present:
        if not is_belief(s):
            raise GraphError(f"unknown belief symbol {s!r} in graph file")
    return tuple(b for b in BELIEF_VOCABULARY if b in present)

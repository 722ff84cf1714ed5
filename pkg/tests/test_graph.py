"""Graph construction, ablations, influencer selection, and the
distant-shared-belief statistic against an all-pairs BFS oracle."""

import itertools
from collections import deque

import numpy as np
import pytest

from beliefcast.graph import (
    Ablation,
    GraphError,
    HeteroGraph,
    NodeRef,
    apply_ablation,
    build_graph,
    distant_shared_belief_ratio,
    graph_stats,
    graph_to_json,
    neighbors,
    read_graph_json,
    select_influencers,
    write_graph_json,
)
from beliefcast.values import BELIEF_VOCABULARY

from conftest import make_dataset, persona_of


def bfs_oracle_ratio(follow_edges, beliefs_of):
    """All-pairs BFS reference for the distant-shared-belief ratio."""
    adj = {}
    for a, b in follow_edges:
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)

    def distance(src, dst):
        if src == dst:
            return 0
        seen = {src: 0}
        queue = deque([src])
        while queue:
            node = queue.popleft()
            for nxt in adj.get(node, ()):
                if nxt not in seen:
                    seen[nxt] = seen[node] + 1
                    if nxt == dst:
                        return seen[nxt]
                    queue.append(nxt)
        return None  # unreachable counts as >= 2

    holders = [u for u, bs in beliefs_of.items() if bs]
    if not holders:
        return 0.0
    count = 0
    for u in holders:
        for v in holders:
            if u == v or not (beliefs_of[u] & beliefs_of[v]):
                continue
            d = distance(u, v)
            if d is None or d >= 2:
                count += 1
                break
    return count / len(holders)


def graph_from_beliefs(follow_edges, beliefs_of):
    users = sorted(set(beliefs_of) | {x for e in follow_edges for x in e})
    return HeteroGraph(
        users=tuple(users),
        media=(),
        beliefs=BELIEF_VOCABULARY,
        follow=tuple(sorted(set(follow_edges))),
        interact=(),
        belief_edges=tuple(
            sorted((u, b) for u, bs in beliefs_of.items() for b in bs)
        ),
    )


class TestSelectInfluencers:
    def test_top_one(self):
        edges = [("a", "b"), ("c", "b"), ("a", "c")]
        assert select_influencers({"a", "b", "c"}, edges, 1) == {"b"}

    def test_top_two(self):
        edges = [("a", "b"), ("c", "b"), ("a", "c")]
        assert select_influencers({"a", "b", "c"}, edges, 2) == {"b", "c"}

    def test_tie_breaks_ascending_id(self):
        edges = [("a", "x"), ("b", "x"), ("c", "x"), ("a", "y"), ("b", "y"), ("c", "y"), ("a", "z")]
        # counts x:3 y:3 z:1 -> top_1 is x
        assert select_influencers(set("abcxyz"), edges, 1) == {"x"}

    def test_exhaustive_small_graphs_match_sort_oracle(self):
        ids = ["a", "b", "c", "d"]
        rng = np.random.default_rng(11)
        for _ in range(200) :
            n_edges = rng.integers(0, 8)
            edges = [
                (ids[rng.integers(0, 4)], ids[rng.integers(0, 4)]) for _ in range(n_edges)
            ]
            for top_n in range(0, 6):
                got = select_influencers(ids, edges, top_n)
                counts = {i: sum(1 for _, d in edges if d == i) for i in ids}
                expected = set(sorted(ids, key=lambda u: (-counts[u], u))[:top_n])
                assert got == expected

    def test_invariant_under_edge_permutation(self):
        edges = [("a", "b"), ("c", "b"), ("a", "c"), ("d", "a"), ("d", "b")]
        base = select_influencers("abcd", edges, 2)
        for perm in itertools.permutations(edges):
            assert select_influencers("abcd", list(perm), 2) == base

    def test_pool_smaller_than_top_n(self):
        assert select_influencers({"a"}, [], 10) == {"a"}


class TestBuildGraph:
    def test_minimal_world_counts(self):
        ds = make_dataset(n_users=1, n_news=1, responses=[("u0", "n0", "positive", 1, "train")])
        graph = build_graph(ds, [persona_of("u0", moral=["care"])])
        assert len(graph.users) == 1 and len(graph.media) == 1
        assert len(graph.beliefs) == 20
        assert graph.interact == (("u0", "n0"),)
        assert graph.belief_edges == (("u0", "care"),)

    def test_without_belief_drops_nodes_and_edges(self):
        ds = make_dataset(n_users=1, n_news=1, responses=[("u0", "n0", "positive", 1, "train")])
        graph = build_graph(
            ds, [persona_of("u0", moral=["care"])], options=Ablation(without_belief=True)
        )
        assert graph.beliefs == () and graph.belief_edges == ()

    def test_without_user_news_drops_interactions_keeps_media(self):
        ds = make_dataset(n_users=2, n_news=1, responses=[("u0", "n0", "positive", 1, "train")])
        graph = build_graph(ds, [], options=Ablation(without_user_news=True))
        assert graph.interact == ()
        assert graph.media == ("n0",)

    def test_duplicate_responses_one_interact_edge(self):
        ds = make_dataset(
            n_users=1,
            n_news=1,
            responses=[
                ("u0", "n0", "positive", 1, "train"),
                ("u0", "n0", "negative", 2, "train"),
            ],
        )
        graph = build_graph(ds, [])
        # brute-force dedup oracle
        expected = sorted({(r.user_id, r.news_id) for r in ds.responses if r.split == "train"})
        assert list(graph.interact) == expected

    def test_eval_split_interactions_excluded(self):
        ds = make_dataset(
            n_users=2,
            n_news=2,
            responses=[
                ("u0", "n0", "positive", 1, "train"),
                ("u1", "n1", "negative", 1, "test"),
            ],
        )
        graph = build_graph(ds, [])
        assert graph.interact == (("u0", "n0"),)

    def test_unknown_persona_user_rejected(self):
        ds = make_dataset(n_users=1)
        with pytest.raises(GraphError, match="ghost"):
            build_graph(ds, [persona_of("ghost", moral=["care"])])

    def test_idempotent_bytes(self):
        ds = make_dataset(
            n_users=3,
            n_news=2,
            follows=[("u0", "u1")],
            responses=[("u0", "n0", "positive", 1, "train")],
        )
        personas = [persona_of("u0", moral=["care"], human=["power"])]
        a = graph_to_json(build_graph(ds, personas))
        b = graph_to_json(build_graph(ds, personas))
        assert a == b

    def test_ablation_monotonicity(self):
        ds = make_dataset(
            n_users=3,
            n_news=2,
            follows=[("u0", "u1"), ("u1", "u2")],
            responses=[("u0", "n0", "positive", 1, "train"), ("u1", "n1", "neutral", 0, "train")],
        )
        personas = [persona_of("u0", moral=["care"]), persona_of("u1", human=["power"])]
        full = build_graph(ds, personas)
        for flags in itertools.product([False, True], repeat=2):
            ablated = build_graph(
                ds,
                personas,
                options=Ablation(without_belief=flags[0], without_user_news=flags[1]),
            )
            assert ablated.node_count <= full.node_count
            assert ablated.edge_count <= full.edge_count

    def test_apply_ablation_identity_and_unknown_flag(self):
        assert apply_ablation(None) == Ablation()
        assert apply_ablation({"without_belief": True}).without_belief
        with pytest.raises(GraphError):
            apply_ablation({"drop_everything": True})


class TestNeighbors:
    @pytest.fixture
    def graph(self):
        ds = make_dataset(
            n_users=3,
            n_news=2,
            follows=[("u0", "u1")],
            responses=[("u0", "n0", "positive", 1, "train")],
        )
        return build_graph(
            ds, [persona_of("u2", moral=["care"]), persona_of("u1", moral=["care"])]
        )

    def test_follow_directions(self, graph):
        assert neighbors(graph, NodeRef("user", "u0"), "follow", "out") == [NodeRef("user", "u1")]
        assert neighbors(graph, NodeRef("user", "u1"), "follow", "in") == [NodeRef("user", "u0")]

    def test_belief_node_neighbors_sorted(self, graph):
        got = neighbors(graph, NodeRef("belief", "care"), "belief")
        assert got == [NodeRef("user", "u1"), NodeRef("user", "u2")]

    def test_unknown_node(self, graph):
        with pytest.raises(GraphError):
            neighbors(graph, NodeRef("user", "nope"), "follow")


class TestFollowDistances:
    def test_path_graph_distances(self):
        from beliefcast.graph import undirected_follow_distances

        g = graph_from_beliefs([("a", "b"), ("b", "c"), ("c", "d")], {})
        dist = undirected_follow_distances(g, "a")
        assert dist == {"a": 0, "b": 1, "c": 2, "d": 3}

    def test_unreachable_nodes_absent(self):
        from beliefcast.graph import undirected_follow_distances

        g = graph_from_beliefs([("a", "b")], {"z": {"care"}})
        assert "z" not in undirected_follow_distances(g, "a")


class TestDistantSharedBelief:
    def test_direct_neighbors_share(self):
        g = graph_from_beliefs([("A", "B")], {"A": {"care"}, "B": {"care"}})
        assert distant_shared_belief_ratio(g) == 0.0

    def test_unreachable_counts_and_lonely_belief_in_denominator(self):
        g = graph_from_beliefs(
            [("A", "B")], {"A": {"care"}, "B": {"power"}, "C": {"care"}}
        )
        assert distant_shared_belief_ratio(g) == pytest.approx(2 / 3)

    def test_two_hop_path(self):
        g = graph_from_beliefs(
            [("A", "X"), ("X", "C")], {"A": {"loyalty"}, "C": {"loyalty"}}
        )
        assert distant_shared_belief_ratio(g) == pytest.approx(1.0)

    def test_empty_denominator(self):
        g = graph_from_beliefs([("A", "B")], {})
        assert distant_shared_belief_ratio(g) == 0.0

    def test_matches_bfs_oracle_on_random_graphs(self):
        rng = np.random.default_rng(7)
        beliefs = list(BELIEF_VOCABULARY)
        for _ in range(50):
            n = int(rng.integers(2, 31))
            ids = [f"u{i}" for i in range(n)]
            edges = set()
            for _ in range(int(rng.integers(0, 3 * n))):
                a, b = rng.integers(0, n, 2)
                if a != b:
                    edges.add((ids[a], ids[b]))
            beliefs_of = {}
            for uid in ids:
                k = int(rng.integers(0, 4))
                beliefs_of[uid] = set(
                    beliefs[i] for i in rng.choice(20, size=k, replace=False)
                )
            g = graph_from_beliefs(sorted(edges), beliefs_of)
            assert distant_shared_belief_ratio(g) == pytest.approx(
                bfs_oracle_ratio(sorted(edges), beliefs_of), abs=1e-12
            )


class TestStatsAndSerialization:
    def test_empty_graph_stats(self):
        g = HeteroGraph((), (), (), (), (), ())
        stats = graph_stats(g)
        assert stats.total_edges == 0
        assert all(v == 0 for v in stats.node_counts.values())

    def test_belief_histogram(self):
        g = graph_from_beliefs([], {"u1": {"care"}, "u2": {"care", "loyalty"}})
        stats = graph_stats(g)
        assert stats.belief_histogram["care"] == 2
        assert stats.belief_histogram["loyalty"] == 1

    def test_graph_json_round_trip_bytes(self, tmp_path):
        ds = make_dataset(
            n_users=3,
            n_news=2,
            follows=[("u1", "u0"), ("u0", "u2")],
            responses=[("u1", "n1", "negative", 2, "train")],
        )
        g = build_graph(ds, [persona_of("u0", human=["power", "security"])])
        first = tmp_path / "g1.json"
        second = tmp_path / "g2.json"
        write_graph_json(g, first)
        loaded = read_graph_json(first)
        write_graph_json(loaded, second)
        assert first.read_bytes() == second.read_bytes()
        assert loaded == g

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dhne.errors import ConfigError, ParseError
from dhne.hypergraph import (
    Hypergraph,
    NodeRef,
    build_adjacency,
    clique_expand,
    from_triples,
    hide_edges,
    read_triples,
    star_expand,
    synthesize_planted,
    write_triples,
)


def dense_adjacency(g):
    """Brute force: H H^T - D_v from an explicit dense incidence matrix."""
    n, m = g.num_nodes, g.num_edges
    h = np.zeros((n, m))
    off = g.offsets
    for j, e in enumerate(g.edges):
        for t, v in enumerate(e):
            h[off[t] + v, j] = 1
    deg = h.sum(axis=1)
    return h @ h.T - np.diag(deg), deg


@st.composite
def hypergraphs(draw, max_per_type=16, max_edges=40):
    counts = [draw(st.integers(1, max_per_type)) for _ in range(3)]
    edges = draw(
        st.lists(
            st.tuples(*(st.integers(0, c - 1) for c in counts)),
            min_size=0,
            max_size=max_edges,
        )
    )
    return Hypergraph.from_indices(counts, edges)


FIG1 = [("A1", "L2", "U1"), ("A1", "L1", "U2"), ("A2", "L1", "U2")]


def test_from_triples_interns_in_first_seen_order():
    g = from_triples([("u1", "m1", "t1"), ("u1", "m2", "t1")])
    assert g.counts == (1, 2, 1)
    assert g.num_edges == 2
    assert g.names[1] == ("m1", "m2")
    assert (0, 1, 0) in g


def test_from_triples_dedups():
    g = from_triples([("a", "b", "c"), ("a", "b", "c")])
    assert g.num_edges == 1


def test_from_triples_errors():
    with pytest.raises(ParseError, match="empty hypergraph"):
        from_triples([])
    with pytest.raises(ParseError, match="triple 2"):
        from_triples([("a", "b", "c"), ("a", "b")])


def test_four_member_edges_rejected():
    with pytest.raises(ConfigError):
        Hypergraph.from_indices([2, 2, 2], [(0, 0, 0, 0)])
    with pytest.raises(ParseError):
        from_triples([("a", "b", "c", "d")])


def test_read_triples_roundtrip(tmp_path):
    p = tmp_path / "g.tsv"
    p.write_text("# user\tloc\tact\n\nu1\tl1\ta1\nu2\tl1\ta2\n", encoding="utf-8")
    g = read_triples(p, ("user", "loc", "act"))
    assert g.counts == (2, 1, 2)
    assert g.type_names == ("user", "loc", "act")
    out = tmp_path / "out.tsv"
    write_triples(g, out)
    assert read_triples(out).edge_index == g.edge_index


def test_read_triples_names_bad_line(tmp_path):
    p = tmp_path / "g.tsv"
    p.write_text("u1\tl1\ta1\nu2 l1 a2\n", encoding="utf-8")
    with pytest.raises(ParseError, match=":2:"):
        read_triples(p)


def test_adjacency_figure1():
    g = from_triples(FIG1)
    adj = build_adjacency(g)
    idx = {lab: g.global_index(NodeRef(t, i)) for t in range(3) for i, lab in enumerate(g.names[t])}
    assert adj.row(idx["L1"])[idx["U2"]] == 2
    assert adj.row(idx["A1"])[idx["L1"]] == 1
    assert idx["A2"] not in adj.row(idx["A1"])
    assert adj.degrees[idx["A1"]] == 2
    assert adj.degrees[idx["A2"]] == 1
    assert adj.degrees[idx["L1"]] == 2


def test_adjacency_single_edge():
    g = from_triples([("a", "b", "c")])
    adj = build_adjacency(g)
    assert adj.row(0) == {1: 1, 2: 1}
    assert adj.row(1) == {0: 1, 2: 1}
    assert list(adj.degrees) == [1, 1, 1]


def test_adjacency_gps_scale_size():
    # node counts of the GPS network: 146 users, 70 locations, 5 activities
    g = Hypergraph.from_indices([146, 70, 5], [(0, 0, 0), (145, 69, 4)])
    assert build_adjacency(g).global_size == 221


@settings(max_examples=60, deadline=None)
@given(hypergraphs())
def test_adjacency_matches_brute_force(g):
    adj = build_adjacency(g)
    dense, deg = dense_adjacency(g)
    got = adj.matrix.toarray()
    np.testing.assert_array_equal(got, dense)
    np.testing.assert_array_equal(got, got.T)
    assert np.all(np.diag(got) == 0)
    np.testing.assert_array_equal(adj.degrees, deg)
    assert adj.degrees.sum() == 3 * g.num_edges


def test_hide_edges_counts_and_determinism():
    g = synthesize_planted(20, 2, 12, 1.0, 3)
    g = Hypergraph.from_indices(g.counts, list(g.edges)[:10])
    assert g.num_edges == 10
    a_train, a_held = hide_edges(g, 0.5, seed=11)
    b_train, b_held = hide_edges(g, 0.5, seed=11)
    assert a_held == b_held
    assert len(a_held) == 5
    assert a_train.edge_index == b_train.edge_index
    assert len(hide_edges(g, 0.9, seed=1)[1]) == 9


def test_hide_edges_gps_count():
    rng = np.random.default_rng(0)
    codes = rng.choice(146 * 70 * 5, size=1436, replace=False)
    edges = np.stack(np.unravel_index(codes, (146, 70, 5)), axis=1)
    g = Hypergraph.from_indices([146, 70, 5], edges)
    train, held = hide_edges(g, 0.2, seed=0)
    assert len(held) == 287
    assert train.num_edges == 1149


@settings(max_examples=40, deadline=None)
@given(hypergraphs(), st.floats(0.05, 0.95), st.integers(0, 2**16))
def test_hide_edges_partitions(g, ratio, seed):
    if g.num_edges < 2:
        return
    train, held = hide_edges(g, ratio, seed)
    held_set = set(held)
    assert len(held_set) == len(held)
    assert held_set.isdisjoint(train.edge_index)
    assert held_set | train.edge_index == g.edge_index
    assert train.counts == g.counts


@pytest.mark.parametrize("ratio", [0.0, 1.0, -0.1, 1.5])
def test_hide_edges_bad_ratio(ratio):
    g = from_triples(FIG1)
    with pytest.raises(ConfigError):
        hide_edges(g, ratio, 0)


def test_planted_clean_edges_share_cluster():
    g = synthesize_planted(4, 2, 20, 0.0, seed=5)
    for a, b, c in g.edges:
        assert a % 2 == b % 2 == c % 2


def test_planted_tiny_has_at_most_two_edges():
    # one node per cluster per type: the only same-cluster triples are (0,0,0) and (1,1,1)
    possible = {e for e in itertools.product(range(2), repeat=3) if len(set(v % 2 for v in e)) == 1}
    assert possible == {(0, 0, 0), (1, 1, 1)}
    g = synthesize_planted(2, 2, 8, 0.0, seed=9)
    assert g.num_edges <= 2
    assert g.edge_index <= possible


def test_planted_noise_breaks_clusters():
    g = synthesize_planted(30, 3, 300, 1.0, seed=2)
    mixed = sum(1 for a, b, c in g.edges if not a % 3 == b % 3 == c % 3)
    assert mixed > 0


def test_planted_deterministic_and_validated():
    a = synthesize_planted(10, 2, 30, 0.2, seed=4)
    b = synthesize_planted(10, 2, 30, 0.2, seed=4)
    np.testing.assert_array_equal(a.edges, b.edges)
    with pytest.raises(ConfigError):
        synthesize_planted(3, 4, 10, 0.0, seed=0)


def test_clique_expand():
    g = from_triples([("a", "b", "c")])
    pairs = clique_expand(g)
    assert pairs == [
        (NodeRef(0, 0), NodeRef(1, 0)),
        (NodeRef(0, 0), NodeRef(2, 0)),
        (NodeRef(1, 0), NodeRef(2, 0)),
    ]
    shared = from_triples([("a", "b", "c"), ("a", "b", "d")])
    assert len(clique_expand(shared)) == 5
    empty = Hypergraph.from_indices([1, 1, 1], [])
    assert clique_expand(empty) == []


def test_star_expand():
    g = from_triples([("a", "b", "c")])
    assert star_expand(g) == [(NodeRef(0, 0), 0), (NodeRef(1, 0), 0), (NodeRef(2, 0), 0)]
    empty = Hypergraph.from_indices([1, 1, 1], [])
    assert star_expand(empty) == []


@settings(max_examples=40, deadline=None)
@given(hypergraphs())
def test_expansion_sizes(g):
    assert len(clique_expand(g)) <= 3 * g.num_edges
    links = star_expand(g)
    assert len(links) == 3 * g.num_edges
    assert {i for _, i in links} == set(range(g.num_edges))

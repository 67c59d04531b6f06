import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coral.graph import Graph, TopologyError, complete, from_spec, is_connected, random_connected, ring


def test_ring3_edges_and_degrees():
    g = ring(3)
    assert g.edges == ((0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1))
    assert list(g.degrees) == [2, 2, 2]
    assert g.n_directed == 6
    assert g.n_undirected == 3


def test_ring25_directed_count():
    assert ring(25).n_directed == 50


@pytest.mark.parametrize("N", [0, 1, 2])
def test_ring_too_small(N):
    with pytest.raises(TopologyError):
        ring(N)


def test_random_p1_is_complete():
    g = random_connected(4, 1.0, seed=3)
    assert list(g.degrees) == [3, 3, 3, 3]
    assert g.edges == complete(4).edges


def test_random_two_nodes():
    g = random_connected(2, 1.0, seed=0)
    assert list(g.degrees) == [1, 1]


def test_random_deterministic():
    assert random_connected(6, 0.4, 42).edges == random_connected(6, 0.4, 42).edges


def test_random_retry_cap():
    with pytest.raises(TopologyError):
        random_connected(30, 1e-6, seed=0, max_tries=3)


def test_is_connected_examples():
    assert is_connected(ring(5))
    assert not is_connected([[1], [0], [3], [2]])
    assert is_connected([[]])


def test_rejects_bad_adjacency():
    with pytest.raises(TopologyError):
        Graph(3, ((1,), (0,), ()))  # disconnected node 2
    with pytest.raises(TopologyError):
        Graph(2, ((1,), ()))  # asymmetric
    with pytest.raises(TopologyError):
        Graph(2, ((0, 1), (0,)))  # self-loop


def test_immutable():
    g = ring(4)
    with pytest.raises(Exception):
        g.N = 5
    with pytest.raises(ValueError):
        g.reverse[0] = 3


def test_from_spec_dispatch():
    assert from_spec("ring", 5).edges == ring(5).edges
    assert from_spec("complete", 4).edges == complete(4).edges
    assert from_spec("random", 5, 0.5, 9).edges == random_connected(5, 0.5, 9).edges
    with pytest.raises(ValueError):
        from_spec("star", 5)


@settings(max_examples=60, deadline=None)
@given(N=st.integers(2, 9), p=st.floats(0.2, 1.0), seed=st.integers(0, 10_000))
def test_random_graph_invariants(N, p, seed):
    g = random_connected(N, p, seed)
    nbrs = [set(n) for n in g.neighbors]
    for i, js in enumerate(nbrs):
        assert i not in js
        assert all(i in nbrs[j] for j in js)
    assert is_connected(g)
    assert g.n_directed == sum(len(n) for n in nbrs) == 2 * g.n_undirected
    # canonical ordering: agent-major, neighbor-ascending, stable across iteration
    assert list(g.edges) == sorted(g.edges)
    assert tuple(g.edges) == tuple(g.edges)
    for e, (i, j) in enumerate(g.edges):
        assert g.edges[g.reverse[e]] == (j, i)
        assert g.edge_index(i, j) == e
        assert g.source[e] == i and g.target[e] == j
    for i in range(N):
        sl = g.agent_slice(i)
        assert all(g.edges[e][0] == i for e in range(sl.start, sl.stop))


def test_enumerated_connectivity_small():
    # brute force over every graph on 4 nodes against a union-find oracle
    pairs = list(itertools.combinations(range(4), 2))
    for mask in range(1 << len(pairs)):
        chosen = [p for b, p in enumerate(pairs) if mask >> b & 1]
        parent = list(range(4))

        def find(a):
            while parent[a] != a:
                a = parent[a]
            return a

        for a, b in chosen:
            parent[find(a)] = find(b)
        expected = len({find(a) for a in range(4)}) == 1
        adj = [[b for a2, b in chosen if a2 == a] + [a2 for a2, b in chosen if b == a] for a in range(4)]
        assert is_connected(adj) == expected

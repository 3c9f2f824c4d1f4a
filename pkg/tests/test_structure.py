"""Reduced multigraph, edge coloring, and slot carving."""

import logging

import pytest

from treepack.errors import ParameterError, StructuralError
from treepack.graphs import Graph, complete_bipartite, erdos_renyi
from treepack.regularity import regular_partition_heuristic
from treepack.structure import (
    ReducedMultigraph,
    build_reduced,
    edge_color_matchings,
    select_and_carve,
)
from treepack.rng import make_rng


def toy_multigraph(pair_counts, parts=None):
    """Reduced multigraph with given parallel-edge counts and empty payloads."""
    r = 1 + max(max(i, j) for (i, j) in pair_counts)
    edges = []
    payload = {}
    for (i, j), cnt in pair_counts.items():
        for label in range(cnt):
            edges.append((i, j, label))
            payload[(i, j, label)] = ()
    return ReducedMultigraph(
        host=Graph(0),
        parts=parts or [(k,) for k in range(r)],
        edges=edges,
        payload=payload,
        t=4,
    )


def assert_proper_coloring(rm, classes):
    covered = []
    for cls in classes:
        seen = set()
        for (i, j, label) in cls:
            assert i not in seen and j not in seen, "class is not a matching"
            seen.update((i, j))
            covered.append((i, j, label))
    assert sorted(covered) == sorted(rm.edges), "not every edge colored exactly once"
    assert len(classes) <= rm.max_degree() + rm.max_multiplicity()


def test_build_reduced_complete_pair():
    g = complete_bipartite(40, 40)
    parts = [tuple(range(40)), tuple(range(40, 80))]
    rm = build_reduced(g, parts, {(0, 1): 1.0}, t=4, seed=3)
    assert len(rm.edges) == 4
    total = sum(len(rm.payload[e]) for e in rm.edges)
    assert total == 1600  # probabilities sum to exactly 1, so full coverage
    for e in rm.edges:
        assert abs(len(rm.payload[e]) - 400) <= 120  # ~6 sigma
    # payload classes pairwise disjoint
    seen = set()
    for e in rm.edges:
        s = set(rm.payload[e])
        assert not (s & seen)
        seen |= s


def test_build_reduced_drops_sparse_pairs(caplog):
    g = erdos_renyi(60, 0.1, seed=1)
    parts = [tuple(range(30)), tuple(range(30, 60))]
    with caplog.at_level(logging.WARNING):
        rm = build_reduced(g, parts, {(0, 1): 0.1}, t=4, seed=1)
    assert rm.edges == []
    assert "dropped" in caplog.text


def test_build_reduced_three_parts():
    g = erdos_renyi(90, 0.5, seed=5)
    parts = [tuple(range(30)), tuple(range(30, 60)), tuple(range(60, 90))]
    dens = {(0, 1): 0.5, (0, 2): 0.5, (1, 2): 0.5}
    rm = build_reduced(g, parts, dens, t=8, seed=2)
    assert len(rm.edges) == 12  # floor(0.5*8) = 4 per pair
    assert rm.max_multiplicity() == 4
    assert rm.max_degree() == 8


def test_coloring_triangle():
    rm = toy_multigraph({(0, 1): 1, (1, 2): 1, (0, 2): 1})
    classes = edge_color_matchings(rm)
    assert_proper_coloring(rm, classes)
    assert len(classes) == 3  # an odd cycle needs Delta + 1


def test_coloring_parallel_edges():
    rm = toy_multigraph({(0, 1): 5})
    classes = edge_color_matchings(rm)
    assert_proper_coloring(rm, classes)
    assert len(classes) == 5


def test_coloring_two_edge_path():
    rm = toy_multigraph({(0, 1): 1, (1, 2): 1})
    classes = edge_color_matchings(rm)
    assert_proper_coloring(rm, classes)
    assert len(classes) == 2


def test_coloring_random_multigraphs():
    rng = make_rng(21)
    for trial in range(30):
        r = rng.randrange(3, 8)
        pair_counts = {}
        for i in range(r):
            for j in range(i + 1, r):
                c = rng.randrange(0, 4)
                if c:
                    pair_counts[(i, j)] = c
        if not pair_counts:
            continue
        rm = toy_multigraph(pair_counts)
        classes = edge_color_matchings(rm, seed=trial)
        assert_proper_coloring(rm, classes)


def test_reduced_degree_near_regular_host():
    # on an almost-alpha*n-regular host the multigraph degree lands within
    # the (alpha +- 6/t) * t * r window
    g = erdos_renyi(240, 0.5, seed=21)
    part = regular_partition_heuristic(g, 4, 0.25, seed=2)
    rm = build_reduced(g, part.parts, part.pair_densities, t=8, seed=0)
    r, t, alpha = 4, 8, 0.5
    for i in range(r):
        assert (alpha - 6 / t) * t * r <= rm.degree(i) <= (alpha + 6 / t) * t * r


def test_select_and_carve_planted_pair():
    g = complete_bipartite(40, 40)
    parts = [tuple(range(40)), tuple(range(40, 80))]
    rm = build_reduced(g, parts, {(0, 1): 1.0}, t=2, seed=3)
    classes = edge_color_matchings(rm)
    structure = select_and_carve(
        rm, classes, alpha=0.5, t=2, epsilon=0.05, seed=1,
        n_bullet=30, kappa=2, allow_fewer=False,
    )
    assert structure.kappa == 2
    for batch in structure.batches:
        assert len(batch.pairs) == 1
        p = batch.pairs[0]
        assert len(p.v1) == len(p.v2) == 30
        assert len(p.u1) >= 1 and len(p.u2) >= 1
        slots = [set(p.u1), set(p.u2), set(p.v1), set(p.v2)]
        for a in range(4):
            for b in range(a + 1, 4):
                assert not (slots[a] & slots[b])
    # carriers are edge-disjoint across batches
    c0 = structure.batches[0].carrier_edges()
    c1 = structure.batches[1].carrier_edges()
    assert not (c0 & c1)
    json_summary = structure.to_json()
    assert json_summary["kappa"] == 2 and len(json_summary["matchings"]) == 2


def test_select_and_carve_shortfall():
    g = complete_bipartite(40, 40)
    parts = [tuple(range(40)), tuple(range(40, 80))]
    rm = build_reduced(g, parts, {(0, 1): 1.0}, t=2, seed=3)
    classes = edge_color_matchings(rm)  # only 2 classes exist
    with pytest.raises(StructuralError) as err:
        select_and_carve(
            rm, classes, alpha=0.5, t=2, epsilon=0.05, seed=1,
            n_bullet=30, kappa=5,
        )
    assert err.value.achievable == 2
    # allow_fewer proceeds with what exists
    structure = select_and_carve(
        rm, classes, alpha=0.5, t=2, epsilon=0.05, seed=1,
        n_bullet=30, kappa=5, allow_fewer=True,
    )
    assert structure.kappa == 2


def test_carve_rejects_oversized_n_bullet():
    g = complete_bipartite(40, 40)
    parts = [tuple(range(40)), tuple(range(40, 80))]
    rm = build_reduced(g, parts, {(0, 1): 1.0}, t=2, seed=3)
    classes = edge_color_matchings(rm)
    with pytest.raises(ParameterError):
        select_and_carve(
            rm, classes, alpha=0.5, t=2, epsilon=0.05, seed=1,
            n_bullet=40, kappa=1,
        )

"""Regularity toolkit against independent full-enumeration oracles."""

import itertools
from fractions import Fraction

import pytest

from treepack.errors import ParameterError, ProbabilisticFailure, RegularityViolation, SizeError
from treepack.graphs import Graph, complete_bipartite, erdos_renyi
from treepack.regularity import (
    BipartitePairView,
    density,
    pair_view,
    partition_super_regular,
    regular_partition_heuristic,
    regularity_test,
    remove_edges_check,
    robust_degree_filter,
    split_edges,
    super_regular_trim,
)
from treepack.rng import make_rng


def bipartite_pair(a, b, p, rng):
    """Random bipartite graph with sides 0..a-1 and a..a+b-1."""
    g = Graph(a + b)
    for u in range(a):
        for v in range(a, a + b):
            if rng.random() < p:
                g._add_edge(u, v)
    return pair_view(g, range(a), range(a, a + b))


def regular_oracle(pair, epsilon):
    """Full enumeration over every qualifying subset pair; exact arithmetic.

    Shares no code with regularity_test: densities come from explicit edge
    scans over itertools combinations.
    """
    eps = Fraction(epsilon)
    a_side, b_side = pair.side_a, pair.side_b
    e_total = 0
    for u in a_side:
        for v in b_side:
            if pair.graph.has_edge(u, v):
                e_total += 1
    d = Fraction(e_total, len(a_side) * len(b_side))
    for ka in range(1, len(a_side) + 1):
        if Fraction(ka) < eps * len(a_side):
            continue
        for kb in range(1, len(b_side) + 1):
            if Fraction(kb) < eps * len(b_side):
                continue
            for sub_a in itertools.combinations(a_side, ka):
                for sub_b in itertools.combinations(b_side, kb):
                    e = sum(
                        1
                        for u in sub_a
                        for v in sub_b
                        if pair.graph.has_edge(u, v)
                    )
                    if abs(Fraction(e, ka * kb) - d) >= eps:
                        return False
    return True


def test_density_values():
    assert density(pair_view(complete_bipartite(4, 5), range(4), range(4, 9))) == 1
    g = Graph(6)
    assert density(pair_view(g, range(3), range(3, 6))) == 0
    # C4 split across its bipartition
    c4 = Graph.from_edges(4, [(0, 2), (2, 1), (1, 3), (3, 0)])
    assert density(pair_view(c4, [0, 1], [2, 3])) == 1
    with pytest.raises(ParameterError):
        density(pair_view(g, [], range(3)))


def test_regularity_complete_pair():
    pair = pair_view(complete_bipartite(6, 6), range(6), range(6, 12))
    v = regularity_test(pair, 0.25)
    assert v.status == "regular" and v.density == 1.0


def test_regularity_perfect_matching_irregular():
    g = Graph.from_edges(16, [(i, i + 8) for i in range(8)])
    pair = pair_view(g, range(8), range(8, 16))
    v = regularity_test(pair, 0.25)
    assert v.status == "irregular-with-witness"
    wa, wb = v.witness
    assert len(wa) >= 2 and len(wb) >= 2
    # the witness really violates: |den - 1/8| >= 0.25
    e = sum(1 for u in wa for w in wb if g.has_edge(u, w))
    assert abs(Fraction(e, len(wa) * len(wb)) - Fraction(1, 8)) >= Fraction(0.25)


def test_regularity_matches_full_enumeration():
    rng = make_rng(31)
    for trial in range(60):
        a = rng.randrange(2, 6)
        b = rng.randrange(2, 6)
        pair = bipartite_pair(a, b, rng.random(), rng)
        eps = rng.choice([0.25, 0.3, 0.4, 0.5])
        got = regularity_test(pair, eps)
        assert (got.status == "regular") == regular_oracle(pair, eps)


def test_regularity_sampled_random_pair():
    rng = make_rng(8)
    pair = bipartite_pair(100, 100, 0.5, rng)
    v = regularity_test(pair, 0.25, mode="sampled", trials=500, seed=2)
    assert v.status == "estimated-regular"
    assert abs(v.density - 0.5) < 0.05


def test_regularity_size_guard():
    pair = pair_view(complete_bipartite(20, 20), range(20), range(20, 40))
    with pytest.raises(SizeError):
        regularity_test(pair, 0.2, mode="exhaustive")


def test_robust_degree_filter():
    pair = pair_view(complete_bipartite(5, 8), range(5), range(5, 13))
    assert robust_degree_filter(pair, 0.2, 1.0, range(5, 10)) == set(range(5))
    g = Graph(10)
    empty_pair = pair_view(g, range(5), range(5, 10))
    assert robust_degree_filter(empty_pair, 0.2, 0.5, range(5, 10)) == set()
    with pytest.raises(ParameterError):
        robust_degree_filter(pair, 0.5, 1.0, [5])


def test_robust_degree_filter_matches_naive():
    rng = make_rng(44)
    pair = bipartite_pair(200, 200, 0.5, rng)
    sub = rng.sample(range(200, 400), 80)
    got = robust_degree_filter(pair, 0.05, 0.45, sub)
    need = (0.45 - 0.05 ** 0.5) * len(sub)
    naive = {
        u
        for u in range(200)
        if sum(1 for v in sub if pair.graph.has_edge(u, v)) >= need
    }
    assert got == naive
    assert len(got) >= (1 - 0.05 ** 0.5) * 200


def test_trim_complete_unchanged():
    pair = pair_view(complete_bipartite(10, 10), range(10), range(10, 20))
    a, b = super_regular_trim(pair, 0.1, 1.0)
    assert a == tuple(range(10)) and b == tuple(range(10, 20))


def test_trim_drops_isolated_vertex():
    g = complete_bipartite(10, 10)
    # adjoin an isolated vertex to side A
    g2 = Graph(21)
    for u, v in g.edges():
        g2._add_edge(u, v)
    pair = pair_view(g2, list(range(10)) + [20], range(10, 20))
    a, b = super_regular_trim(pair, 0.1, 1.0)
    assert 20 not in a
    assert set(a) == set(range(10)) and set(b) == set(range(10, 20))


def test_trim_random_pair_degree_audit():
    rng = make_rng(17)
    pair = bipartite_pair(150, 150, 0.5, rng)
    a, b = super_regular_trim(pair, 0.1, 0.45)
    assert len(a) >= 0.8 * 150 and len(b) >= 0.8 * 150
    from treepack.graphs import mask_of

    mb = mask_of(b)
    for u in a:
        deg = (pair.graph.adj[u] & mb).bit_count()
        assert (0.45 - 0.3) * len(b) <= deg <= (0.45 + 0.3) * len(b)


def test_trim_rejects_very_irregular():
    g = Graph.from_edges(12, [(i, i + 6) for i in range(6)])  # matching
    pair = pair_view(g, range(6), range(6, 12))
    with pytest.raises(RegularityViolation):
        super_regular_trim(pair, 0.05, 0.5)


def test_split_edges_trivial_classes():
    pair = pair_view(complete_bipartite(6, 6), range(6), range(6, 12))
    full = split_edges(pair, [1.0], seed=1)
    assert len(full) == 1 and sorted(full[0]) == pair.crossing_edges()
    empty = split_edges(pair, [0.0, 0.0], seed=1)
    assert empty == [[], []]
    with pytest.raises(ParameterError):
        split_edges(pair, [0.7, 0.7], seed=1)


def test_split_edges_partition_and_counts():
    pair = pair_view(complete_bipartite(100, 100), range(100), range(100, 200))
    classes = split_edges(pair, [0.5, 0.5], seed=5)
    all_edges = set(pair.crossing_edges())
    seen = set()
    for cls in classes:
        s = set(cls)
        assert not (s & seen)
        assert s <= all_edges
        seen |= s
    assert len(seen) == 10000
    sigma = (10000 * 0.25) ** 0.5
    for cls in classes:
        assert abs(len(cls) - 5000) <= 300
        assert abs(len(cls) - 5000) <= 6 * sigma


def test_partition_super_regular_complete():
    pair = pair_view(complete_bipartite(20, 20), range(20), range(20, 40))
    a1, a2, b1, b2 = partition_super_regular(pair, 0.1, 1.0, 10, 10, 10, 10, seed=3)
    assert len(a1) == len(a2) == len(b1) == len(b2) == 10
    assert set(a1) | set(a2) == set(range(20))
    with pytest.raises(ParameterError):
        partition_super_regular(pair, 0.1, 1.0, 0, 20, 10, 10, seed=3)


def test_partition_super_regular_random():
    rng = make_rng(2)
    pair = bipartite_pair(200, 200, 0.5, rng)
    a1, a2, b1, b2 = partition_super_regular(pair, 0.04, 0.5, 100, 100, 100, 100, seed=11)
    from treepack.graphs import mask_of

    for sa in (a1, a2):
        for sb in (b1, b2):
            mb = mask_of(sb)
            e = sum((pair.graph.adj[u] & mb).bit_count() for u in sa)
            dens = e / (len(sa) * len(sb))
            assert 0.3 <= dens <= 0.7


def test_partition_super_regular_retry_exhaustion():
    # a matching is nowhere near super-regular at this density
    g = Graph.from_edges(40, [(i, i + 20) for i in range(20)])
    pair = pair_view(g, range(20), range(20, 40))
    with pytest.raises(ProbabilisticFailure):
        partition_super_regular(pair, 0.1, 0.5, 10, 10, 10, 10, seed=1)


def test_remove_edges_check():
    pair = pair_view(complete_bipartite(12, 12), range(12), range(12, 24))
    base = regularity_test(pair, 0.3 ** 0.5)
    unchanged = remove_edges_check(pair, 0.3, 1.0, [])
    assert unchanged.status == base.status == "regular"
    one_removed = remove_edges_check(pair, 0.3, 1.0, [(0, 12)])
    assert one_removed.status == "regular"
    too_many = [(u, v) for u in range(3) for v in range(12, 24)]
    with pytest.raises(ParameterError):
        remove_edges_check(pair, 0.3, 1.0, too_many)


def test_remove_edges_check_large_pair_sampled():
    pair = pair_view(complete_bipartite(50, 50), range(50), range(50, 100))
    v = remove_edges_check(pair, 0.3, 1.0, [(0, 50)])
    assert v.status == "estimated-regular"


def test_partition_heuristic_random_graph():
    g = erdos_renyi(240, 0.5, seed=21)
    part = regular_partition_heuristic(g, 4, 0.25, seed=2)
    assert len(part.parts) == 4
    assert all(len(p) == 60 for p in part.parts)
    assert len(part.exceptional) == 0
    covered = sorted(v for p in part.parts for v in p)
    assert covered == list(range(240))
    assert part.irregular_pairs() == []
    for d in part.pair_densities.values():
        assert 0.4 <= d <= 0.6


def test_partition_heuristic_recovers_planted_bipartition():
    g = complete_bipartite(100, 100)
    part = regular_partition_heuristic(g, 2, 0.15, seed=4)
    p0, p1 = part.parts
    # the planted sides are 0..99 and 100..199; allow either labeling
    side = set(p0)
    assert side == set(range(100)) or side == set(range(100, 200))
    assert part.pair_densities[(0, 1)] == 1.0


def test_partition_heuristic_single_vertex():
    g = Graph(1)
    part = regular_partition_heuristic(g, 2, 0.1, seed=0)
    assert part.parts == [[0]]
    assert part.exceptional == []

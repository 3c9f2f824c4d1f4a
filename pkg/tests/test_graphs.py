"""Graph core: generators, hole oracles, bi-independence, sparsification."""

import itertools

import pytest

from treepack import graphs
from treepack.errors import ParameterError, SizeError
from treepack.graphs import (
    Graph,
    PerturbSpec,
    bi_independence_exact,
    bi_independence_upper_sample,
    bipartite_hole_exists,
    bits,
    complete,
    complete_bipartite,
    erdos_renyi,
    highly_connecting_check,
    mask_of,
    perturbed,
    sparsify_preserving_holes,
    ternary_tree_graph,
    two_cliques,
    unbalanced_noisy_bipartite,
)
from treepack.rng import make_rng


# ---------------------------------------------------------------------------
# independent oracles (no shared code with the implementations they check)
# ---------------------------------------------------------------------------


def hole_exists_bruteforce(g, s, t):
    """All disjoint (s,t) set pairs, direct edge scan."""
    verts = range(g.n)
    if s == 0 or t == 0:
        return s + t <= g.n
    for side_s in itertools.combinations(verts, s):
        rest = [v for v in verts if v not in side_s]
        for side_t in itertools.combinations(rest, t):
            if all(not g.has_edge(u, v) for u in side_s for v in side_t):
                return True
    return False


def bi_independence_bruteforce(g):
    """Independent double loop over r and all splits."""
    best = 0
    for r in range(1, g.n + 1):
        if all(hole_exists_bruteforce(g, s, r - s) for s in range(r + 1)):
            best = r
        else:
            break
    return best


def random_graph(n, p, rng):
    g = Graph(n)
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < p:
                g._add_edge(u, v)
    return g


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def test_two_cliques_counts():
    g = two_cliques(3)
    assert g.n == 6
    assert g.edge_count() == 6
    m = 7
    assert two_cliques(m).edge_count() == 2 * m * (m - 1) // 2


def test_complete_bipartite_counts():
    for a, b in [(0, 5), (3, 3), (4, 7)]:
        assert complete_bipartite(a, b).edge_count() == a * b


def test_ternary_tree_shape():
    g = ternary_tree_graph(2)
    assert g.n == 13
    assert g.edge_count() == 12
    assert g.max_degree() == 4
    h = 3
    assert ternary_tree_graph(h).edge_count() == (3 ** (h + 1) - 1) // 2 - 1


def test_perturbed_contains_base():
    base = two_cliques(10)
    g = perturbed(PerturbSpec(base, 0.1, seed=5))
    for u, v in base.edges():
        assert g.has_edge(u, v)


def test_unbalanced_noisy_bipartite():
    g, small, big = unbalanced_noisy_bipartite(100, 0.1, seed=3)
    assert len(small) == 45 and len(big) == 55
    for u in small:
        for v in big:
            assert g.has_edge(u, v)
    # internal density ~ xi/2 = 0.05, within 3 sigma of the binomial count
    for part in (small, big):
        pairs = len(part) * (len(part) - 1) // 2
        inside = sum(
            1 for u, v in itertools.combinations(part, 2) if g.has_edge(u, v)
        )
        mean = 0.05 * pairs
        sigma = (pairs * 0.05 * 0.95) ** 0.5
        assert abs(inside - mean) <= 3 * sigma


def test_erdos_renyi_density_and_determinism():
    g1 = erdos_renyi(200, 0.1, seed=11)
    g2 = erdos_renyi(200, 0.1, seed=11)
    assert g1 == g2
    pairs = 200 * 199 // 2
    sigma = (pairs * 0.1 * 0.9) ** 0.5
    assert abs(g1.edge_count() - 0.1 * pairs) <= 4 * sigma
    assert erdos_renyi(50, 0.0, seed=1).edge_count() == 0


def test_generator_rejects_bad_sizes():
    with pytest.raises(ParameterError):
        complete_bipartite(-1, 2)
    with pytest.raises(ParameterError):
        erdos_renyi(10, 1.5, seed=0)
    with pytest.raises(ParameterError):
        unbalanced_noisy_bipartite(10, 0.0, seed=0)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def test_serialization_roundtrip(tmp_path):
    g = erdos_renyi(40, 0.2, seed=9)
    path = tmp_path / "g.txt"
    g.write(path)
    again = Graph.read(path)
    assert again == g
    # deterministic lexicographic ordering
    assert g.to_text() == again.to_text()
    lines = g.to_text().splitlines()[1:]
    assert lines == sorted(lines, key=lambda ln: tuple(map(int, ln.split())))


def test_serialization_rejects_malformed():
    with pytest.raises(ParameterError):
        Graph.from_text("2 1\n1 0\n")
    with pytest.raises(ParameterError):
        Graph.from_text("")


# ---------------------------------------------------------------------------
# bipartite holes
# ---------------------------------------------------------------------------


def test_hole_complete_graph():
    q = bipartite_hole_exists(complete(4), 1, 1)
    assert q.status == "none"


def test_hole_k33():
    q = bipartite_hole_exists(complete_bipartite(3, 3), 1, 1)
    assert q.status == "hole"
    (s_side, t_side) = q.witness
    g = complete_bipartite(3, 3)
    assert not g.has_edge(s_side[0], t_side[0])


def test_hole_two_triangles():
    g = two_cliques(3)
    assert hole_exists_bruteforce(g, 3, 3)  # oracle first
    q = bipartite_hole_exists(g, 3, 3)
    assert q.found
    s_mask, t_mask = mask_of(q.witness[0]), mask_of(q.witness[1])
    assert all((g.adj[u] & t_mask) == 0 for u in bits(s_mask))


def test_hole_parameter_error():
    with pytest.raises(ParameterError):
        bipartite_hole_exists(complete(4), 3, 2)


def test_hole_vacuous_sides():
    q = bipartite_hole_exists(complete(5), 3, 0)
    assert q.found and len(q.witness[0]) == 3 and q.witness[1] == ()


def test_hole_matches_bruteforce_small():
    rng = make_rng(77)
    for trial in range(40):
        n = rng.randrange(2, 9)
        g = random_graph(n, rng.random(), rng)
        for _ in range(4):
            s = rng.randrange(0, n)
            t = rng.randrange(0, n - s + 1)
            got = bipartite_hole_exists(g, s, t)
            assert got.status in ("hole", "none")
            assert got.found == hole_exists_bruteforce(g, s, t)


def test_hole_monotone_in_sides():
    # a hole for (s,t) restricts to every (s', t') below it
    rng = make_rng(5)
    for _ in range(30):
        n = rng.randrange(3, 10)
        g = random_graph(n, 0.5, rng)
        for s in range(1, n):
            for t in range(1, n - s + 1):
                if bipartite_hole_exists(g, s, t).found:
                    assert bipartite_hole_exists(g, max(s - 1, 1), t).found
                    assert bipartite_hole_exists(g, s, max(t - 1, 1)).found


def test_randomized_hole_search_unknown_vs_none():
    g = complete(40)  # above the exact threshold
    q = bipartite_hole_exists(g, 2, 2, trials=50, seed=1)
    assert q.status == "unknown"


# ---------------------------------------------------------------------------
# bi-independence
# ---------------------------------------------------------------------------


def test_bi_independence_analytic_values():
    assert bi_independence_exact(complete(2)) == 1
    assert bi_independence_exact(complete(7)) == 1
    assert bi_independence_exact(Graph(9)) == 9
    assert bi_independence_exact(two_cliques(3)) == 4
    assert bi_independence_exact(complete_bipartite(3, 3)) == 3


def test_bi_independence_matches_bruteforce():
    rng = make_rng(123)
    for _ in range(60):
        n = rng.randrange(1, 8)
        g = random_graph(n, rng.random(), rng)
        assert bi_independence_exact(g) == bi_independence_bruteforce(g)


def test_bi_independence_size_error():
    with pytest.raises(SizeError):
        bi_independence_exact(complete(15))


def test_sample_parameter_error():
    g = complete_bipartite(50, 50)
    with pytest.raises(ParameterError):
        bi_independence_upper_sample(g, 102, trials=10, seed=1)
    with pytest.raises(ParameterError):
        bi_independence_upper_sample(g, 10, trials=0, seed=1)


def test_sample_finds_hole_in_complete_bipartite():
    g = complete_bipartite(50, 50)
    verdict = bi_independence_upper_sample(g, 40, trials=200, seed=1)
    assert verdict.status == "hole found"
    s_side, t_side = verdict.witness
    assert len(s_side) == 20 and len(t_side) == 20
    assert all(not g.has_edge(u, v) for u in s_side for v in t_side)


def test_sample_refutes_dense_random():
    g = erdos_renyi(600, 40 / 600, seed=4)
    verdict = bi_independence_upper_sample(g, 300, trials=100, seed=9)
    assert verdict.status == "refuted"


# ---------------------------------------------------------------------------
# highly-connecting check and sparsification
# ---------------------------------------------------------------------------


def test_highly_connecting_complete():
    g = complete(40)
    w = list(range(20))
    w2 = list(range(15, 40))
    assert highly_connecting_check(g, w, w2, eta=0.01) == set()


def test_highly_connecting_two_cliques():
    # cross-degrees are all zero, so every vertex of W is bad; this host
    # violates the bi-independence hypothesis, so no size bound applies
    m = 30
    g = two_cliques(m)
    w = list(range(m))
    w2 = list(range(m, 2 * m))
    assert highly_connecting_check(g, w, w2, eta=0.01) == set(w)


def test_highly_connecting_random():
    g = erdos_renyi(500, 0.3, seed=2)
    rng = make_rng(3)
    w = rng.sample(range(500), 200)
    w2 = rng.sample(range(500), 200)
    bad = highly_connecting_check(g, w, w2, eta=0.004)
    # independent recount
    expect = {
        u for u in w if sum(1 for v in w2 if g.has_edge(u, v)) < 0.004 ** -0.5
    }
    assert bad == expect
    assert bad == set()


def test_highly_connecting_size_precondition():
    g = complete(100)
    with pytest.raises(ParameterError):
        highly_connecting_check(g, [0, 1], list(range(50)), eta=0.01)


def test_sparsify_empty_and_zero():
    assert sparsify_preserving_holes(Graph(10), 0.5, 0.01, seed=1).edge_count() == 0
    out = sparsify_preserving_holes(complete(30), 0.0, 0.01, seed=1)
    assert out.edge_count() == 0 and out.n == 30


def test_sparsify_degree_cap_and_subgraph():
    g = complete(200)
    h = sparsify_preserving_holes(g, 0.2, 0.001, seed=7)
    assert h.n == 200
    assert h.max_degree() <= 0.2 * 200
    for u, v in h.edges():
        assert g.has_edge(u, v)
    # sampled disjoint 12/12 pairs are all joined by an edge
    rng = make_rng(13)
    for _ in range(50):
        picks = rng.sample(range(200), 24)
        s_mask = mask_of(picks[:12])
        t_mask = mask_of(picks[12:])
        assert any(h.adj[u] & t_mask for u in bits(s_mask))


def test_sparsify_deterministic():
    g = erdos_renyi(80, 0.4, seed=0)
    a = sparsify_preserving_holes(g, 0.3, 0.01, seed=42)
    b = sparsify_preserving_holes(g, 0.3, 0.01, seed=42)
    assert a == b


def test_find_spanning_path():
    g = complete(12)
    path = graphs.find_spanning_path(g, seed=3)
    assert path is not None and len(path) == 12 and len(set(path)) == 12
    for u, v in zip(path, path[1:]):
        assert g.has_edge(u, v)

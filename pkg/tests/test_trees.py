"""Tree toolkit: decomposition properties, connector split, slot assignment."""

import pytest

from treepack.errors import ParameterError, ProbabilisticFailure
from treepack.trees import (
    RootedTree,
    assign_slots,
    bipartition,
    complete_ternary,
    merge_trees,
    partition_subtrees,
    path_tree,
    piece_bipartition,
    random_tree,
    split_connector,
)
from treepack.rng import make_rng


def audit_decomposition(tree, decomp, t):
    """The three decomposition properties, recomputed from scratch."""
    seen = set()
    delta = max(tree.max_degree(), 2)
    for root, verts in decomp.pieces:
        assert root in verts
        assert not (verts & seen), "pieces overlap"
        seen |= verts
        # containment in the subtree hanging at the root
        for v in verts:
            u = v
            while u != root and u is not None:
                u = tree.parent[u]
            assert u == root, f"{v} not below piece root {root}"
        # connectivity inside the piece
        stack, reached = [root], {root}
        while stack:
            u = stack.pop()
            for c in tree.children[u]:
                if c in verts and c not in reached:
                    reached.add(c)
                    stack.append(c)
        assert reached == verts
        if tree.n >= t:
            assert t <= len(verts) <= 2 * delta * t, (len(verts), t, delta)
    assert seen == set(range(tree.n)), "pieces do not cover the tree"


def test_tree_validation():
    with pytest.raises(ParameterError):
        RootedTree(3, 0, [None, 0, 1, 2])  # wrong length
    with pytest.raises(ParameterError):
        RootedTree(3, 0, [None, 2, 1])  # cycle between 1 and 2
    with pytest.raises(ParameterError):
        RootedTree(2, 0, [None, None])  # disconnected


def test_random_tree_properties():
    for seed in range(5):
        t = random_tree(300, 4, seed=seed)
        assert t.n == 300
        assert t.max_degree() <= 4
        assert t.edge_count() == 299


def test_tree_serialization_roundtrip():
    t = random_tree(40, 3, seed=1)
    again = RootedTree.from_text(t.to_text())
    assert again.parent == t.parent and again.root == t.root


def test_partition_small_tree_single_piece():
    t = path_tree(5)
    decomp = partition_subtrees(t, 9)
    assert len(decomp.pieces) == 1
    root, verts = decomp.pieces[0]
    assert root == 0 and verts == frozenset(range(5))


def test_partition_path():
    t = path_tree(12)
    decomp = partition_subtrees(t, 3)
    audit_decomposition(t, decomp, 3)
    for _, verts in decomp.pieces:
        assert 3 <= len(verts) <= 2 * 2 * 3


def test_partition_ternary():
    t = complete_ternary(3)  # 40 vertices
    decomp = partition_subtrees(t, 4)
    audit_decomposition(t, decomp, 4)
    for _, verts in decomp.pieces:
        assert 4 <= len(verts) <= 2 * 4 * 4


def test_partition_random_corpus():
    rng = make_rng(99)
    for trial in range(50):
        n = rng.randrange(50, 400)
        t = random_tree(n, rng.randrange(3, 6), seed=trial)
        for cut in (3, 10, 40):
            decomp = partition_subtrees(t, cut)
            audit_decomposition(t, decomp, cut)


def test_split_connector_path7():
    # single piece on a 7-path: connector is the root plus the next two
    # layers, bulk the remaining four vertices
    t = path_tree(7)
    decomp = partition_subtrees(t, 7)
    split = split_connector(t, decomp)
    assert split.c0 == {0} and split.c1 == {1} and split.c2 == {2}
    assert split.bulk == frozenset({3, 4, 5, 6})


def test_split_connector_shallow_tree_all_connector():
    # star of stars: depth <= 2, so one piece swallows everything
    parent = [None] + [0] * 3 + [1, 1, 2, 2, 3, 3]
    t = RootedTree(10, 0, parent)
    decomp = partition_subtrees(t, 10)
    split = split_connector(t, decomp)
    assert split.connector == frozenset(range(10))
    assert split.bulk == frozenset()


def test_split_connector_structural_facts_random():
    rng = make_rng(5)
    for trial in range(40):
        n = rng.randrange(40, 500)
        t = random_tree(n, rng.randrange(3, 6), seed=1000 + trial)
        decomp = partition_subtrees(t, rng.choice([3, 10, 25]))
        split = split_connector(t, decomp)
        assert split.connector | split.bulk == frozenset(range(n))
        assert not (split.connector & split.bulk)
        # every tree edge crossing the split has its connector endpoint in
        # C0 (root, toward its parent) or C2 (toward depth-3 descendants)
        for v, p in t.edges():
            ends = {v, p}
            cross = ends & split.connector
            if cross and ends & split.bulk:
                assert cross <= (split.c0 | split.c2)


def test_bipartition():
    t = path_tree(5)
    a, b = bipartition(t, 0)
    assert a == {0, 2, 4} and b == {1, 3}
    single = RootedTree(1, 0, [None])
    assert bipartition(single, 0) == ({0}, set())
    edge = path_tree(2)
    assert bipartition(edge, 0) == ({0}, {1})
    # independence + cover
    t = random_tree(100, 4, seed=3)
    a, b = bipartition(t, 17)
    assert 17 in a and a | b == set(range(100))
    for v, p in t.edges():
        assert (v in a) != (p in a)


def test_assign_slots_r1():
    t = path_tree(60)
    decomp = partition_subtrees(t, 6)
    split = split_connector(t, decomp)
    out = assign_slots(split, r=1, epsilon=0.3, n=30, seed=2)
    sides = out.slot_classes[(0, 0)], out.slot_classes[(0, 1)]
    assert sides[0] | sides[1] == split.bulk
    # orientation per piece: each piece's two bulk sides land in opposite
    # classes of the single slot
    for (s, i), (side_a, side_b) in zip(out.slot_of_piece, split.piece_bulk_sides):
        assert s == 0
        assert side_a <= out.slot_classes[(0, i)]
        assert side_b <= out.slot_classes[(0, 1 - i)]


def test_assign_slots_classes_independent_in_tree():
    t = random_tree(400, 3, seed=8)
    decomp = partition_subtrees(t, 25)
    split = split_connector(t, decomp)
    out = assign_slots(split, r=3, epsilon=0.35, n=100, seed=4)
    for verts in out.slot_classes.values():
        for v in verts:
            assert not any(u in verts for u in t.neighbors(v))


def test_assign_slots_empty_bulk_vacuous():
    parent = [None] + [0] * 3
    t = RootedTree(4, 0, parent)
    decomp = partition_subtrees(t, 4)
    split = split_connector(t, decomp)
    assert split.bulk == frozenset()
    out = assign_slots(split, r=2, epsilon=0.05, n=50, seed=1)
    assert all(len(v) == 0 for v in out.slot_classes.values())


def test_assign_slots_window_and_failure():
    t = path_tree(1000)
    decomp = partition_subtrees(t, 10)
    split = split_connector(t, decomp)
    # feasible tolerance: classes concentrate near |F|/(2r)
    out = assign_slots(split, r=4, epsilon=0.2, n=125, seed=7)
    center = len(split.bulk) / 8
    for verts in out.slot_classes.values():
        assert abs(len(verts) - center) <= 0.2 * 125
    # infeasible tolerance: the window is tighter than the sampling noise
    with pytest.raises(ProbabilisticFailure):
        assign_slots(split, r=4, epsilon=0.005, n=125, seed=7)


def test_assign_slots_deterministic():
    t = random_tree(500, 3, seed=11)
    decomp = partition_subtrees(t, 30)
    split = split_connector(t, decomp)
    a = assign_slots(split, r=3, epsilon=0.3, n=120, seed=9)
    b = assign_slots(split, r=3, epsilon=0.3, n=120, seed=9)
    assert a.slot_of_piece == b.slot_of_piece
    assert a.slot_classes == b.slot_classes


def test_slot_forest_and_boundary():
    t = random_tree(300, 3, seed=13)
    decomp = partition_subtrees(t, 20)
    split = split_connector(t, decomp)
    out = assign_slots(split, r=2, epsilon=0.35, n=80, seed=3)
    all_edges = set()
    for s in range(2):
        forest = out.slot_forest(s)
        for u, v in forest["edges"]:
            assert u in split.bulk and v in split.bulk
            all_edges.add((min(u, v), max(u, v)))
    # bulk-bulk tree edges are exactly the union of the slot forests
    expect = {
        (min(v, p), max(v, p))
        for v, p in t.edges()
        if v in split.bulk and p in split.bulk
    }
    assert all_edges == expect
    boundary = out.boundary_vertices()
    for y in boundary:
        assert y in split.bulk
        assert any(u in split.connector for u in t.neighbors(y))


def test_merge_trees():
    a = random_tree(20, 3, seed=1)
    b = random_tree(15, 3, seed=2)
    merged, added = merge_trees(a, b, max_degree=3)
    assert merged.n == 35
    assert added == 1
    assert merged.max_degree() <= 3
    assert merged.edge_count() == 34

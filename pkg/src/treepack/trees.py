"""Rooted trees, decomposition into rooted subtrees, and the connector split.

partition_subtrees cuts a rooted tree into vertex-disjoint rooted pieces of
size between t and 2*Delta*t (bottom-up greedy; an undersized remainder at
the root is absorbed into an adjacent piece, which keeps the upper bound
because the remainder and each pending child subtree carry weight below t).

split_connector takes the piece roots together with their children and
grandchildren inside their pieces as the connector C; the rest is the bulk
forest F.  By construction a piece root's only possible F-neighbor is its
parent and depth-1 connector vertices have no F-neighbors at all; both facts
are asserted.

assign_slots draws one slot pair (s, i) per piece and routes the piece's two
bulk parity classes into the classes X[(s, i)] and X[(s, 1-i)].  The
per-class size window is centered on the bulk share |F|/(2r): the connector
is a constant fraction of a desk-scale tree, so centering on |V|/(2r) would
make the window unsatisfiable.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .errors import InternalError, ParameterError, ProbabilisticFailure
from .rng import make_rng

SLOT_RETRY_BUDGET = 50


class RootedTree:
    """Tree on vertices 0..n-1 with a parent map; parent[root] is None."""

    __slots__ = ("n", "root", "parent", "children", "depth")

    def __init__(self, n: int, root: int, parent: list[int | None]):
        if n < 1:
            raise ParameterError("tree needs at least one vertex")
        if not 0 <= root < n or len(parent) != n or parent[root] is not None:
            raise ParameterError("malformed root/parent data")
        self.n = n
        self.root = root
        self.parent = list(parent)
        self.children: list[list[int]] = [[] for _ in range(n)]
        for v, p in enumerate(self.parent):
            if p is None:
                continue
            if not 0 <= p < n:
                raise ParameterError(f"parent of {v} out of range")
            self.children[p].append(v)
        self.depth = [-1] * n
        self.depth[root] = 0
        queue = deque([root])
        seen = 1
        while queue:
            u = queue.popleft()
            for c in self.children[u]:
                if self.depth[c] != -1:
                    raise ParameterError("parent map contains a cycle")
                self.depth[c] = self.depth[u] + 1
                seen += 1
                queue.append(c)
        if seen != n:
            raise ParameterError("parent map is not connected")

    def degree(self, v: int) -> int:
        return len(self.children[v]) + (0 if v == self.root else 1)

    def max_degree(self) -> int:
        return max(self.degree(v) for v in range(self.n))

    def neighbors(self, v: int) -> list[int]:
        out = list(self.children[v])
        if self.parent[v] is not None:
            out.append(self.parent[v])
        return out

    def edges(self) -> list[tuple[int, int]]:
        return [(v, p) for v, p in enumerate(self.parent) if p is not None]

    def edge_count(self) -> int:
        return self.n - 1

    # serialization: "n root" header then one "child parent" line per edge

    def to_text(self) -> str:
        lines = [f"{self.n} {self.root}"]
        lines.extend(f"{v} {p}" for v, p in self.edges())
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RootedTree":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ParameterError("empty tree file")
        n, root = map(int, lines[0].split())
        parent: list[int | None] = [None] * n
        for ln in lines[1:]:
            child, par = map(int, ln.split())
            parent[child] = par
        return cls(n, root, parent)


def path_tree(n: int) -> RootedTree:
    """Path v0 - v1 - ... - v(n-1) rooted at v0."""
    return RootedTree(n, 0, [None] + list(range(n - 1)))


def complete_ternary(height: int) -> RootedTree:
    if height < 0:
        raise ParameterError("height must be non-negative")
    n = (3 ** (height + 1) - 1) // 2
    parent: list[int | None] = [None] + [(v - 1) // 3 for v in range(1, n)]
    return RootedTree(n, 0, parent)


def random_tree(n: int, max_degree: int, seed: int) -> RootedTree:
    """Uniform attachment with a degree cap: each new vertex picks a uniform
    parent among vertices that still have spare degree."""
    if n < 1:
        raise ParameterError("n must be positive")
    if max_degree < 2 and n > 2:
        raise ParameterError("max_degree below 2 only fits paths of length <= 1")
    rng = make_rng(seed)
    parent: list[int | None] = [None] * n
    open_slots = {0: max_degree}
    for v in range(1, n):
        p = rng.choice(list(open_slots))
        parent[v] = p
        open_slots[p] -= 1
        if open_slots[p] == 0:
            del open_slots[p]
        open_slots[v] = max_degree - 1
    return RootedTree(n, 0, parent)


def reroot(tree: RootedTree, new_root: int) -> list[int | None]:
    """Parent map of the same tree rooted at new_root."""
    parent: list[int | None] = list(tree.parent)
    chain = []
    v = new_root
    while v is not None:
        chain.append(v)
        v = tree.parent[v]
    for child, par in zip(chain, chain[1:]):
        parent[par] = child
    parent[new_root] = None
    return parent


def merge_trees(a: RootedTree, b: RootedTree, max_degree: int) -> tuple[RootedTree, int]:
    """Join two trees by a single new edge, keeping the degree cap.

    The join lands on the roots when both have spare degree, otherwise on the
    lowest-index vertices that do.  Returns the merged tree (a's labels kept,
    b shifted by a.n) and the number of added edges (always 1).
    """
    def spare(t: RootedTree):
        if t.degree(t.root) < max_degree:
            return t.root
        for v in range(t.n):
            if t.degree(v) < max_degree:
                return v
        raise ParameterError("no vertex with spare degree; cannot merge")

    ua, ub = spare(a), spare(b)
    parent: list[int | None] = list(a.parent) + [None] * b.n
    b_parent = reroot(b, ub)
    for v in range(b.n):
        p = b_parent[v]
        parent[a.n + v] = None if p is None else a.n + p
    parent[a.n + ub] = ua
    return RootedTree(a.n + b.n, a.root, parent), 1


@dataclass
class SubtreeDecomposition:
    """Vertex-disjoint rooted pieces covering the tree; sizes in [t, 2*Delta*t]."""

    tree: RootedTree
    t: int
    pieces: list[tuple[int, frozenset[int]]]

    def piece_of(self) -> dict[int, int]:
        owner = {}
        for idx, (_, verts) in enumerate(self.pieces):
            for v in verts:
                owner[v] = idx
        return owner


def partition_subtrees(tree: RootedTree, t: int) -> SubtreeDecomposition:
    """Bottom-up greedy cut realizing the [t, 2*Delta*t] size window.

    Walking vertices by decreasing depth, a piece is cut as soon as the
    pending weight at a vertex reaches t; pending child subtrees each weigh
    less than t, so no piece exceeds 1 + Delta*(t-1).  Trees smaller than t
    come back as a single undersized piece.
    """
    if t < 1:
        raise ParameterError("t must be >= 1")
    n = tree.n
    order = sorted(range(n), key=lambda v: -tree.depth[v])
    weight = [1] * n
    is_cut = [False] * n
    pieces: list[tuple[int, frozenset[int]]] = []

    def collect(root: int) -> frozenset[int]:
        out = []
        stack = [root]
        while stack:
            v = stack.pop()
            out.append(v)
            stack.extend(c for c in tree.children[v] if not is_cut[c])
        return frozenset(out)

    for v in order:
        w = 1 + sum(weight[c] for c in tree.children[v] if not is_cut[c])
        if w >= t:
            is_cut[v] = True
            pieces.append((v, collect(v)))
        else:
            weight[v] = w
    if not is_cut[tree.root]:
        remainder = collect(tree.root)
        if not pieces:
            pieces.append((tree.root, remainder))
        else:
            # absorb into a piece whose root hangs off the remainder
            target = None
            for idx, (proot, _) in enumerate(pieces):
                if tree.parent[proot] in remainder:
                    if target is None or proot < pieces[target][0]:
                        target = idx
            if target is None:
                raise InternalError("remainder has no adjacent piece")
            proot, verts = pieces[target]
            pieces[target] = (tree.root, verts | remainder)
    return SubtreeDecomposition(tree, t, pieces)


def piece_bipartition(tree: RootedTree, root: int, verts: frozenset[int]) -> tuple[set[int], set[int]]:
    """Parity classes of the piece relative to its root (root in the A side)."""
    side_a, side_b = set(), set()
    queue = deque([(root, 0)])
    while queue:
        v, par = queue.popleft()
        (side_a if par == 0 else side_b).add(v)
        for c in tree.children[v]:
            if c in verts:
                queue.append((c, par ^ 1))
    return side_a, side_b


def bipartition(tree: RootedTree, x: int) -> tuple[set[int], set[int]]:
    """The tree's unique two-coloring with x's class first."""
    if not 0 <= x < tree.n:
        raise ParameterError("vertex out of range")
    px = tree.depth[x] % 2
    side_a = {v for v in range(tree.n) if tree.depth[v] % 2 == px}
    side_b = set(range(tree.n)) - side_a
    return side_a, side_b


@dataclass
class TreeSplit:
    """Connector/bulk split of one tree plus (optional) slot assignment."""

    tree: RootedTree
    decomposition: SubtreeDecomposition
    c0: frozenset[int]
    c1: frozenset[int]
    c2: frozenset[int]
    connector: frozenset[int]
    bulk: frozenset[int]
    # per piece: the two bulk parity sides (A side contains the piece root's
    # class), already restricted to F
    piece_bulk_sides: list[tuple[frozenset[int], frozenset[int]]]
    slot_count: int | None = None
    slot_of_piece: list[tuple[int, int]] | None = None
    slot_classes: dict[tuple[int, int], frozenset[int]] = field(default_factory=dict)

    def boundary_vertices(self) -> set[int]:
        """Bulk vertices with at least one connector neighbor."""
        out = set()
        for v in self.bulk:
            if any(u in self.connector for u in self.tree.neighbors(v)):
                out.add(v)
        return out

    def class_of_vertex(self) -> dict[int, tuple[int, int]]:
        owner = {}
        for key, verts in self.slot_classes.items():
            for v in verts:
                owner[v] = key
        return owner

    def slot_forest(self, s: int) -> dict:
        """Bulk forest routed to slot s: class vertex sets and tree edges."""
        if self.slot_of_piece is None:
            raise ParameterError("slots not assigned yet")
        x = {0: set(self.slot_classes.get((s, 0), ())), 1: set(self.slot_classes.get((s, 1), ()))}
        verts = x[0] | x[1]
        edges = [
            (v, self.tree.parent[v])
            for v in verts
            if self.tree.parent[v] in verts
        ]
        return {"x": x, "vertices": verts, "edges": edges}


def split_connector(tree: RootedTree, decomposition: SubtreeDecomposition) -> TreeSplit:
    """Compute connector layers C0, C1, C2 and the bulk forest.

    Raises InternalError if the decomposition breaks the structural facts
    the downstream embedding relies on (depth-1 vertices touching the bulk,
    or a piece root with a non-parent bulk neighbor).
    """
    if decomposition.tree is not tree:
        raise ParameterError("decomposition does not belong to this tree")
    c0, c1, c2 = set(), set(), set()
    piece_sides: list[tuple[frozenset[int], frozenset[int]]] = []
    for root, verts in decomposition.pieces:
        c0.add(root)
        layer1 = [c for c in tree.children[root] if c in verts]
        c1.update(layer1)
        for u in layer1:
            c2.update(c for c in tree.children[u] if c in verts)
    connector = c0 | c1 | c2
    bulk = frozenset(range(tree.n)) - connector
    for root, verts in decomposition.pieces:
        side_a, side_b = piece_bipartition(tree, root, verts)
        piece_sides.append((frozenset(side_a - connector), frozenset(side_b - connector)))

    for x in c0:
        for u in tree.neighbors(x):
            if u in bulk and u != tree.parent[x]:
                raise InternalError(f"piece root {x} has bulk neighbor {u} besides its parent")
    for v in c1:
        if any(u in bulk for u in tree.neighbors(v)):
            raise InternalError(f"depth-1 connector vertex {v} touches the bulk")

    return TreeSplit(
        tree=tree,
        decomposition=decomposition,
        c0=frozenset(c0),
        c1=frozenset(c1),
        c2=frozenset(c2),
        connector=frozenset(connector),
        bulk=bulk,
        piece_bulk_sides=piece_sides,
    )


def assign_slots(split: TreeSplit, r: int, epsilon: float, n: int, seed: int) -> TreeSplit:
    """Draw a slot pair (s, i) per piece, uniformly and independently, and
    retry until every class size lies within |F|/(2r) +- epsilon*n.

    n is the block size of the eventual host, not the tree size.  After
    SLOT_RETRY_BUDGET failures the observed spread is reported.
    """
    if r < 1:
        raise ParameterError("r must be >= 1")
    center = len(split.bulk) / (2 * r)
    tol = epsilon * n
    worst: list[tuple[int, int]] = []
    for attempt in range(SLOT_RETRY_BUDGET):
        rng = make_rng(seed, attempt)
        draws = [(rng.randrange(r), rng.randrange(2)) for _ in split.decomposition.pieces]
        classes: dict[tuple[int, int], set[int]] = {
            (s, i): set() for s in range(r) for i in range(2)
        }
        for (s, i), (side_a, side_b) in zip(draws, split.piece_bulk_sides):
            classes[(s, i)].update(side_a)
            classes[(s, 1 - i)].update(side_b)
        sizes = [len(v) for v in classes.values()]
        if all(abs(size - center) <= tol for size in sizes):
            return TreeSplit(
                tree=split.tree,
                decomposition=split.decomposition,
                c0=split.c0,
                c1=split.c1,
                c2=split.c2,
                connector=split.connector,
                bulk=split.bulk,
                piece_bulk_sides=split.piece_bulk_sides,
                slot_count=r,
                slot_of_piece=draws,
                slot_classes={k: frozenset(v) for k, v in classes.items()},
            )
        worst.append((min(sizes), max(sizes)))
    raise ProbabilisticFailure(
        f"slot assignment missed the window {center:.1f} +- {tol:.1f} "
        f"{SLOT_RETRY_BUDGET} times",
        attempts=SLOT_RETRY_BUDGET,
        stats={"center": center, "tolerance": tol, "observed_min_max": worst},
    )

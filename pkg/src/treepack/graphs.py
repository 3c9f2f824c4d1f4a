"""Graph core: bitset-adjacency graphs, generators, and bipartite-hole oracles.

An (s,t)-bipartite hole is a pair of disjoint vertex sets S, T with |S| = s,
|T| = t and no edge between S and T.  The bi-independence number of a graph
is the largest r such that an (s,t)-hole exists for every split s + t = r;
splits with an empty side count vacuously, so a complete graph has value 1.

Adjacency is stored as one Python int bitmask per vertex, which makes the
hot queries (common neighborhoods, degrees into a set) single AND/popcount
operations.  Vertex counts are capped at 2**16.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .errors import ParameterError, ProbabilisticFailure, SizeError
from .rng import make_rng, mix_seed

MAX_VERTICES = 1 << 16

# Largest vertex count for which the exact hole/bi-independence search runs;
# 2**n subset enumeration stays bounded up to here.
EXACT_THRESHOLD = 14

RETRY_BUDGET = 20


def bits(mask: int):
    """Iterate indices of set bits in ascending order."""
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def mask_of(vertices) -> int:
    m = 0
    for v in vertices:
        m |= 1 << v
    return m


class Graph:
    """Undirected simple graph on vertices 0..n-1 with bitset adjacency rows."""

    __slots__ = ("n", "adj")

    def __init__(self, n: int, adj: list[int] | None = None):
        if n < 0 or n > MAX_VERTICES:
            raise ParameterError(f"vertex count {n} outside [0, {MAX_VERTICES}]")
        self.n = n
        self.adj = list(adj) if adj is not None else [0] * n
        if len(self.adj) != n:
            raise ParameterError("adjacency row count does not match n")

    @classmethod
    def from_edges(cls, n: int, edges) -> "Graph":
        g = cls(n)
        for u, v in edges:
            g._add_edge(u, v)
        return g

    def _add_edge(self, u: int, v: int) -> None:
        if u == v:
            raise ParameterError(f"self-loop at {u}")
        if not (0 <= u < self.n and 0 <= v < self.n):
            raise ParameterError(f"edge ({u},{v}) out of range")
        self.adj[u] |= 1 << v
        self.adj[v] |= 1 << u

    def has_edge(self, u: int, v: int) -> bool:
        return bool(self.adj[u] >> v & 1)

    def degree(self, v: int) -> int:
        return self.adj[v].bit_count()

    def degree_in(self, v: int, mask: int) -> int:
        """Number of neighbors of v inside the vertex set given as a bitmask."""
        return (self.adj[v] & mask).bit_count()

    def neighbors(self, v: int) -> list[int]:
        return list(bits(self.adj[v]))

    def neighborhood_union(self, mask: int) -> int:
        out = 0
        for v in bits(mask):
            out |= self.adj[v]
        return out

    def edge_count(self) -> int:
        return sum(row.bit_count() for row in self.adj) // 2

    def edges(self):
        """Edges as (u, v) with u < v, lexicographic order."""
        for u in range(self.n):
            upper = self.adj[u] >> (u + 1) << (u + 1)
            for v in bits(upper):
                yield (u, v)

    def count_edges_between(self, mask_a: int, mask_b: int) -> int:
        """Crossing edges between two disjoint vertex-set masks."""
        return sum((self.adj[u] & mask_b).bit_count() for u in bits(mask_a))

    def max_degree(self) -> int:
        return max((row.bit_count() for row in self.adj), default=0)

    def union(self, other: "Graph") -> "Graph":
        if other.n != self.n:
            raise ParameterError("union requires equal vertex counts")
        return Graph(self.n, [a | b for a, b in zip(self.adj, other.adj)])

    def minus_edges(self, edges) -> "Graph":
        g = Graph(self.n, self.adj)
        for u, v in edges:
            g.adj[u] &= ~(1 << v)
            g.adj[v] &= ~(1 << u)
        return g

    def overlaps(self, other: "Graph") -> bool:
        return any(a & b for a, b in zip(self.adj, other.adj))

    def copy(self) -> "Graph":
        return Graph(self.n, self.adj)

    def __eq__(self, other) -> bool:
        return isinstance(other, Graph) and self.n == other.n and self.adj == other.adj

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, m={self.edge_count()})"

    # -- serialization: "n m" header then "u v" lines, u < v, lexicographic --

    def to_text(self) -> str:
        lines = [f"{self.n} {self.edge_count()}"]
        lines.extend(f"{u} {v}" for u, v in self.edges())
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "Graph":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ParameterError("empty graph file")
        n, m = map(int, lines[0].split())
        g = cls(n)
        if len(lines) - 1 != m:
            raise ParameterError(f"expected {m} edge lines, found {len(lines) - 1}")
        for ln in lines[1:]:
            u, v = map(int, ln.split())
            if u >= v:
                raise ParameterError(f"edge line '{ln}' not in u < v form")
            g._add_edge(u, v)
        return g

    @classmethod
    def read(cls, path) -> "Graph":
        with open(path) as fh:
            return cls.from_text(fh.read())


@dataclass
class HoleQuery:
    """Result of a bipartite-hole search.

    status is "hole" (witness attached), "none" (exhaustive search proved
    absence), or "unknown" (randomized search found nothing).
    """

    s: int
    t: int
    status: str
    witness: tuple[tuple[int, ...], tuple[int, ...]] | None = None

    def __post_init__(self):
        if self.witness is not None:
            side_s, side_t = self.witness
            if len(side_s) != self.s or len(side_t) != self.t:
                raise ParameterError("witness sides have wrong sizes")
            if set(side_s) & set(side_t):
                raise ParameterError("witness sides intersect")

    @property
    def found(self) -> bool:
        return self.status == "hole"


@dataclass(frozen=True)
class PerturbSpec:
    """Base graph plus binomial noise on the same vertex set."""

    base: Graph
    edge_probability: float
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.edge_probability <= 1.0:
            raise ParameterError("edge_probability outside [0,1]")


def _check_hole_witness(g: Graph, mask_s: int, mask_t: int) -> bool:
    return all((g.adj[u] & mask_t) == 0 for u in bits(mask_s))


def _hole_witness(g: Graph, s: int, t: int, mask_s: int, free: int) -> HoleQuery:
    side_t = tuple(itertools.islice(bits(free), t))
    return HoleQuery(s, t, "hole", (tuple(bits(mask_s)), side_t))


def bipartite_hole_exists(
    g: Graph,
    s: int,
    t: int,
    exact_threshold: int = EXACT_THRESHOLD,
    trials: int = 2000,
    seed: int = 0,
) -> HoleQuery:
    """Search for an (s,t)-bipartite hole.

    Exact for graphs up to exact_threshold vertices (enumerating the smaller
    side and taking the full non-neighborhood for the other); above that a
    randomized search returns a witness or "unknown", never "none".
    """
    if s < 0 or t < 0:
        raise ParameterError("hole sides must be non-negative")
    if s + t > g.n:
        raise ParameterError(f"s+t = {s + t} exceeds vertex count {g.n}")
    if s == 0 or t == 0:
        # one side empty: vacuous hole
        verts = tuple(range(s + t))
        return HoleQuery(s, t, "hole", (verts[:s], verts[s:]))

    # enumerate over the smaller side; holes are symmetric under side swap
    swap = s > t
    a, b = (t, s) if swap else (s, t)

    if g.n <= exact_threshold:
        for combo in itertools.combinations(range(g.n), a):
            mask_a = mask_of(combo)
            free = ~(mask_a | g.neighborhood_union(mask_a)) & ((1 << g.n) - 1)
            if free.bit_count() >= b:
                q = _hole_witness(g, a, b, mask_a, free)
                if swap:
                    return HoleQuery(s, t, "hole", (q.witness[1], q.witness[0]))
                return HoleQuery(s, t, "hole", q.witness)
        return HoleQuery(s, t, "none")

    rng = make_rng(seed)
    verts = range(g.n)
    for _ in range(trials):
        combo = rng.sample(verts, a)
        mask_a = mask_of(combo)
        free = ~(mask_a | g.neighborhood_union(mask_a)) & ((1 << g.n) - 1)
        if free.bit_count() >= b:
            q = _hole_witness(g, a, b, mask_a, free)
            if swap:
                return HoleQuery(s, t, "hole", (q.witness[1], q.witness[0]))
            return HoleQuery(s, t, "hole", q.witness)
    return HoleQuery(s, t, "unknown")


def _max_free_by_side(g: Graph) -> list[int]:
    """max_free[s] = largest non-neighborhood size over all s-subsets S.

    cover(S) = S together with every neighbor of S; computed for all 2**n
    subsets by peeling the lowest bit.
    """
    n = g.n
    cover = [0] * (1 << n)
    best = [0] * (n + 1)
    best[0] = n
    for mask in range(1, 1 << n):
        low = mask & -mask
        v = low.bit_length() - 1
        cover[mask] = cover[mask ^ low] | g.adj[v] | low
        s = mask.bit_count()
        free = n - cover[mask].bit_count()
        if free > best[s]:
            best[s] = free
    return best


def bi_independence_exact(g: Graph) -> int:
    """Exact bi-independence number by subset enumeration (n <= 14)."""
    if g.n > EXACT_THRESHOLD:
        raise SizeError(
            f"{g.n} vertices exceed the exact threshold {EXACT_THRESHOLD}; "
            "use bi_independence_upper_sample"
        )
    if g.n == 0:
        return 0
    best = _max_free_by_side(g)
    # r feasible iff every split s+t=r admits a hole; a hole for (s,t) with
    # s >= 1 exists iff t <= best[s], and s = 0 is vacuous.
    for r in range(1, g.n + 1):
        for s in range(1, r + 1):
            if s > g.n:
                return r - 1
            if r - s > best[s]:
                return r - 1
    return g.n


@dataclass
class SampleVerdict:
    """Outcome of the Monte-Carlo hole search for a split r = ceil + floor."""

    r: int
    status: str  # "hole found" | "refuted"
    trials: int
    witness: tuple[tuple[int, ...], tuple[int, ...]] | None = None


def bi_independence_upper_sample(g: Graph, r: int, trials: int, seed: int) -> SampleVerdict:
    """Sample disjoint (ceil(r/2), floor(r/2)) pairs hunting for a hole.

    Each trial grows the S side inside the non-neighborhood of a random seed
    vertex (sparse corners are where holes live), then checks whether the
    full non-neighborhood of S still has room for the T side.  "refuted"
    after all trials is statistical evidence that the bi-independence number
    is below r.
    """
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    if r < 1 or r > g.n:
        raise ParameterError(f"r = {r} outside [1, n = {g.n}]")
    s, t = (r + 1) // 2, r // 2
    if t == 0:
        verts = tuple(range(s))
        return SampleVerdict(r, "hole found", 0, (verts, ()))

    full = (1 << g.n) - 1
    rng = make_rng(seed)
    for trial in range(trials):
        anchor = rng.randrange(g.n)
        pool = ~(g.adj[anchor] | (1 << anchor)) & full
        pool_list = list(bits(pool))
        if len(pool_list) >= s - 1:
            side_s = [anchor] + rng.sample(pool_list, s - 1)
        else:
            side_s = rng.sample(range(g.n), s)
        mask_s = mask_of(side_s)
        free = ~(mask_s | g.neighborhood_union(mask_s)) & full
        free_list = list(bits(free))
        if len(free_list) >= t:
            side_t = rng.sample(free_list, t)
            return SampleVerdict(
                r, "hole found", trial + 1, (tuple(sorted(side_s)), tuple(sorted(side_t)))
            )
    return SampleVerdict(r, "refuted", trials)


def highly_connecting_check(g: Graph, W, W2, eta: float) -> set[int]:
    """Vertices of W with fewer than eta**(-1/2) neighbors in W2.

    Under the bi-independence hypothesis (value <= eta * n) the returned set
    has size at most 2 * eta * n; the caller asserts that side.
    """
    w_list = list(W)
    mask_w2 = mask_of(W2)
    lower = 2 * eta ** (1 / 3) * g.n
    if len(w_list) < lower or mask_w2.bit_count() < lower:
        raise ParameterError(
            f"|W|, |W2| must be >= 2*eta^(1/3)*n = {lower:.1f}"
        )
    threshold = eta ** (-1 / 2)
    return {w for w in w_list if g.degree_in(w, mask_w2) < threshold}


def sparsify_preserving_holes(g: Graph, xi: float, eta: float, seed: int) -> Graph:
    """Keep each edge with probability xi/2, retrying until max degree <= xi*n.

    The eta parameter records the caller's hypothesis (bi-independence at
    most eta*n) under which the survivor keeps small bi-independence; it is
    not checked here.  Retries derive fresh seeds by counter-mixing; after
    RETRY_BUDGET failures a ProbabilisticFailure carries the attempt count.
    """
    del eta  # caller-side hypothesis only
    if not 0.0 <= xi <= 1.0:
        raise ParameterError("xi outside [0,1]")
    cap = xi * g.n
    keep_p = xi / 2
    observed = []
    for attempt in range(RETRY_BUDGET):
        rng = make_rng(seed, attempt)
        h = Graph(g.n)
        for u, v in g.edges():
            if rng.random() < keep_p:
                h._add_edge(u, v)
        if h.max_degree() <= cap:
            return h
        observed.append(h.max_degree())
    raise ProbabilisticFailure(
        f"sparsify: max degree stayed above {cap:.1f} after {RETRY_BUDGET} attempts",
        attempts=RETRY_BUDGET,
        stats={"max_degrees": observed, "cap": cap},
    )


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def erdos_renyi(n: int, p: float, seed: int) -> Graph:
    """Binomial random graph; sampled per row via binomial counts for speed."""
    if n < 0:
        raise ParameterError("n must be non-negative")
    if not 0.0 <= p <= 1.0:
        raise ParameterError("p outside [0,1]")
    g = Graph(n)
    rng = make_rng(seed)
    if p == 0.0 or n < 2:
        return g
    if p >= 0.2:
        for u in range(n):
            for v in range(u + 1, n):
                if rng.random() < p:
                    g._add_edge(u, v)
        return g
    # sparse regime: choose Binomial(m, p) partners among later vertices
    for u in range(n - 1):
        m = n - 1 - u
        k = sum(1 for _ in range(m) if rng.random() < p)
        if k:
            for v in rng.sample(range(u + 1, n), k):
                g._add_edge(u, v)
    return g


def complete(n: int) -> Graph:
    g = Graph(n)
    full = (1 << n) - 1
    g.adj = [full ^ (1 << v) for v in range(n)]
    return g


def complete_bipartite(a: int, b: int) -> Graph:
    if a < 0 or b < 0:
        raise ParameterError("part sizes must be non-negative")
    g = Graph(a + b)
    mask_a = (1 << a) - 1
    mask_b = ((1 << (a + b)) - 1) ^ mask_a
    for v in range(a):
        g.adj[v] = mask_b
    for v in range(a, a + b):
        g.adj[v] = mask_a
    return g


def two_cliques(m: int) -> Graph:
    """Disjoint union of two complete graphs on m vertices each."""
    if m < 0:
        raise ParameterError("m must be non-negative")
    g = Graph(2 * m)
    first = (1 << m) - 1
    second = ((1 << (2 * m)) - 1) ^ first
    for v in range(m):
        g.adj[v] = first ^ (1 << v)
    for v in range(m, 2 * m):
        g.adj[v] = second ^ (1 << v)
    return g


def unbalanced_noisy_bipartite(n: int, xi: float, seed: int) -> tuple[Graph, tuple[int, ...], tuple[int, ...]]:
    """Complete bipartite on parts of size (1-xi)n/2 and (1+xi)n/2 with
    internal binomial noise of density xi/2 in each part.

    Returns (graph, smaller_part, larger_part); spanning paths in this host
    are forced to spend about xi*n edges inside the larger part.
    """
    if n < 2:
        raise ParameterError("n must be at least 2")
    if not 0.0 < xi < 1.0:
        raise ParameterError("xi must lie strictly between 0 and 1")
    a = round((1 - xi) * n / 2)
    b = n - a
    g = complete_bipartite(a, b)
    rng = make_rng(seed)
    p = xi / 2
    for part in (range(a), range(a, n)):
        verts = list(part)
        for i, u in enumerate(verts):
            for v in verts[i + 1:]:
                if rng.random() < p:
                    g._add_edge(u, v)
    return g, tuple(range(a)), tuple(range(a, n))


def perturbed(spec: PerturbSpec) -> Graph:
    """Union of the base graph and a fresh binomial graph on its vertices."""
    noise = erdos_renyi(spec.base.n, spec.edge_probability, spec.seed)
    return spec.base.union(noise)


def ternary_tree_graph(height: int) -> Graph:
    """Complete rooted 3-ary tree of the given height, as a graph."""
    if height < 0:
        raise ParameterError("height must be non-negative")
    n = (3 ** (height + 1) - 1) // 2
    g = Graph(n)
    for v in range(1, n):
        g._add_edge(v, (v - 1) // 3)
    return g


# ---------------------------------------------------------------------------
# spanning path search (rotation-extension), used by the sharpness audits
# ---------------------------------------------------------------------------


def find_spanning_path(g: Graph, seed: int, restarts: int = 40, steps: int = 20000) -> list[int] | None:
    """Hamilton path by randomized rotation-extension; None if the budget runs out."""
    if g.n == 0:
        return None
    if g.n == 1:
        return [0]
    for restart in range(restarts):
        rng = make_rng(seed, restart)
        path = [rng.randrange(g.n)]
        on_path = 1 << path[0]
        budget = steps
        while len(path) < g.n and budget > 0:
            budget -= 1
            end = path[-1]
            fresh = g.adj[end] & ~on_path
            if fresh:
                choices = list(bits(fresh))
                v = choices[rng.randrange(len(choices))]
                path.append(v)
                on_path |= 1 << v
                continue
            # rotate: an edge from the end into the path interior flips a suffix
            nbrs = [v for v in bits(g.adj[end] & on_path) if v != path[-2]]
            if not nbrs:
                break
            pivot = nbrs[rng.randrange(len(nbrs))]
            i = path.index(pivot)
            path[i + 1:] = reversed(path[i + 1:])
        if len(path) == g.n:
            return path
    return None

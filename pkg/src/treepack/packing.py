"""Packing engine: connector embedding, forest batching, blow-up packing.

One batch of the matching structure hosts one collection of trees.  Each
tree is cut into rooted pieces; the piece roots with their children and
grandchildren (the connector) embed into the small hub slots U, walking
pieces ancestor-first and choosing images by the three-case rule on where
the piece root's parent lives (connector / nonexistent / bulk).  The bulk
forest classes X[(s, i)] then embed into the large slots V[s][i] via a
regular-container stand-in (forests packed edge-disjointly into an exactly
q-regular bipartite graph) followed by a randomized blow-up stand-in whose
output is checked against three contracts: side-respecting images, boundary
vertices landing in their target sets, and conflict-distinct images across
sub-batches.

Invariants maintained throughout: at most M connector images per hub vertex,
per-tree injectivity, and host edges consumed at most once (availability
bitmasks shared by every stage of a batch).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

from .errors import (
    EmbeddingFailure,
    InternalError,
    ParameterError,
    ProbabilisticFailure,
    StructuralError,
)
from .graphs import Graph, bits, mask_of
from .rng import make_rng, mix_seed
from .structure import MatchingBatch, MatchingStructure
from .trees import RootedTree, TreeSplit, assign_slots, merge_trees, partition_subtrees, split_connector

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class PipelineConfig:
    """Desk-scale pipeline parameters.

    The asymptotic hierarchy 1/n << eta << epsilon << xi << 1/t << nu, alpha
    is checked as a chain of soft ratio bounds (warnings, not errors): the
    exponent-laden thresholds it feeds are evaluated literally and replaced
    by documented desk alternatives when they exceed the instance size, with
    every substitution logged.
    """

    alpha: float = 0.5
    nu: float = 0.25
    Delta: int = 3
    xi: float = 0.2
    eta: float = 1e-4
    epsilon: float = 0.05
    d: float = 0.5
    t: int = 2
    M: int = 20
    r: int = 3
    q: int = 6
    zeta: float = 0.05
    piece_size: int = 90
    slot_epsilon: float = 0.3
    n_bullet: int | None = None
    kappa: int | None = None
    seed: int = 0
    deterministic_choice: bool = False
    slot_retry: int = 4
    blowup_retry: int = 12
    forest_retry: int = 8

    def validate(self, n: int | None = None) -> list[str]:
        if not 0 < self.alpha < 1 or not 0 < self.nu < 1:
            raise ParameterError("alpha and nu must lie in (0,1)")
        if self.Delta < 1 or self.t < 1 or self.M < 2 or self.r < 1:
            raise ParameterError("Delta, t, M, r must be positive (M >= 2)")
        if not 0 < self.epsilon < 1 or not 0 < self.d <= 1:
            raise ParameterError("epsilon in (0,1) and d in (0,1] required")
        if self.q < self.Delta:
            raise ParameterError("q must be at least the tree degree bound")
        if not 0 < self.zeta < 0.25:
            raise ParameterError("zeta must lie in (0, 0.25)")
        warnings = []
        chain = [
            ("eta", self.eta, "epsilon", self.epsilon),
            ("epsilon", self.epsilon, "xi", self.xi),
            ("xi", self.xi, "1/t", 1 / self.t),
            ("1/t", 1 / self.t, "nu", self.nu),
            ("1/t", 1 / self.t, "alpha", self.alpha),
        ]
        for small_name, small, big_name, big in chain:
            if small > 0.5 * big:
                warnings.append(
                    f"hierarchy slack violated: {small_name}={small:.4g} "
                    f"> 0.5*{big_name}={big:.4g}"
                )
        if n is not None and 1 / n > 0.5 * self.eta:
            warnings.append(f"hierarchy slack violated: 1/n > 0.5*eta for n={n}")
        for w in warnings:
            log.warning("config: %s", w)
        return warnings

    def hub_degree_threshold(self, u_min: int) -> int:
        """Minimum hub cross-degree required of depth-1 connector images.

        The nominal M^2 exceeds desk-scale hub slots, in which case a
        substitute of max(2*Delta, u_min // 3) is used and logged.
        """
        nominal = self.M * self.M
        if nominal <= u_min // 2:
            return nominal
        sub = max(2 * self.Delta, min(nominal, u_min // 3))
        log.warning(
            "hub degree threshold M^2 = %d exceeds hub slot %d; substituting %d",
            nominal, u_min, sub,
        )
        return sub

    def hub_degree_cap(self, k: int) -> float:
        """Per-batch cap on accumulated hub-edge degree after k batches.

        The nominal eta^(-1/70) * k collapses below the per-batch Delta*M
        bound at desk scale; the effective cap takes the larger and logs
        the substitution once.
        """
        nominal = self.eta ** (-1 / 70) * k
        derived = self.Delta * self.M * k
        if nominal < derived:
            log.debug(
                "hub degree cap eta^(-1/70)*k = %.1f below the derived %d; using it",
                nominal, derived,
            )
        return max(nominal, derived)


# ---------------------------------------------------------------------------
# availability and state
# ---------------------------------------------------------------------------


class EdgeAvailability:
    """Mutable bitmask adjacency of edges still free for a batch."""

    __slots__ = ("n", "rows")

    def __init__(self, n: int, rows: list[int]):
        self.n = n
        self.rows = rows

    @classmethod
    def from_edges(cls, n: int, edge_iters) -> "EdgeAvailability":
        rows = [0] * n
        for edges in edge_iters:
            for u, v in edges:
                rows[u] |= 1 << v
                rows[v] |= 1 << u
        return cls(n, rows)

    def has(self, u: int, v: int) -> bool:
        return bool(self.rows[u] >> v & 1)

    def consume(self, u: int, v: int) -> None:
        if not self.has(u, v):
            raise InternalError(f"edge ({u},{v}) consumed twice or never available")
        self.rows[u] &= ~(1 << v)
        self.rows[v] &= ~(1 << u)

    def restore_edge(self, u: int, v: int) -> None:
        self.rows[u] |= 1 << v
        self.rows[v] |= 1 << u

    def snapshot(self) -> list[int]:
        return list(self.rows)

    def restore(self, snap: list[int]) -> None:
        self.rows = list(snap)


def edge_key(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


@dataclass
class PackingState:
    """Partial packing: per-unit vertex maps plus global bookkeeping."""

    units: dict[int, tuple[RootedTree, dict[int, int]]] = field(default_factory=dict)
    used_edges: set[tuple[int, int]] = field(default_factory=set)
    hub_usage: dict[int, int] = field(default_factory=dict)
    hub_edge_batches: list[set[tuple[int, int]]] = field(default_factory=list)
    merge_log: list[dict] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)

    def hub_edges_used(self) -> set[tuple[int, int]]:
        out: set[tuple[int, int]] = set()
        for batch in self.hub_edge_batches:
            out |= batch
        return out

    def snapshot(self) -> dict:
        return {
            "units": {k: (t, dict(m)) for k, (t, m) in self.units.items()},
            "used_edges": set(self.used_edges),
            "hub_usage": dict(self.hub_usage),
            "hub_edge_batches": [set(b) for b in self.hub_edge_batches],
            "merge_log": list(self.merge_log),
            "failures": list(self.failures),
        }

    def restore(self, snap: dict) -> None:
        self.units = {k: (t, dict(m)) for k, (t, m) in snap["units"].items()}
        self.used_edges = set(snap["used_edges"])
        self.hub_usage = dict(snap["hub_usage"])
        self.hub_edge_batches = [set(b) for b in snap["hub_edge_batches"]]
        self.merge_log = list(snap["merge_log"])
        self.failures = list(snap["failures"])

    def to_json(self) -> dict:
        histogram: dict[int, int] = {}
        for count in self.hub_usage.values():
            histogram[count] = histogram.get(count, 0) + 1
        return {
            "trees": [
                {
                    "id": uid,
                    "n": tree.n,
                    "root": tree.root,
                    "parent": [-1 if p is None else p for p in tree.parent],
                    "map": sorted(phi.items()),
                }
                for uid, (tree, phi) in sorted(self.units.items())
            ],
            "used_edges": len(self.used_edges),
            "hub_usage_histogram": {str(k): v for k, v in sorted(histogram.items())},
            "merges": self.merge_log,
            "failures": self.failures,
        }


@dataclass
class ConflictGraph:
    """Nodes are (sub-batch, abstract vertex); edges forbid equal images."""

    nodes: set[tuple[int, int]] = field(default_factory=set)
    adj: dict[tuple[int, int], set[tuple[int, int]]] = field(default_factory=dict)

    def add_node(self, node: tuple[int, int]) -> None:
        self.nodes.add(node)
        self.adj.setdefault(node, set())

    def add_edge(self, a: tuple[int, int], b: tuple[int, int]) -> None:
        if a[0] == b[0]:
            raise ParameterError("conflict edges join different sub-batches")
        self.add_node(a)
        self.add_node(b)
        self.adj[a].add(b)
        self.adj[b].add(a)

    def neighbors(self, node: tuple[int, int]) -> set[tuple[int, int]]:
        return self.adj.get(node, set())

    def check_degree_bounds(self, max_degree: float, per_batch: float) -> list[str]:
        issues = []
        for node in self.nodes:
            nbrs = self.adj[node]
            if len(nbrs) > max_degree:
                issues.append(f"node {node} degree {len(nbrs)} above {max_degree:.0f}")
            per: dict[int, int] = {}
            for other in nbrs:
                per[other[0]] = per.get(other[0], 0) + 1
            for sb, cnt in per.items():
                if cnt > per_batch:
                    issues.append(
                        f"node {node} has {cnt} neighbors in sub-batch {sb}, "
                        f"above {per_batch:.0f}"
                    )
        return issues


# ---------------------------------------------------------------------------
# piece ordering and connector embedding
# ---------------------------------------------------------------------------


def order_pieces(units: list[tuple[int, TreeSplit]]) -> list[tuple[int, int]]:
    """(unit_id, piece_index) with units contiguous and ancestor pieces first
    (sorted by piece-root depth inside each unit)."""
    out = []
    for uid, split in units:
        tree = split.tree
        idx = sorted(
            range(len(split.decomposition.pieces)),
            key=lambda i: (tree.depth[split.decomposition.pieces[i][0]], i),
        )
        out.extend((uid, i) for i in idx)
    return out


@dataclass
class BatchSlots:
    """Vertex sets of one batch's slot system, indexed by (s, side)."""

    u: list[tuple[tuple[int, ...], tuple[int, ...]]]
    v: list[tuple[tuple[int, ...], tuple[int, ...]]]

    @classmethod
    def from_batch(cls, batch: MatchingBatch) -> "BatchSlots":
        return cls(
            u=[(p.u1, p.u2) for p in batch.pairs],
            v=[(p.v1, p.v2) for p in batch.pairs],
        )

    @property
    def pair_count(self) -> int:
        return len(self.u)

    def u_masks(self) -> list[tuple[int, int]]:
        return [(mask_of(a), mask_of(b)) for a, b in self.u]

    def v_masks(self) -> list[tuple[int, int]]:
        return [(mask_of(a), mask_of(b)) for a, b in self.v]

    def slot_of_hub_vertex(self) -> dict[int, tuple[int, int]]:
        owner = {}
        for s, (a, b) in enumerate(self.u):
            for w in a:
                owner[w] = (s, 0)
            for w in b:
                owner[w] = (s, 1)
        return owner

    def min_hub_slot(self) -> int:
        return min(min(len(a), len(b)) for a, b in self.u) if self.u else 0


def _choose(rng, candidates: list[int], deterministic: bool, usage: dict[int, int]):
    if not candidates:
        return None
    if deterministic:
        return min(candidates, key=lambda u: (usage.get(u, 0), u))
    return candidates[rng.randrange(len(candidates))]


def embed_connectors(
    slots: BatchSlots,
    units: list[tuple[int, TreeSplit]],
    state: PackingState,
    cfg: PipelineConfig,
    full: Graph,
    avail: EdgeAvailability,
    hub_rows: list[int],
    n_bullet: int,
    batch_hub_edges: set[tuple[int, int]],
) -> dict[int, dict[int, int]]:
    """Embed every unit's connector into the hub slots, piece by piece.

    Returns per-unit partial maps (connector vertices only); `state` gains
    the used edges, hub usage counts, and hub-edge bookkeeping.  Candidate
    exhaustion raises EmbeddingFailure with the piece and case context.
    """
    rng = make_rng(mix_seed(cfg.seed, 0xC0), len(state.used_edges))
    slot_of_vertex = slots.slot_of_hub_vertex()
    u_masks = slots.u_masks()
    v_masks = slots.v_masks()
    threshold = cfg.hub_degree_threshold(slots.min_hub_slot())
    d_eff = cfg.d - cfg.epsilon ** 0.5
    maps: dict[int, dict[int, int]] = {uid: {} for uid, _ in units}
    split_of = dict(units)

    def fully_used(u: int) -> bool:
        return state.hub_usage.get(u, 0) >= cfg.M

    def record_edge(a: int, b: int) -> None:
        avail.consume(a, b)
        key = edge_key(a, b)
        state.used_edges.add(key)
        if hub_rows[a] >> b & 1:
            batch_hub_edges.add(key)

    def common_full_neighborhood(images: list[int], region_mask: int) -> int:
        m = region_mask
        for u in images:
            m &= full.adj[u]
        return m

    for uid, piece_idx in order_pieces(units):
        split = split_of[uid]
        tree = split.tree
        phi = maps[uid]
        own_images = set(phi.values())
        root, verts = split.decomposition.pieces[piece_idx]
        s_pc, i_pc = split.slot_of_piece[piece_idx]
        y = tree.parent[root]

        def candidate_list(mask: int) -> list[int]:
            return [
                u for u in bits(mask)
                if not fully_used(u) and u not in own_images
            ]

        if y is not None and y in split.connector:
            case = 1
            s_star, i_star = slot_of_vertex[phi[y]]
            cand_mask = avail.rows[phi[y]] & u_masks[s_star][1 - i_star]
            candidates = candidate_list(cand_mask)
        elif y is None:
            case = 2
            # the root piece's depth-3 descendants sit on the B parity side,
            # which assign_slots routed to class (s_pc, 1 - i_pc)
            s_star, i_star = s_pc, 1 - i_pc
            candidates = candidate_list(u_masks[s_star][1 - i_star])
        else:
            case = 3
            s_star, i_star = split.class_of_vertex()[y]
            embedded = [phi[v] for v in tree.neighbors(y) if v in phi]
            v_star = common_full_neighborhood(embedded, v_masks[s_star][i_star])
            floor_b1 = max(d_eff, 0.0) ** (len(embedded) + 1) * n_bullet
            candidates = [
                u
                for u in candidate_list(u_masks[s_star][1 - i_star])
                if (full.adj[u] & v_star).bit_count() >= floor_b1
            ]

        # the rest of the piece hangs off the root image; if a root choice
        # strands a deeper vertex, roll the piece back and try another root
        w_prime_mask = u_masks[s_pc][i_pc]
        v_region = v_masks[s_pc][1 - i_pc]
        layer1 = [c for c in tree.children[root] if c in split.c1]
        if not cfg.deterministic_choice:
            rng.shuffle(candidates)
        else:
            candidates.sort(key=lambda u: (state.hub_usage.get(u, 0), u))
        last_context = {"unit": uid, "piece": piece_idx, "case": case,
                        "slot": (s_star, i_star), "candidates": len(candidates)}
        success = False
        for image in candidates[: max(6, cfg.Delta * 2)]:
            journal: list[tuple[str, tuple]] = []

            def put(vertex: int, img: int) -> None:
                phi[vertex] = img
                own_images.add(img)
                state.hub_usage[img] = state.hub_usage.get(img, 0) + 1
                journal.append(("vertex", (vertex, img)))

            def wire(a: int, b: int) -> None:
                record_edge(a, b)
                journal.append(("edge", (a, b)))

            def unwind() -> None:
                for kind, payload in reversed(journal):
                    if kind == "vertex":
                        vertex, img = payload
                        del phi[vertex]
                        own_images.discard(img)
                        state.hub_usage[img] -= 1
                    else:
                        a, b = payload
                        avail.restore_edge(a, b)
                        key = edge_key(a, b)
                        state.used_edges.discard(key)
                        batch_hub_edges.discard(key)

            put(root, image)
            if case == 1:
                wire(phi[y], image)
            ok = True
            for z in layer1:
                grandchildren = [c for c in tree.children[z] if c in split.c2]
                base_options = candidate_list(avail.rows[image] & u_masks[s_star][i_star])
                options = base_options
                if grandchildren:
                    options = [
                        w
                        for w in base_options
                        if (full.adj[w] & w_prime_mask).bit_count() >= threshold
                        and (avail.rows[w] & w_prime_mask).bit_count() >= len(grandchildren)
                    ]
                w_img = _choose(rng, options, cfg.deterministic_choice, state.hub_usage)
                if w_img is None:
                    last_context.update(stage="layer1",
                                        after_usage_filter=len(base_options),
                                        grandchildren=len(grandchildren))
                    ok = False
                    break
                put(z, w_img)
                wire(image, w_img)
                for c in grandchildren:
                    has_bulk_children = any(ch in split.bulk for ch in tree.children[c])
                    cand2 = [
                        w
                        for w in candidate_list(avail.rows[w_img] & w_prime_mask)
                        if not has_bulk_children
                        or (full.adj[w] & v_region).bit_count() >= max(d_eff, 0.0) * n_bullet
                    ]
                    c_img = _choose(rng, cand2, cfg.deterministic_choice, state.hub_usage)
                    if c_img is None:
                        last_context.update(
                            stage="layer2",
                            after_usage_filter=len(
                                candidate_list(avail.rows[w_img] & w_prime_mask)
                            ),
                            needs_bulk_children=has_bulk_children,
                        )
                        ok = False
                        break
                    put(c, c_img)
                    wire(w_img, c_img)
                if not ok:
                    break
            if ok:
                success = True
                break
            unwind()
        if not success:
            raise EmbeddingFailure(
                f"no viable root image for a piece (unit {uid}, case {case})",
                context=last_context,
            )

        _assert_phi_invariants(split, phi, slots, slot_of_vertex, state, cfg, full, n_bullet)
    return maps


def _assert_phi_invariants(split, phi, slots, slot_of_vertex, state, cfg, full, n_bullet):
    """Runtime checks of the three connector invariants for one unit."""
    tree = split.tree
    class_of = split.class_of_vertex()
    d_eff = max(cfg.d - cfg.epsilon ** 0.5, 0.0)
    v_masks = slots.v_masks()
    for v, img in phi.items():
        for y in tree.neighbors(v):
            if y in split.bulk:
                s, i = class_of[y]
                if slot_of_vertex[img] != (s, 1 - i):
                    raise InternalError(
                        f"connector image of {v} lies in {slot_of_vertex[img]}, "
                        f"expected hub side {(s, 1 - i)}"
                    )
    seen_bulk = set()
    for v in phi:
        for y in tree.neighbors(v):
            if y not in split.bulk or y in seen_bulk:
                continue
            seen_bulk.add(y)
            embedded = [phi[x] for x in tree.neighbors(y) if x in phi]
            if not embedded:
                continue
            s, i = class_of[y]
            region = v_masks[s][i]
            for u in embedded:
                region &= full.adj[u]
            if region.bit_count() < d_eff ** len(embedded) * n_bullet:
                raise EmbeddingFailure(
                    "common-neighborhood invariant failed for a bulk vertex",
                    context={"bulk_vertex": y, "embedded_neighbors": len(embedded),
                             "available": region.bit_count()},
                )
    if any(c > cfg.M for c in state.hub_usage.values()):
        raise InternalError("hub usage exceeded M")


# ---------------------------------------------------------------------------
# forest batching
# ---------------------------------------------------------------------------


@dataclass
class SlotForest:
    """One tree's bulk forest routed to a single slot."""

    unit_id: int
    x: dict[int, frozenset[int]]          # class side -> tree vertices
    edges: list[tuple[int, int]]
    w: dict[int, frozenset[int]]          # boundary vertices per side

    def vertex_count(self) -> int:
        return len(self.x[0]) + len(self.x[1])

    def edge_count(self) -> int:
        return len(self.edges)


def slot_forests(units: list[tuple[int, TreeSplit]], s: int) -> list[SlotForest]:
    out = []
    for uid, split in units:
        forest = split.slot_forest(s)
        if not forest["vertices"]:
            continue
        boundary = split.boundary_vertices()
        out.append(
            SlotForest(
                unit_id=uid,
                x={i: frozenset(forest["x"][i]) for i in (0, 1)},
                edges=forest["edges"],
                w={i: frozenset(boundary & forest["x"][i]) for i in (0, 1)},
            )
        )
    return out


def batch_count(total_edges: int, q: int, n: int, zeta: float) -> int:
    return max(1, math.ceil(total_edges / ((1 - 4 * zeta) * q * n)))


def batch_forests(
    forests: list[SlotForest], cfg: PipelineConfig, n: int
) -> list[list[SlotForest]]:
    """Greedy bin packing of forests into w sub-batches under the edge cap.

    w follows total_edges / ((1 - 4*zeta) * q * n); each sub-batch must end
    at most (1 - 3*zeta) * q * n edges and within 4n of the mean.
    """
    cap_edges = (1 - 3 * cfg.zeta) * cfg.q * n
    cap_class = (1 - 3 * cfg.nu / 4) * n
    for f in forests:
        if f.edge_count() > cap_edges:
            raise ParameterError(
                f"forest of unit {f.unit_id} has {f.edge_count()} edges, above "
                f"the (1-3*zeta)*q*n cap {cap_edges:.0f}; q too small"
            )
        for i in (0, 1):
            if len(f.x[i]) > cap_class:
                raise ParameterError(
                    f"forest class of unit {f.unit_id} has {len(f.x[i])} vertices, "
                    f"above the (1-3*nu/4)*n cap {cap_class:.0f}"
                )
            if len(f.w[i]) > cfg.M:
                raise StructuralError(
                    f"boundary set of unit {f.unit_id} has {len(f.w[i])} vertices, "
                    f"above M = {cfg.M}; pieces are too small"
                )
            if len(f.w[i]) > cfg.epsilon * n:
                log.warning(
                    "boundary set of unit %d (%d vertices) above eps*n = %.1f",
                    f.unit_id, len(f.w[i]), cfg.epsilon * n,
                )
    total = sum(f.edge_count() for f in forests)
    w = batch_count(total, cfg.q, n, cfg.zeta)
    bins: list[list[SlotForest]] = [[] for _ in range(w)]
    loads = [0] * w
    for f in sorted(forests, key=lambda f: -f.edge_count()):
        i = loads.index(min(loads))
        bins[i].append(f)
        loads[i] += f.edge_count()
    mean = total / w
    for load in loads:
        if load > cap_edges or abs(load - mean) > 4 * n:
            raise StructuralError(
                f"sub-batch load {load} outside the window around {mean:.0f}"
            )
    return [b for b in bins if b]


# ---------------------------------------------------------------------------
# regular-container stand-in
# ---------------------------------------------------------------------------


def _complete_regular(h_adj: list[set[int]], n: int, q: int, rng) -> None:
    """Raise every vertex to degree exactly q by adding filler edges,
    most-deficient first; wedges are broken by standard 2-swaps (remove an
    edge (a, b) and insert (u, b), (a, v) to lift deficient u and v)."""
    for _ in range(60):
        deficits0 = sorted(
            (u for u in range(n) if len(h_adj[u]) < q),
            key=lambda u: (len(h_adj[u]), rng.random()),
        )
        if not deficits0:
            break
        progress = False
        for u in deficits0:
            need = q - len(h_adj[u])
            if need <= 0:
                continue
            partners = sorted(
                (
                    v
                    for v in range(n, 2 * n)
                    if len(h_adj[v]) < q and v not in h_adj[u]
                ),
                key=lambda v: (-(q - len(h_adj[v])), rng.random()),
            )[:need]
            for v in partners:
                h_adj[u].add(v)
                h_adj[v].add(u)
                progress = True
        if progress:
            continue
        # wedge: deficient u and v are already adjacent or saturated pairs
        # block them; a 2-swap through a random existing edge unlocks
        left = [u for u in range(n) if len(h_adj[u]) < q]
        right = [v for v in range(n, 2 * n) if len(h_adj[v]) < q]
        if not left or not right:
            break
        swapped = False
        for u in left:
            for v in right:
                candidates = []
                for a in rng.sample(range(n), min(n, 40)):
                    if a == u:
                        continue
                    for b in h_adj[a]:
                        if b != v and b not in h_adj[u] and a not in h_adj[v]:
                            candidates.append((a, b))
                            break
                if candidates:
                    a, b = candidates[rng.randrange(len(candidates))]
                    h_adj[a].discard(b)
                    h_adj[b].discard(a)
                    h_adj[u].add(b)
                    h_adj[b].add(u)
                    h_adj[a].add(v)
                    h_adj[v].add(a)
                    swapped = True
                    break
            if swapped:
                break
        if not swapped:
            break
    bad = [u for u in range(2 * n) if len(h_adj[u]) != q]
    if bad:
        raise ProbabilisticFailure(
            f"regular completion left {len(bad)} vertices off degree q",
            stats={"first_bad": bad[0], "degree": len(h_adj[bad[0]])},
        )


def pack_batch_regular(
    batch: list[SlotForest], q: int, n: int, seed: int, forest_retry: int = 8
) -> tuple[list[set[int]], dict[tuple[int, int], int]]:
    """Pack the batch's forests edge-disjointly into one q-regular bipartite
    graph on abstract sides [0, n) and [n, 2n).

    Boundary-vertex images are pairwise disjoint across forests on each
    side.  After the forests are placed, filler edges complete every degree
    to exactly q; failure to complete is a ProbabilisticFailure.
    """
    total = sum(f.edge_count() for f in batch)
    if total > q * n:
        raise ParameterError("batch edges exceed q*n, cannot fit a q-regular host")
    h_adj: list[set[int]] = [set() for _ in range(2 * n)]
    phi: dict[tuple[int, int], int] = {}
    used_w = {0: set(), 1: set()}
    rng = make_rng(seed)

    for f in batch:
        for side in (0, 1):
            if len(f.x[side]) > n:
                raise ParameterError("forest class larger than the abstract side")
        placed: dict[int, int] = {}
        fdeg: dict[int, int] = {}
        adj_f: dict[int, list[int]] = {}
        for u, v in f.edges:
            adj_f.setdefault(u, []).append(v)
            adj_f.setdefault(v, []).append(u)
            fdeg[u] = fdeg.get(u, 0) + 1
            fdeg[v] = fdeg.get(v, 0) + 1
        side_of = {v: 0 for v in f.x[0]}
        side_of.update({v: 1 for v in f.x[1]})
        order = []
        seen = set()
        for v in sorted(f.x[0] | f.x[1]):
            if v in seen:
                continue
            stack = [v]
            seen.add(v)
            while stack:
                u = stack.pop()
                order.append(u)
                for w_ in adj_f.get(u, ()):
                    if w_ not in seen:
                        seen.add(w_)
                        stack.append(w_)

        for attempt in range(forest_retry):
            rng_f = make_rng(seed, (f.unit_id * 131 + attempt) & 0xFFFF)
            trial: dict[int, int] = {}
            taken: set[int] = set()
            extra_deg: dict[int, int] = {}
            trial_edges: set[tuple[int, int]] = set()
            ok = True
            for v in order:
                side = side_of[v]
                base = range(n) if side == 0 else range(n, 2 * n)
                parent_imgs = [trial[u] for u in adj_f.get(v, ()) if u in trial]
                need = fdeg.get(v, 0)
                is_w = v in f.w[side]
                cands = [
                    a
                    for a in base
                    if a not in taken
                    and len(h_adj[a]) + extra_deg.get(a, 0) + need <= q
                    and not (is_w and a in used_w[side])
                    and all(
                        p not in h_adj[a] and edge_key(a, p) not in trial_edges
                        for p in parent_imgs
                    )
                ]
                if not cands:
                    ok = False
                    break
                a = cands[rng_f.randrange(len(cands))]
                trial[v] = a
                taken.add(a)
                for p in parent_imgs:
                    trial_edges.add(edge_key(a, p))
                    extra_deg[a] = extra_deg.get(a, 0) + 1
                    extra_deg[p] = extra_deg.get(p, 0) + 1
            if ok:
                placed = trial
                for a, b in trial_edges:
                    h_adj[a].add(b)
                    h_adj[b].add(a)
                break
        else:
            raise ProbabilisticFailure(
                f"could not place forest of unit {f.unit_id} after {forest_retry} tries",
                attempts=forest_retry,
            )
        for v, a in placed.items():
            phi[(f.unit_id, v)] = a
            side = side_of[v]
            if v in f.w[side]:
                used_w[side].add(a)
    _complete_regular(h_adj, n, q, rng)
    return h_adj, phi


# ---------------------------------------------------------------------------
# blow-up stand-in
# ---------------------------------------------------------------------------


@dataclass
class BlowupTarget:
    """Target constraint for one abstract vertex: images must be adjacent
    (via still-free edges) to every anchor, or lie inside fixed_mask."""

    side: int
    anchors: tuple[int, ...] = ()
    fixed_mask: int | None = None


def blowup_pack(
    side0: tuple[int, ...],
    side1: tuple[int, ...],
    h_graphs: list[list[set[int]]],
    targets: list[dict[int, BlowupTarget]],
    conflicts: ConflictGraph,
    avail: EdgeAvailability,
    cfg: PipelineConfig,
    seed: int,
) -> list[dict[int, int]]:
    """Pack the q-regular graphs into the host pair over still-free edges.

    Per sub-batch: targeted vertices are seeded first inside their target
    sets with their anchor edges free (and pinned afterwards), the rest
    most-constrained-first preferring fully-free images.  Any H-edges left
    on unavailable pairs are then repaired by min-conflicts transpositions
    of the side bijections; only a conflict-free state is committed, so
    every H-edge and anchor edge lands on a distinct free host edge.
    Contracts: side-respecting images, targets honored, conflict-adjacent
    vertices of different sub-batches at distinct images.
    """
    n = len(side0)
    if len(side1) != n:
        raise ParameterError("host sides must have equal size")
    placements: list[dict[int, int]] = []
    for sb, h_adj in enumerate(h_graphs):
        tmap = targets[sb] if sb < len(targets) else {}
        half = len(h_adj) // 2
        if len(h_adj) > 2 * n:
            raise ParameterError("abstract graph larger than the host pair")
        last_error: dict | None = None
        forbidden: dict[int, int] = {}
        for a in range(len(h_adj)):
            node = (sb, a)
            if node in conflicts.nodes:
                mask = 0
                for other in conflicts.neighbors(node):
                    if other[0] < len(placements):
                        img = placements[other[0]].get(other[1])
                        if img is not None:
                            mask |= 1 << img
                if mask:
                    forbidden[a] = mask

        done = False
        for attempt in range(cfg.blowup_retry):
            rng = make_rng(seed, sb * 131 + attempt)
            result = _blowup_attempt(
                sb, h_adj, tmap, forbidden, side0, side1, half, avail, cfg, rng
            )
            if isinstance(result, dict):
                placements.append(result)
                done = True
                break
            last_error = result[1]
        if not done:
            raise ProbabilisticFailure(
                f"blow-up stand-in stuck in sub-batch {sb}",
                attempts=cfg.blowup_retry,
                stats=last_error or {},
            )
    return placements


def _blowup_attempt(sb, h_adj, tmap, forbidden, side0, side1, half, avail, cfg, rng):
    """One seeding + repair pass; returns the placement dict on success or
    ("fail", info)."""
    n = len(side0)
    side_verts = (list(side0), list(side1))
    side_masks = (mask_of(side0), mask_of(side1))
    total = len(h_adj)

    def side_of(a: int) -> int:
        return tmap[a].side if a in tmap else (0 if a < half else 1)

    # -- seeding: targets first, then most-constrained-first ---------------
    placed: dict[int, int] = {}
    taken = [0, 0]
    pinned: set[int] = set()
    targeted = sorted(tmap, key=lambda a: (-len(tmap[a].anchors), rng.random()))
    for a in targeted:
        t = tmap[a]
        cand = side_masks[t.side] & ~taken[t.side] & ~forbidden.get(a, 0)
        for u in t.anchors:
            cand &= avail.rows[u]
        if t.fixed_mask is not None:
            cand &= t.fixed_mask
        options = list(bits(cand))
        if not options:
            return ("fail", {"sub_batch": sb, "abstract": a, "candidates": 0,
                             "stage": "target-seeding"})
        img = options[rng.randrange(len(options))]
        placed[a] = img
        taken[t.side] |= 1 << img
        pinned.add(a)
    rest = [a for a in range(total) if a not in tmap]
    rng.shuffle(rest)
    score = {a: 0 for a in rest}
    pending = set(rest)
    while pending:
        a = max(pending, key=lambda x: (score[x], -x))
        pending.discard(a)
        side = side_of(a)
        free = side_masks[side] & ~taken[side] & ~forbidden.get(a, 0)
        clean = free
        for b in h_adj[a]:
            if b in placed:
                clean &= avail.rows[placed[b]]
        pool = clean if clean else free
        options = list(bits(pool))
        if not options:
            return ("fail", {"sub_batch": sb, "abstract": a, "candidates": 0,
                             "stage": "seeding"})
        img = options[rng.randrange(len(options))]
        placed[a] = img
        taken[side] |= 1 << img
        for b in h_adj[a]:
            if b in pending:
                score[b] += 1

    # complete each side bijection so repair can swap onto unused hosts
    image_to_abstract: dict[int, int] = {}
    for a, img in placed.items():
        image_to_abstract[img] = a
    spare_ids = {0: total, 1: total + n}  # virtual abstracts with no edges
    virtual: dict[int, int] = {}
    for side in (0, 1):
        for v in side_verts[side]:
            if v not in image_to_abstract:
                vid = spare_ids[side]
                spare_ids[side] += 1
                virtual[vid] = side
                placed[vid] = v
                image_to_abstract[v] = vid

    def edges_at(a: int):
        if a in virtual:
            return ()
        out = [(a, b) for b in h_adj[a]]
        if a in tmap:
            out.extend((a, ("anchor", u)) for u in tmap[a].anchors)
        return out

    def edge_blocked(a: int, other) -> bool:
        img_a = placed[a]
        if isinstance(other, tuple):
            return not (avail.rows[other[1]] >> img_a & 1)
        if other not in placed:
            return False
        return not (avail.rows[placed[other]] >> img_a & 1)

    def conflicts_at(a: int) -> int:
        return sum(1 for (_, other) in edges_at(a) if edge_blocked(a, other))

    def local_ok(a: int) -> bool:
        # hard constraints other than edge availability
        img = placed[a]
        if forbidden.get(a, 0) >> img & 1:
            return False
        t = tmap.get(a)
        if t is not None and t.fixed_mask is not None and not (t.fixed_mask >> img & 1):
            return False
        return True

    def clean_mask(a: int) -> int:
        side = side_of(a)
        mask = side_masks[side] & ~forbidden.get(a, 0)
        for b in h_adj[a]:
            if b in placed:
                mask &= avail.rows[placed[b]]
        t = tmap.get(a)
        if t is not None:
            if t.fixed_mask is not None:
                mask &= t.fixed_mask
            for u in t.anchors:
                mask &= avail.rows[u]
        return mask

    def refresh(xs) -> None:
        for x in xs:
            if x in virtual:
                continue
            if conflicts_at(x) > 0:
                conflicted.add(x)
            else:
                conflicted.discard(x)
            for (_, other) in edges_at(x):
                if isinstance(other, tuple) or other not in placed or other in virtual:
                    continue
                if conflicts_at(other) > 0:
                    conflicted.add(other)
                else:
                    conflicted.discard(other)

    conflicted: set[int] = set()
    for a in list(placed):
        if a not in virtual and conflicts_at(a) > 0:
            conflicted.add(a)
    budget = 200 * n + 100 * len(conflicted) * cfg.q
    while conflicted and budget > 0:
        budget -= 1
        a = rng.choice(tuple(conflicted))
        if a in pinned:
            # move a blocked neighbor instead; anchors cannot move
            blocked = [
                other for (_, other) in edges_at(a)
                if not isinstance(other, tuple) and edge_blocked(a, other)
                and other not in pinned
            ]
            if not blocked:
                return ("fail", {"sub_batch": sb, "abstract": a,
                                 "stage": "repair-pinned"})
            a = rng.choice(blocked)
        side = side_of(a) if a not in virtual else virtual[a]
        # candidate images: ones clearing all of a's edges when they exist,
        # otherwise a random sample; take the best swap (min-conflicts) and
        # allow sideways drift plus a little noise to escape plateaus
        clean_options = list(bits(clean_mask(a))) if a not in virtual else []
        if clean_options:
            rng.shuffle(clean_options)
            candidates = clean_options[:6]
        else:
            candidates = [side_verts[side][rng.randrange(n)] for _ in range(8)]
        before_a = conflicts_at(a)
        best = None
        for img in candidates:
            b = image_to_abstract[img]
            if b == a or b in pinned:
                continue
            placed[a], placed[b] = placed[b], placed[a]
            feasible = (local_ok(a) if a not in virtual else True) and (
                local_ok(b) if b not in virtual else True
            )
            if feasible:
                delta = (
                    conflicts_at(a) + conflicts_at(b)
                    - before_a
                    - 0  # b started conflict-free or its count is in conflicts_at pre-swap
                )
                cost = conflicts_at(a) + conflicts_at(b)
                if best is None or cost < best[0]:
                    best = (cost, b)
            placed[a], placed[b] = placed[b], placed[a]
        if best is None:
            continue
        cost, b = best
        before = before_a + conflicts_at(b)
        if cost > before and rng.random() > 0.15:
            continue
        placed[a], placed[b] = placed[b], placed[a]
        image_to_abstract[placed[a]] = a
        image_to_abstract[placed[b]] = b
        refresh((a, b))
    if conflicted:
        worst = next(iter(conflicted))
        return ("fail", {"sub_batch": sb, "abstract": worst,
                         "stage": "repair", "conflicted": len(conflicted)})

    # conflict-free: consume every H-edge image and anchor edge
    final = {a: img for a, img in placed.items() if a not in virtual}
    for a in final:
        for b in h_adj[a]:
            if a < b:
                avail.consume(final[a], final[b])
        if a in tmap:
            for u in tmap[a].anchors:
                avail.consume(u, final[a])
    return final


# ---------------------------------------------------------------------------
# one batch end to end
# ---------------------------------------------------------------------------


def _merge_small_units(trees: list[RootedTree], floor_size: int, cap: int,
                       max_degree: int, state: PackingState) -> list[RootedTree]:
    """Join undersized trees pairwise by single edges while the result stays
    under the size cap; remaining small trees pass through unchanged."""
    units = sorted(trees, key=lambda t: t.n)
    out: list[RootedTree] = []
    while units:
        t = units.pop(0)
        if t.n >= floor_size or not units or t.n + units[0].n > cap:
            out.append(t)
            continue
        other = units.pop(0)
        try:
            merged, added = merge_trees(t, other, max_degree)
        except ParameterError:
            out.extend([t, other])
            continue
        state.merge_log.append(
            {"sizes": [t.n, other.n], "added_edges": added}
        )
        # reinsert to allow chained merges
        lo = 0
        while lo < len(units) and units[lo].n < merged.n:
            lo += 1
        units.insert(lo, merged)
    return sorted(out, key=lambda t: -t.n)


def _pack_slot(
    s: int,
    batch_units: list[tuple[int, TreeSplit]],
    conn_maps: dict[int, dict[int, int]],
    slots: BatchSlots,
    state: PackingState,
    cfg: PipelineConfig,
    avail: EdgeAvailability,
    hub_rows: list[int],
    n_bullet: int,
    batch_hub_edges: set[tuple[int, int]],
    seed: int,
) -> dict[int, dict[int, int]]:
    """Forest batching, in-host placement, and regular completion for one
    slot index.

    Boundary vertices of different sub-batches that share a hub anchor are
    kept at distinct images (the conflict rule); their anchor edges and all
    forest edges land on free host edges.  Each sub-batch's host footprint
    is completed to an exactly q-regular bipartite container with free
    padding edges.  Commits used edges into `state` on success and returns
    per-unit bulk maps; on failure the availability is rolled back and the
    last error re-raised after the retry budget.
    """
    forests = slot_forests(batch_units, s)
    if not forests:
        return {}
    split_of = dict(batch_units)
    v0, v1 = slots.v[s]
    anchors_of: dict[tuple[int, int], tuple[int, ...]] = {}
    for f in forests:
        tree = split_of[f.unit_id].tree
        conn = conn_maps[f.unit_id]
        for i in (0, 1):
            for y in f.w[i]:
                anchors_of[(f.unit_id, y)] = tuple(
                    sorted(conn[x] for x in tree.neighbors(y) if x in conn)
                )
    last: Exception | None = None
    for attempt in range(cfg.slot_retry):
        snap = avail.snapshot()
        try:
            bins = batch_forests(forests, cfg, n_bullet)
            bulk_maps: dict[int, dict[int, int]] = {}
            local_used: list[tuple[int, int]] = []
            prior_w_images: dict[int, list[int]] = {}
            for sb, bin_ in enumerate(bins):
                forbidden_of: dict[tuple[int, int], int] = {}
                for f in bin_:
                    for i in (0, 1):
                        for y in f.w[i]:
                            key = (f.unit_id, y)
                            mask = 0
                            for u in anchors_of.get(key, ()):
                                for img in prior_w_images.get(u, ()):
                                    mask |= 1 << img
                            if mask:
                                forbidden_of[key] = mask
                placed, consumed, batch_deg = embed_forests_inhost(
                    bin_, v0, v1, anchors_of, forbidden_of, avail, cfg,
                    mix_seed(seed, 7919 * sb + 191 * attempt),
                )
                _complete_regular_inhost(
                    v0, v1, batch_deg, avail, cfg.q,
                    make_rng(seed, 377 * sb + attempt),
                )
                for f in bin_:
                    unit_map = bulk_maps.setdefault(f.unit_id, {})
                    for i in (0, 1):
                        for v in f.x[i]:
                            unit_map[v] = placed[(f.unit_id, v)]
                        for y in f.w[i]:
                            img = placed[(f.unit_id, y)]
                            for u in anchors_of[(f.unit_id, y)]:
                                prior_w_images.setdefault(u, []).append(img)
                local_used.extend(consumed)
        except (ProbabilisticFailure, EmbeddingFailure, StructuralError) as exc:
            avail.restore(snap)
            last = exc
            log.debug("slot %d attempt %d failed: %s", s, attempt, exc)
            continue
        # post-hoc conflict audit: boundary images sharing an anchor across
        # sub-batches must be distinct, or the anchor edge would be reused
        for u, images in prior_w_images.items():
            if len(images) != len(set(images)):
                raise InternalError(
                    f"anchor {u} carries duplicate boundary images in slot {s}"
                )
        for key in local_used:
            state.used_edges.add(key)
            if hub_rows[key[0]] >> key[1] & 1:
                batch_hub_edges.add(key)
        return bulk_maps
    raise last if last is not None else EmbeddingFailure(f"slot {s} failed")


def pack_collection(
    batch: MatchingBatch,
    trees: list[RootedTree],
    state: PackingState,
    cfg: PipelineConfig,
    g: Graph,
    hub: Graph,
    base_unit_id: int = 0,
) -> PackingState:
    """Pack one tree collection into one batch of the matching structure.

    Pipeline: merge undersized trees, cut pieces, split connectors, assign
    slots, embed connectors into the hub, then per slot batch the bulk
    forests into regular containers and blow them up onto the V-pairs.
    The returned state gains complete per-unit maps; hub usage stays within
    M images per vertex.
    """
    if not trees:
        return state
    slots = BatchSlots.from_batch(batch)
    m = slots.pair_count
    if m == 0:
        raise ParameterError("batch has no matched pairs")
    n_bullet = len(batch.pairs[0].v1)
    full = g.union(hub)

    cap_edges = (1 - cfg.nu) * m * cfg.d * n_bullet ** 2
    total_edges = sum(t.edge_count() for t in trees)
    if total_edges > cap_edges:
        raise ParameterError(
            f"collection has {total_edges} edges, above the (1-nu)*r*d*n^2 "
            f"budget {cap_edges:.0f}"
        )
    size_cap = 2 * (1 - cfg.nu) * m * n_bullet
    units_raw = _merge_small_units(
        trees, math.ceil(2 * m * n_bullet / 3), math.floor(size_cap), cfg.Delta, state
    )
    for t in units_raw:
        if t.n > size_cap:
            raise ParameterError(f"tree of {t.n} vertices above the 2(1-nu)rn cap {size_cap:.0f}")
        if t.max_degree() > cfg.Delta:
            raise ParameterError("tree exceeds the degree bound")

    batch_units: list[tuple[int, TreeSplit]] = []
    for i, tree in enumerate(units_raw):
        uid = base_unit_id + i
        decomp = partition_subtrees(tree, cfg.piece_size)
        split = split_connector(tree, decomp)
        split = assign_slots(
            split, m, cfg.slot_epsilon, n_bullet, mix_seed(cfg.seed, uid * 53 + 11)
        )
        batch_units.append((uid, split))

    hub_free = [
        row & ~used_mask
        for row, used_mask in zip(
            hub.adj,
            _used_mask_rows(hub.n, state.hub_edges_used() | state.used_edges),
        )
    ]
    avail = EdgeAvailability(g.n, [0] * g.n)
    for p in batch.pairs:
        for u, v in p.payload:
            avail.rows[u] |= 1 << v
            avail.rows[v] |= 1 << u
    for u in range(g.n):
        avail.rows[u] |= hub_free[u]

    batch_hub_edges: set[tuple[int, int]] = set()
    state.hub_edge_batches.append(batch_hub_edges)
    conn_maps = embed_connectors(
        slots, batch_units, state, cfg, full, avail, hub.adj, n_bullet, batch_hub_edges
    )

    bulk_by_unit: dict[int, dict[int, int]] = {uid: {} for uid, _ in batch_units}
    for s in range(m):
        slot_maps = _pack_slot(
            s, batch_units, conn_maps, slots, state, cfg, avail, hub.adj,
            n_bullet, batch_hub_edges, mix_seed(cfg.seed, 997 * s + base_unit_id),
        )
        for uid, mp in slot_maps.items():
            bulk_by_unit[uid].update(mp)

    for uid, split in batch_units:
        phi = dict(conn_maps[uid])
        phi.update(bulk_by_unit[uid])
        if len(phi) != split.tree.n:
            raise InternalError(
                f"unit {uid}: {len(phi)} of {split.tree.n} vertices embedded"
            )
        if len(set(phi.values())) != len(phi):
            raise InternalError(f"unit {uid}: image map not injective")
        state.units[uid] = (split.tree, phi)
    if any(c > cfg.M for c in state.hub_usage.values()):
        raise InternalError("hub usage exceeded M after the batch")
    return state


def _used_mask_rows(n: int, edges: set[tuple[int, int]]) -> list[int]:
    rows = [0] * n
    for u, v in edges:
        rows[u] |= 1 << v
        rows[v] |= 1 << u
    return rows


# ---------------------------------------------------------------------------
# the outer loop
# ---------------------------------------------------------------------------


def split_collections(
    trees: list[RootedTree], kappa: int, cap: float
) -> list[list[RootedTree]]:
    """Distribute trees over kappa collections, largest first into the
    lightest bin, each collection below the per-batch edge cap."""
    bins: list[list[RootedTree]] = [[] for _ in range(kappa)]
    loads = [0] * kappa
    for t in sorted(trees, key=lambda t: -t.edge_count()):
        i = loads.index(min(loads))
        bins[i].append(t)
        loads[i] += t.edge_count()
    for load in loads:
        if load >= cap:
            raise ParameterError(
                f"collection load {load} exceeds the per-batch cap {cap:.0f}"
            )
    return bins


def pack_theorem(
    g: Graph,
    hub_reserve: Graph,
    trees: list[RootedTree],
    cfg: PipelineConfig,
    structure: MatchingStructure | None = None,
    parts=None,
    pair_densities: dict | None = None,
) -> PackingState:
    """Pack a tree collection into the host: build (or accept) the matching
    structure, split the trees into per-batch collections, and run one
    pack_collection per batch with hub-edge bookkeeping in between.

    A failing batch rolls the state back to the previous batch boundary and
    is recorded in state.failures; the returned state carries whatever
    coverage was achieved.
    """
    if g.n != hub_reserve.n:
        raise ParameterError("host and hub reserve must share a vertex set")
    if g.overlaps(hub_reserve):
        raise ParameterError("host and hub reserve must be edge-disjoint")
    cfg.validate(g.n)
    e_host = g.edge_count()
    for t in trees:
        if t.edge_count() > (1 - cfg.nu) * e_host:
            raise ParameterError("a single tree already exceeds (1-nu)e(G)")
    if sum(t.edge_count() for t in trees) > (1 - cfg.nu) * e_host:
        raise ParameterError("collection exceeds (1-nu)e(G)")

    if structure is None:
        from .regularity import regular_partition_heuristic
        from .structure import build_reduced, edge_color_matchings, select_and_carve

        if parts is None or pair_densities is None:
            partition = regular_partition_heuristic(
                g, cfg.r, max(cfg.epsilon, 0.25), cfg.seed
            )
            parts = partition.parts
            pair_densities = partition.pair_densities
        rm = build_reduced(g, parts, pair_densities, cfg.t, mix_seed(cfg.seed, 1))
        classes = edge_color_matchings(rm, mix_seed(cfg.seed, 2))
        structure = select_and_carve(
            rm, classes, cfg.alpha, cfg.t, cfg.epsilon, mix_seed(cfg.seed, 3),
            n_bullet=cfg.n_bullet, kappa=cfg.kappa, allow_fewer=True,
        )

    kappa = len(structure.batches)
    per_batch_cap = (1 - 2 * cfg.nu / 3) * e_host / kappa
    collections = split_collections(trees, kappa, per_batch_cap)

    state = PackingState()
    for k, batch in enumerate(structure.batches):
        snap = state.snapshot()
        try:
            pack_collection(
                batch, collections[k], state, cfg, g, hub_reserve,
                base_unit_id=k * 100000,
            )
        except (EmbeddingFailure, ProbabilisticFailure, StructuralError, ParameterError) as exc:
            state.restore(snap)
            record = {"batch": k, "stage": type(exc).__name__, "error": str(exc)}
            record.update(getattr(exc, "context", {}) or {})
            record.update(getattr(exc, "stats", {}) or {})
            state.failures.append(record)
            log.warning("batch %d failed: %s", k, exc)
            continue
        hub_deg = _max_degree_of_edges(g.n, state.hub_edges_used())
        cap = cfg.hub_degree_cap(k + 1)
        if hub_deg > cap:
            log.warning(
                "hub-edge degree %d above the batch-%d cap %.1f", hub_deg, k + 1, cap
            )
    return state


def _max_degree_of_edges(n: int, edges: set[tuple[int, int]]) -> int:
    deg: dict[int, int] = {}
    for u, v in edges:
        deg[u] = deg.get(u, 0) + 1
        deg[v] = deg.get(v, 0) + 1
    return max(deg.values(), default=0)


# ---------------------------------------------------------------------------
# in-host slot pipeline (co-designed container + placement)
# ---------------------------------------------------------------------------
#
# Packing a *fixed* q-regular template into a partially consumed host is a
# bounded-degree spanning-universality problem and fails well below the
# utilization this pipeline needs.  Placing the forests directly into the
# host and choosing the container's padding edges among still-free host
# edges afterwards satisfies the same contracts (q-regular container holding
# the forests edge-disjointly; side-respecting, target-honoring,
# conflict-distinct images) and stays feasible, because tree vertices only
# ever need one free edge toward their placed parent.


def _complete_regular_inhost(
    v0, v1, batch_deg: dict[int, int], avail: EdgeAvailability, q: int, rng
) -> list[tuple[int, int]]:
    """Free host edges raising every slot vertex's batch degree to exactly q.

    Greedy max-deficit pairing with 2-swap repair through already chosen
    padding edges; chosen edges are consumed from `avail`.
    """
    deficit = {u: q - batch_deg.get(u, 0) for u in list(v0) + list(v1)}
    if any(d < 0 for d in deficit.values()):
        raise InternalError("batch degree exceeded q before completion")
    pad: set[tuple[int, int]] = set()
    mask1 = mask_of(v1)

    def deficient(side):
        return [u for u in side if deficit[u] > 0]

    for _ in range(6 * len(v0) * q + 20):
        left = deficient(v0)
        if not left:
            break
        u = max(left, key=lambda x: (deficit[x], rng.random()))
        options = [w for w in bits(avail.rows[u] & mask1) if deficit[w] > 0]
        if options:
            w = max(options, key=lambda x: (deficit[x], rng.random()))
            avail.consume(u, w)
            pad.add(edge_key(u, w))
            deficit[u] -= 1
            deficit[w] -= 1
            continue
        # 2-swap: remove padding edge (a, b) and insert (u, b), (a, w) for a
        # deficient w; net effect lifts u and w by one
        right = deficient(v1)
        done = False
        pad_list = list(pad)
        rng.shuffle(pad_list)
        for a, b in pad_list[:200]:
            if a == u or b == u:
                continue
            if not (avail.rows[u] >> b & 1):
                continue
            for w in right:
                if w != b and (avail.rows[a] >> w & 1):
                    pad.discard((a, b))
                    avail.restore_edge(a, b)
                    avail.consume(u, b)
                    avail.consume(a, w)
                    pad.add(edge_key(u, b))
                    pad.add(edge_key(a, w))
                    deficit[u] -= 1
                    deficit[w] -= 1
                    done = True
                    break
            if done:
                break
        if not done:
            raise ProbabilisticFailure(
                "in-host completion wedged",
                stats={"vertex": u, "deficit": deficit[u],
                       "remaining": sum(d for d in deficit.values() if d > 0)},
            )
    if any(d != 0 for d in deficit.values()):
        raise ProbabilisticFailure(
            "in-host completion left unmet deficits",
            stats={"remaining": sum(d for d in deficit.values() if d > 0)},
        )
    return sorted(pad)


def embed_forests_inhost(
    bin_: list[SlotForest],
    v0: tuple[int, ...],
    v1: tuple[int, ...],
    anchors_of: dict[tuple[int, int], tuple[int, ...]],
    forbidden_of: dict[tuple[int, int], int],
    avail: EdgeAvailability,
    cfg: PipelineConfig,
    seed: int,
) -> tuple[dict[tuple[int, int], int], list[tuple[int, int]], dict[int, int]]:
    """Place one sub-batch of forests into the host pair over free edges.

    Per forest: boundary vertices must be adjacent (via free edges) to all
    their hub anchors, avoid forbidden images, and take images disjoint from
    other forests' boundary images on the same side; every forest edge lands
    on a free host edge, consumed at placement.  A shared per-vertex degree
    budget of q - counting placed edges plus outstanding children - leaves
    room for the q-regular completion.  Returns (vertex images keyed by
    (unit, tree vertex), consumed forest/anchor edge keys, batch degrees).
    """
    side_masks = (mask_of(v0), mask_of(v1))
    n = len(v0)
    batch_deg: dict[int, int] = {}
    pending: dict[int, int] = {}
    used_w = {0: 0, 1: 0}  # masks of boundary images per side
    placed_all: dict[tuple[int, int], int] = {}
    consumed: list[tuple[int, int]] = []
    rng = make_rng(seed)

    for f in sorted(bin_, key=lambda f: -f.edge_count()):
        side_of = {v: 0 for v in f.x[0]}
        side_of.update({v: 1 for v in f.x[1]})
        adj_f: dict[int, list[int]] = {}
        fdeg: dict[int, int] = {}
        for a, b in f.edges:
            adj_f.setdefault(a, []).append(b)
            adj_f.setdefault(b, []).append(a)
            fdeg[a] = fdeg.get(a, 0) + 1
            fdeg[b] = fdeg.get(b, 0) + 1
        verts = sorted(f.x[0] | f.x[1])
        order: list[int] = []
        seen: set[int] = set()
        w_all = f.w[0] | f.w[1]
        # start components at boundary vertices so anchor constraints bind
        # while everything is still free
        for v in sorted(w_all) + verts:
            if v in seen:
                continue
            stack = [v]
            seen.add(v)
            while stack:
                u = stack.pop()
                order.append(u)
                for t in adj_f.get(u, ()):  # noqa: B023
                    if t not in seen:
                        seen.add(t)
                        stack.append(t)

        success = False
        stuck_info: dict = {}
        for attempt in range(cfg.forest_retry):
            rng_f = make_rng(seed, (f.unit_id * 977 + attempt) & 0xFFFFF)
            snap = avail.snapshot()
            deg_snap = dict(batch_deg)
            pend_snap = dict(pending)
            trial: dict[int, int] = {}
            journal: list[tuple[int, int]] = []
            ok = True
            for v in order:
                side = side_of[v]
                parent = next((p for p in adj_f.get(v, ()) if p in trial), None)
                need = fdeg.get(v, 0) - (1 if parent is not None else 0)
                cand = side_masks[side]
                if parent is not None:
                    cand &= avail.rows[trial[parent]]
                key = (f.unit_id, v)
                anchors = anchors_of.get(key, ())
                for u in anchors:
                    cand &= avail.rows[u]
                cand &= ~forbidden_of.get(key, 0)
                if v in w_all:
                    cand &= ~used_w[side]
                taken_here = set(trial.values())
                options = [
                    h
                    for h in bits(cand)
                    if h not in taken_here
                    and batch_deg.get(h, 0) + pending.get(h, 0) + fdeg.get(v, 0) <= cfg.q
                ]
                if not options:
                    ok = False
                    stuck_info = {
                        "vertex": v, "boundary": v in w_all,
                        "anchors": len(anchors), "raw_candidates": cand.bit_count(),
                        "has_parent": parent is not None,
                    }
                    break
                img = options[rng_f.randrange(len(options))]
                trial[v] = img
                if parent is not None:
                    avail.consume(trial[parent], img)
                    journal.append(edge_key(trial[parent], img))
                    batch_deg[trial[parent]] = batch_deg.get(trial[parent], 0) + 1
                    batch_deg[img] = batch_deg.get(img, 0) + 1
                    pending[trial[parent]] = pending.get(trial[parent], 0) - 1
                for u in anchors:
                    avail.consume(u, img)
                    journal.append(edge_key(u, img))
                pending[img] = pending.get(img, 0) + need
            if ok:
                success = True
                for v, img in trial.items():
                    placed_all[(f.unit_id, v)] = img
                    if v in w_all:
                        used_w[side_of[v]] |= 1 << img
                consumed.extend(journal)
                break
            avail.restore(snap)
            batch_deg = deg_snap
            pending = pend_snap
        if not success:
            raise EmbeddingFailure(
                f"in-host placement failed for the forest of unit {f.unit_id}",
                context={"unit": f.unit_id, "retries": cfg.forest_retry, **stuck_info},
            )
    # injectivity within each forest is enforced during placement; the
    # pending ledger must be clean before completion
    if any(p != 0 for p in pending.values()):
        raise InternalError("pending child-edge ledger nonzero after placement")
    return placed_all, consumed, batch_deg

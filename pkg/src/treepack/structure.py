"""Reduced multigraph, edge coloring into matchings, and slot carving.

The reduced multigraph replaces each part pair of density d_ij >= 1/t by
floor(d_ij * t) parallel edges, each carrying an edge-disjoint payload class
of the host obtained by uniform random splitting.  Color classes of the
multigraph are matchings; each selected matching becomes one packing batch,
and every matched pair is carved into two large V-slots (bulk hosts) and two
small U-slots (the hub) with super-regular degree checks on all four cross
pairs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from .errors import ParameterError, ProbabilisticFailure, StructuralError
from .graphs import Graph
from .regularity import (
    BipartitePairView,
    RegularityVerdict,
    partition_super_regular,
    regularity_test,
    split_edges,
    super_regular_trim,
)
from .rng import make_rng, mix_seed

log = logging.getLogger(__name__)

COLORING_RESTARTS = 8


@dataclass
class ReducedMultigraph:
    """Multigraph on parts with payload edge classes behind each parallel edge."""

    host: Graph
    parts: list[tuple[int, ...]]
    edges: list[tuple[int, int, int]]  # (part_i, part_j, label)
    payload: dict[tuple[int, int, int], tuple[tuple[int, int], ...]]
    t: int

    @property
    def part_count(self) -> int:
        return len(self.parts)

    def multiplicity(self, i: int, j: int) -> int:
        return sum(1 for (a, b, _) in self.edges if {a, b} == {i, j})

    def max_multiplicity(self) -> int:
        pairs = {}
        for a, b, _ in self.edges:
            key = (min(a, b), max(a, b))
            pairs[key] = pairs.get(key, 0) + 1
        return max(pairs.values(), default=0)

    def degree(self, i: int) -> int:
        return sum(1 for (a, b, _) in self.edges if i in (a, b))

    def max_degree(self) -> int:
        return max((self.degree(i) for i in range(self.part_count)), default=0)


def build_reduced(
    g: Graph, parts, pair_densities: dict, t: int, seed: int
) -> ReducedMultigraph:
    """Split every dense-enough pair into floor(d*t) payload classes.

    Pairs below density 1/t are dropped with a warning, mirroring the
    density threshold of the reduced graph.
    """
    if t < 1:
        raise ParameterError("t must be >= 1")
    parts = [tuple(p) for p in parts]
    seen = set()
    for p in parts:
        if seen & set(p):
            raise ParameterError("parts are not disjoint")
        seen |= set(p)
    edges: list[tuple[int, int, int]] = []
    payload: dict[tuple[int, int, int], tuple[tuple[int, int], ...]] = {}
    for (i, j), d in sorted(pair_densities.items()):
        if not (0 <= i < len(parts) and 0 <= j < len(parts) and i != j):
            raise ParameterError(f"bad pair key {(i, j)}")
        if d > 1:
            raise ParameterError(f"density {d} above 1 for pair {(i, j)}")
        t_ij = math.floor(d * t)
        if t_ij < 1:
            log.warning("pair %s dropped: density %.3f below 1/t = %.3f", (i, j), d, 1 / t)
            continue
        view = BipartitePairView(g, parts[i], parts[j])
        probs = [1.0 / (d * t)] * t_ij
        classes = split_edges(view, probs, mix_seed(seed, i * len(parts) + j))
        for label, cls in enumerate(classes):
            edges.append((i, j, label))
            payload[(i, j, label)] = tuple(cls)
    return ReducedMultigraph(host=g, parts=parts, edges=edges, payload=payload, t=t)


# ---------------------------------------------------------------------------
# multigraph edge coloring: greedy with Kempe-chain repair, palette D + mu
# ---------------------------------------------------------------------------


def _kempe_flip(edges, at_vertex, color_of, start: int, a: int, b: int) -> int:
    """Swap colors a and b along the maximal alternating path leaving
    `start` on its a-edge; `start` must miss color b.  Returns the far end.

    Recoloring is two-phase (all deletions, then all insertions) because
    interior path vertices carry both colors at once.
    """
    cur, col = start, a
    path = []
    while True:
        idx = at_vertex[cur].get(col)
        if idx is None:
            break
        path.append(idx)
        u, v, _ = edges[idx]
        cur = v if u == cur else u
        col = b if col == a else a
    for idx in path:
        u, v, _ = edges[idx]
        old = color_of[idx]
        for w in (u, v):
            if at_vertex[w].get(old) == idx:
                del at_vertex[w][old]
    for idx in path:
        u, v, _ = edges[idx]
        new = b if color_of[idx] == a else a
        color_of[idx] = new
        at_vertex[u][new] = idx
        at_vertex[v][new] = idx
    return cur


def edge_color_matchings(rm: ReducedMultigraph, seed: int = 0) -> list[list[tuple[int, int, int]]]:
    """Proper edge coloring of the reduced multigraph with at most
    max_degree + max_multiplicity colors; each class is a matching.

    Greedy insertion with Kempe-chain repair; stuck edges trigger a
    reshuffled restart.  Empty classes are dropped.
    """
    edges = list(rm.edges)
    if not edges:
        return []
    palette = rm.max_degree() + rm.max_multiplicity()
    for restart in range(COLORING_RESTARTS):
        rng = make_rng(seed, restart)
        order = list(range(len(edges)))
        if restart:
            rng.shuffle(order)
        color_of: dict[int, int] = {}
        at_vertex: list[dict[int, int]] = [dict() for _ in range(rm.part_count)]

        def place(idx: int, color: int) -> None:
            u, v, _ = edges[idx]
            color_of[idx] = color
            at_vertex[u][color] = idx
            at_vertex[v][color] = idx

        ok = True
        for idx in order:
            u, v, _ = edges[idx]
            done = False
            for _ in range(4 * palette):
                free_u = [c for c in range(palette) if c not in at_vertex[u]]
                free_v = [c for c in range(palette) if c not in at_vertex[v]]
                common = [c for c in free_u if c in set(free_v)]
                if common:
                    place(idx, common[0])
                    done = True
                    break
                a = rng.choice(free_u)
                b = rng.choice(free_v)
                # v misses b and has a; a successful flip frees a at v while
                # u keeps missing a unless the path ends at u
                _kempe_flip(edges, at_vertex, color_of, v, a, b)
            if not done:
                ok = False
                break
        if ok:
            classes: dict[int, list] = {}
            for idx, c in color_of.items():
                classes.setdefault(c, []).append(edges[idx])
            out = [sorted(cls) for _, cls in sorted(classes.items())]
            assert len(out) <= palette
            return out
    raise ProbabilisticFailure(
        f"edge coloring with {palette} colors failed after {COLORING_RESTARTS} restarts",
        attempts=COLORING_RESTARTS,
    )


# ---------------------------------------------------------------------------
# carving matchings into slot systems
# ---------------------------------------------------------------------------


@dataclass
class CarvedPair:
    """One matched part pair with its four carved slots.

    Slots u1/u2 are the small hub sides, v1/v2 the large bulk hosts; the
    payload is the edge class this matching consumed for the pair.
    """

    part_i: int
    part_j: int
    label: int
    u1: tuple[int, ...]
    u2: tuple[int, ...]
    v1: tuple[int, ...]
    v2: tuple[int, ...]
    payload: tuple[tuple[int, int], ...]
    verdicts: dict[str, RegularityVerdict] = field(default_factory=dict)


@dataclass
class MatchingBatch:
    index: int
    pairs: list[CarvedPair]

    def carrier_edges(self) -> set[tuple[int, int]]:
        out: set[tuple[int, int]] = set()
        for p in self.pairs:
            out.update(p.payload)
        return out


@dataclass
class MatchingStructure:
    kappa: int
    n_bullet: int
    batches: list[MatchingBatch]

    def to_json(self) -> dict:
        return {
            "kappa": self.kappa,
            "n_bullet": self.n_bullet,
            "matchings": [
                {
                    "pairs": [
                        {
                            "parts": [p.part_i, p.part_j],
                            "label": p.label,
                            "slot_sizes": {
                                "u1": len(p.u1),
                                "u2": len(p.u2),
                                "v1": len(p.v1),
                                "v2": len(p.v2),
                            },
                            "densities": {
                                key: v.density for key, v in p.verdicts.items()
                            },
                        }
                        for p in m.pairs
                    ]
                }
                for m in self.batches
            ],
        }


def _carve_pair(
    rm: ReducedMultigraph,
    edge: tuple[int, int, int],
    epsilon: float,
    n_bullet: int,
    seed: int,
) -> CarvedPair:
    i, j, label = edge
    payload = rm.payload[(i, j, label)]
    payload_graph = Graph.from_edges(rm.host.n, payload)
    pair = BipartitePairView(payload_graph, rm.parts[i], rm.parts[j])
    d = 1 / rm.t
    trimmed_a, trimmed_b = super_regular_trim(pair, 2 * epsilon, d)
    if n_bullet >= min(len(trimmed_a), len(trimmed_b)):
        raise ParameterError(
            f"n_bullet = {n_bullet} leaves no hub vertices in a pair of sides "
            f"{len(trimmed_a)}/{len(trimmed_b)} after trimming"
        )
    trimmed = BipartitePairView(payload_graph, trimmed_a, trimmed_b)
    v1, u1, v2, u2 = partition_super_regular(
        trimmed,
        3 * epsilon,
        d,
        n_bullet,
        len(trimmed_a) - n_bullet,
        n_bullet,
        len(trimmed_b) - n_bullet,
        seed,
    )
    verdicts = {}
    for key, (sa, sb) in {
        "vv": (v1, v2),
        "uu": (u1, u2),
        "uv": (u1, v2),
        "vu": (v1, u2),
    }.items():
        verdicts[key] = regularity_test(
            BipartitePairView(payload_graph, sa, sb),
            max(3 * epsilon, 0.25),
            mode="sampled",
            trials=120,
            seed=seed,
        )
    return CarvedPair(
        part_i=i, part_j=j, label=label,
        u1=u1, u2=u2, v1=v1, v2=v2,
        payload=payload, verdicts=verdicts,
    )


def select_and_carve(
    rm: ReducedMultigraph,
    colorings: list[list[tuple[int, int, int]]],
    alpha: float,
    t: int,
    epsilon: float,
    seed: int,
    n_bullet: int | None = None,
    kappa: int | None = None,
    allow_fewer: bool = False,
) -> MatchingStructure:
    """Pick the large matchings and carve their pairs into slot systems.

    kappa defaults to floor((alpha - t^(-1/3)) * t * r); matchings below
    size (1 - t^(-1/3)) * r / 2 are discarded.  When fewer large matchings
    exist than requested, a StructuralError reports the achievable count
    unless allow_fewer is set, in which case the run proceeds with it.
    """
    r = rm.part_count
    threshold = (1 - t ** (-1 / 3)) * r / 2
    big = sorted(
        (cls for cls in colorings if len(cls) >= threshold), key=len, reverse=True
    )
    target = kappa if kappa is not None else math.floor((alpha - t ** (-1 / 3)) * t * r)
    achievable = len(big)
    if target < 1 or achievable < target:
        if not (allow_fewer and achievable >= 1):
            raise StructuralError(
                f"need {target} matchings of size >= {threshold:.2f}, "
                f"only {achievable} available",
                achievable=achievable,
            )
        log.warning("carving %d matchings instead of the requested %d", achievable, target)
        target = achievable
    selected = big[:target]

    if n_bullet is None:
        block = min(len(p) for p in rm.parts)
        n_bullet = math.floor((1 - epsilon ** (1 / 20)) * block)
        if n_bullet < 1:
            raise ParameterError("derived n_bullet collapsed to zero; pass it explicitly")
    u_floor = epsilon ** (1 / 20) * rm.host.n / (2 * r)
    batches = []
    for k, matching in enumerate(selected):
        used_parts: set[int] = set()
        pairs = []
        for edge in sorted(matching):
            i, j, _ = edge
            if i in used_parts or j in used_parts:
                raise StructuralError(f"color class {k} is not a matching at pair {edge}")
            used_parts.update((i, j))
            carved = _carve_pair(rm, edge, epsilon, n_bullet, mix_seed(seed, k * 101 + i))
            if min(len(carved.u1), len(carved.u2)) < u_floor:
                log.warning(
                    "batch %d pair (%d,%d): hub slots of %d/%d below the "
                    "eps^(1/20)n/(2r) floor %.1f",
                    k, i, j, len(carved.u1), len(carved.u2), u_floor,
                )
            pairs.append(carved)
        batches.append(MatchingBatch(index=k, pairs=pairs))
    return MatchingStructure(kappa=target, n_bullet=n_bullet, batches=batches)

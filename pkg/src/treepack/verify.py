"""Independent auditors for packings, blow-up contracts, and the sharpness
counters.

Everything here recomputes from raw adjacency: the packing engine's
bookkeeping is never trusted, only the per-tree vertex maps.  check_packing
is the acceptance oracle for the pipeline; the two counting audits back the
host constructions that show why near-spanning trees are the limit (a
spanning path in the lopsided host must ride inside the big part, and a
complete ternary tree cannot avoid same-part edges).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import AuditError
from .graphs import Graph


@dataclass
class PackingReport:
    edge_disjoint: bool
    coverage: float
    hub_usage_max: int
    invalid_images: list = field(default_factory=list)
    duplicate_edges: list = field(default_factory=list)
    per_tree_status: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.edge_disjoint and not self.invalid_images

    def to_json(self) -> dict:
        return {
            "edge_disjoint": self.edge_disjoint,
            "coverage": self.coverage,
            "hub_usage_max": self.hub_usage_max,
            "invalid_images": self.invalid_images,
            "duplicate_edges": [list(e) for e in self.duplicate_edges],
            "per_tree_status": {str(k): v for k, v in sorted(self.per_tree_status.items())},
        }


def _iter_units(state):
    if hasattr(state, "units"):
        for uid, (tree, phi) in sorted(state.units.items()):
            yield uid, tree.n, tree.parent, dict(phi)
        return
    for rec in state["trees"]:
        parent = [None if p == -1 else p for p in rec["parent"]]
        yield rec["id"], rec["n"], parent, dict(tuple(x) for x in rec["map"])


def check_packing(g: Graph, hub: Graph, state) -> PackingReport:
    """Recompute validity of a packing from scratch.

    Per tree: the map is injective and total, and every tree edge lands on
    an edge of the host or the hub reserve.  Globally: no host edge carries
    two tree-edge images.  Coverage is the fraction of host (non-hub) edges
    used; hub_usage_max is the largest per-vertex degree among used hub
    edges.  Findings are data, never exceptions.
    """
    invalid = []
    per_tree = {}
    seen_edges: dict[tuple[int, int], object] = {}
    duplicates = []
    host_used = 0
    hub_degree: dict[int, int] = {}
    for uid, n, parent, phi in _iter_units(state):
        status = "valid"
        if len(phi) != n:
            invalid.append({"tree": uid, "problem": f"{len(phi)} of {n} vertices mapped"})
            status = "partial-map"
        if len(set(phi.values())) != len(phi):
            invalid.append({"tree": uid, "problem": "map not injective"})
            status = "not-injective"
        for child, par in enumerate(parent):
            if par is None or child not in phi or par not in phi:
                continue
            a, b = phi[child], phi[par]
            key = (a, b) if a < b else (b, a)
            in_host = g.has_edge(a, b)
            in_hub = hub.has_edge(a, b)
            if not in_host and not in_hub:
                invalid.append(
                    {"tree": uid, "problem": f"tree edge ({child},{par}) maps to "
                                             f"non-edge ({a},{b})"}
                )
                status = "non-edge"
                continue
            if key in seen_edges:
                duplicates.append(key)
                status = "duplicate-edge"
            else:
                seen_edges[key] = uid
                if in_host:
                    host_used += 1
                if in_hub:
                    hub_degree[a] = hub_degree.get(a, 0) + 1
                    hub_degree[b] = hub_degree.get(b, 0) + 1
        per_tree[uid] = status
    e_host = g.edge_count()
    return PackingReport(
        edge_disjoint=not duplicates,
        coverage=host_used / e_host if e_host else 0.0,
        hub_usage_max=max(hub_degree.values(), default=0),
        invalid_images=invalid,
        duplicate_edges=duplicates,
        per_tree_status=per_tree,
    )


# ---------------------------------------------------------------------------
# sharpness audits
# ---------------------------------------------------------------------------


def path_intra_part_count(host: Graph, larger_part, path_vertices) -> int:
    """Edges of an embedded path with both endpoints inside the larger part.

    The embedding must be a genuine path in the host (injective, consecutive
    vertices adjacent); anything else is an AuditError.
    """
    path = list(path_vertices)
    if len(set(path)) != len(path):
        raise AuditError("path embedding repeats a vertex")
    for v in path:
        if not 0 <= v < host.n:
            raise AuditError(f"vertex {v} outside the host")
    for a, b in zip(path, path[1:]):
        if not host.has_edge(a, b):
            raise AuditError(f"consecutive vertices ({a},{b}) not adjacent")
    big = set(larger_part)
    return sum(1 for a, b in zip(path, path[1:]) if a in big and b in big)


def min_spanning_path_intra_count(host: Graph, larger_part) -> int | None:
    """Minimum big-part edge count over all spanning paths, by subset DP.

    None when the host has no spanning path.  Exponential in n; meant for
    shrunk instances (n around 12).
    """
    n = host.n
    if n == 0:
        return None
    big_mask = 0
    for v in larger_part:
        big_mask |= 1 << v
    INF = float("inf")
    size = 1 << n
    best = [[INF] * n for _ in range(size)]
    for v in range(n):
        best[1 << v][v] = 0
    for mask in range(size):
        row = best[mask]
        for last in range(n):
            cur = row[last]
            if cur is INF:
                continue
            both_big = bool(big_mask >> last & 1)
            nxt = host.adj[last] & ~mask
            while nxt:
                low = nxt & -nxt
                v = low.bit_length() - 1
                nxt ^= low
                cost = cur + (1 if both_big and (big_mask >> v & 1) else 0)
                entry = best[mask | low]
                if cost < entry[v]:
                    entry[v] = cost
    full = size - 1
    out = min(best[full])
    return None if out is INF else int(out)


def ternary_noncrossing_count(parts, tree, mapping) -> int:
    """Tree-edge images landing inside a single part of a two-part host.

    `parts` is the pair of vertex sets; the embedding must be injective and
    total over the tree.
    """
    part_a, part_b = (set(parts[0]), set(parts[1]))
    phi = dict(mapping)
    if len(phi) != tree.n or len(set(phi.values())) != len(phi):
        raise AuditError("embedding is not an injective total map")
    count = 0
    for child, par in enumerate(tree.parent):
        if par is None:
            continue
        a, b = phi[child], phi[par]
        if (a in part_a and b in part_a) or (a in part_b and b in part_b):
            count += 1
    return count


# ---------------------------------------------------------------------------
# blow-up contract audit
# ---------------------------------------------------------------------------


def check_blowup_contracts(
    side0, side1, h_graphs, targets, conflicts, placements, host: Graph
) -> list[str]:
    """Post-hoc check of the three blow-up contracts plus edge-disjointness.

    Returns a list of human-readable violations (empty means compliant):
    side-respecting images, targeted vertices adjacent to all their anchors
    (or inside their fixed sets), distinct images across conflict edges, and
    all mapped H-edges landing on distinct host edges.
    """
    issues = []
    s0, s1 = set(side0), set(side1)
    used: set[tuple[int, int]] = set()
    for sb, placed in enumerate(placements):
        h_adj = h_graphs[sb]
        half = len(h_adj) // 2
        tmap = targets[sb] if sb < len(targets) else {}
        for a, img in placed.items():
            side = tmap[a].side if a in tmap else (0 if a < half else 1)
            if side == 0 and img not in s0 or side == 1 and img not in s1:
                issues.append(f"B1: sub-batch {sb} vertex {a} image {img} off its side")
        for a, t in tmap.items():
            img = placed.get(a)
            if img is None:
                issues.append(f"B2: sub-batch {sb} targeted vertex {a} unplaced")
                continue
            if t.fixed_mask is not None and not (t.fixed_mask >> img & 1):
                issues.append(f"B2: sub-batch {sb} vertex {a} outside its fixed target")
            for u in t.anchors:
                if not host.has_edge(u, img):
                    issues.append(
                        f"B2: sub-batch {sb} vertex {a} not host-adjacent to anchor {u}"
                    )
                key = (u, img) if u < img else (img, u)
                if key in used:
                    issues.append(f"edge reuse: anchor edge {key} used twice")
                used.add(key)
        for a, nbrs in enumerate(h_adj):
            for b in nbrs:
                if a < b and a in placed and b in placed:
                    x, y = placed[a], placed[b]
                    if not host.has_edge(x, y):
                        issues.append(
                            f"H-edge ({a},{b}) of sub-batch {sb} maps to non-edge"
                        )
                    key = (x, y) if x < y else (y, x)
                    if key in used:
                        issues.append(f"edge reuse: host edge {key} used twice")
                    used.add(key)
    for node, nbrs in conflicts.adj.items():
        for other in nbrs:
            if node < other:
                a_img = placements[node[0]].get(node[1]) if node[0] < len(placements) else None
                b_img = placements[other[0]].get(other[1]) if other[0] < len(placements) else None
                if a_img is not None and a_img == b_img:
                    issues.append(f"B3: conflict pair {node} / {other} share image {a_img}")
    return issues

"""Shortest undetectable logical error chains.

For each sector graph and each observable, the graph is lifted to two copies
(``(vertex, parity)``) where an edge flips the parity iff it flips the
observable.  A logical chain with empty syndrome is a closed walk with odd
parity, so it contains an odd edge ``(u, w)`` closed by an even walk from
``w`` back to ``u``.  The shortest chain is therefore

    min over odd edges (u, w) of  1 + dist((w, 0), (u, 0))

with the boundary treated as an ordinary vertex.  Repeated edges in a walk
cancel, which can only shorten it, so the minimum is exact.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .dem import BOUNDARY, DetectorErrorModel, MatchingGraph, split_graphlike

MODES = ("Unweighted", "Weighted")


@dataclass
class LogicalChain:
    sector: str
    edges: list  # edge keys of the sector graph, in walk order
    mechanisms: list[int]  # one representative mechanism per edge
    length: int
    weight: float
    observables: tuple[int, ...]
    coords: list = field(default_factory=list)  # endpoint coordinates per edge
    edge_objects: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "sector": self.sector,
            "length": self.length,
            "weight": self.weight,
            "observables": list(self.observables),
            "mechanisms": self.mechanisms,
            "edges": [[u, v] for u, v in self.edges],
            "coords": self.coords,
        }


def _lifted(graph: MatchingGraph, obs_bit: int, weighted: bool):
    """Parity-lifted adjacency; parallel edges keep the lightest per lifted pair."""
    n = graph.num_vertices + 1  # last index is the boundary
    best: dict[tuple[int, int], tuple[float, Edge]] = {}
    for e in graph.all_edges():
        u = e.u
        v = n - 1 if e.v == BOUNDARY else e.v
        flip = (e.observables >> obs_bit) & 1
        w = e.weight if weighted else 1.0
        for b in (0, 1):
            a, c = u + b * n, v + (b ^ flip) * n
            pair = (min(a, c), max(a, c))
            if pair not in best or w < best[pair][0]:
                best[pair] = (w, e)
    rows, cols, vals = [], [], []
    lookup = {}
    for (a, c), (w, e) in best.items():
        rows += [a, c]
        cols += [c, a]
        vals += [w, w]
        lookup[(a, c)] = lookup[(c, a)] = e
    mat = csr_matrix((vals, (rows, cols)), shape=(2 * n, 2 * n))
    return mat, lookup, n


def _sector_chain(graph: MatchingGraph, obs_bit: int, weighted: bool):
    odd = [e for e in graph.all_edges() if (e.observables >> obs_bit) & 1]
    if not odd:
        return None
    mat, lookup, n = _lifted(graph, obs_bit, weighted)
    idx = lambda v: n - 1 if v == BOUNDARY else v  # noqa: E731
    sources = sorted({idx(e.v) for e in odd} | {idx(e.u) for e in odd})
    dist, pred = dijkstra(mat, directed=False, indices=sources, return_predecessors=True, min_only=False)
    row = {s: k for k, s in enumerate(sources)}
    best = None
    for e in odd:
        w_edge = e.weight if weighted else 1.0
        for a, c in ((idx(e.u), idx(e.v)), (idx(e.v), idx(e.u))):
            d = dist[row[c], a]  # even walk from c back to a
            if not np.isfinite(d):
                continue
            cand = (d + w_edge, (e.u, e.v), c, a, e)
            if best is None or cand[:2] < best[:2]:
                best = cand
    if best is None:
        return None
    total, _, start, end, first = best
    walk = [end]
    r = row[start]
    while walk[-1] != start:
        walk.append(int(pred[r, walk[-1]]))
    walk.reverse()  # start ... end, all lifted nodes; start/end have parity 0
    edges = [first]
    for a, c in zip(walk, walk[1:]):
        edges.append(lookup[(a, c)])
    return total, edges


def min_undetectable(dem: DetectorErrorModel, mode: str = "Unweighted", graphs=None) -> LogicalChain:
    """Smallest (or lightest, in weighted mode) set of graph edges with empty
    syndrome and nontrivial logical action, minimised over sectors and observables."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    weighted = mode == "Weighted"
    if graphs is None:
        primal, dual, _ = split_graphlike(dem)
        graphs = (primal, dual)
    best = None
    for graph in graphs:
        for k in range(dem.num_observables):
            got = _sector_chain(graph, k, weighted)
            if got is None:
                continue
            total, edges = got
            cand = (total, len(edges), graph.sector, k, edges, graph)
            if best is None or cand[:4] < best[:4]:
                best = cand
    if best is None:
        raise ValueError("no logical chain: no edge flips any observable")
    total, _, sector, _, edges, graph = best
    # cancel repeated edges (possible in walks) and collect logical action
    count = Counter(id(e) for e in edges)
    kept, seen = [], set()
    for e in edges:
        if id(e) not in seen and count[id(e)] % 2 == 1:
            kept.append(e)
        seen.add(id(e))
    mask = 0
    mechs, coords, weight = [], [], 0.0
    for e in kept:
        mask ^= e.observables
        weight += e.weight
        mechs.append(max(e.sources, key=lambda m: (dem.mechanisms[m].probability, -m)))
        cu = list(graph.coords[e.u])
        cv = None if e.v == BOUNDARY else list(graph.coords[e.v])
        coords.append([cu, cv])
    obs = tuple(k for k in range(dem.num_observables) if mask >> k & 1)
    return LogicalChain(sector, [(e.u, e.v) for e in kept], mechs, len(kept), weight, obs, coords, kept)


def effective_distance(dem: DetectorErrorModel) -> int:
    return min_undetectable(dem).length


def classify_chain(chain: LogicalChain, dem: DetectorErrorModel, graphs=None) -> dict:
    """Noise sources behind every edge of a chain.

    Returns per-edge source categories (all merged contributors) and a
    summary counting each edge under its representative mechanism's
    leading category.
    """
    if graphs is None:
        primal, dual, _ = split_graphlike(dem)
        graphs = (primal, dual)
    graph = next(g for g in graphs if g.sector == chain.sector)
    objs = chain.edge_objects or [graph.edges[k] for k in chain.edges]
    per_edge = []
    summary: Counter = Counter()
    for key, rep, e in zip(chain.edges, chain.mechanisms, objs):
        cats = sorted({p.category for m in e.sources for p in dem.mechanisms[m].provenance})
        rep_prov = dem.mechanisms[rep].provenance
        lead = rep_prov[0]
        per_edge.append(
            {
                "edge": list(key),
                "categories": cats,
                "representative": {
                    "category": lead.category,
                    "instruction": lead.instruction,
                    "qubits": list(lead.qubits),
                    "pauli": lead.pauli,
                    "tag": lead.tag,
                },
            }
        )
        summary[lead.category] += 1
    return {"edges": per_edge, "summary": dict(summary)}

"""Matching decoders and a brute-force maximum-likelihood oracle.

:class:`BatchDecoder` wraps the sparse blossom implementation in
``pymatching`` for bulk work.  :func:`mwpm_decode` is an independent exact
matcher built on shortest paths and ``networkx``'s blossom algorithm; it is
slow and meant for cross-checking.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass

import networkx as nx
import numpy as np
import pymatching

from .dem import BOUNDARY, DetectorErrorModel, MatchingGraph, split_graphlike


@dataclass(frozen=True)
class DecodeResult:
    observables: int  # predicted flip mask
    edges: tuple  # matched edge keys (or mechanism ids for the ML decoder)
    weight: float


# -- batch decoding with pymatching -----------------------------------------------

def to_pymatching(graph: MatchingGraph) -> pymatching.Matching:
    m = pymatching.Matching()
    for e in graph.sorted_edges():
        faults = {k for k in range(graph.num_observables) if e.observables >> k & 1}
        if e.v == BOUNDARY:
            m.add_boundary_edge(e.u, fault_ids=faults, weight=e.weight, error_probability=e.p, merge_strategy="smallest-weight")
        else:
            m.add_edge(e.u, e.v, fault_ids=faults, weight=e.weight, error_probability=e.p, merge_strategy="smallest-weight")
    return m


class BatchDecoder:
    """Decodes both sectors of a detector error model shot by shot."""

    def __init__(self, dem: DetectorErrorModel):
        self.dem = dem
        primal, dual, self.decomposition_log = split_graphlike(dem)
        self.graphs = (primal, dual)
        self.matchers = [to_pymatching(g) if g.edges else None for g in self.graphs]

    def predict(self, detectors: np.ndarray) -> np.ndarray:
        """(shots, n_det) bool -> (shots, n_obs) bool predicted observable flips."""
        shots = detectors.shape[0]
        n_obs = self.dem.num_observables
        out = np.zeros((shots, n_obs), dtype=bool)
        for graph, matcher in zip(self.graphs, self.matchers):
            if matcher is None or not graph.detectors:
                continue
            sub = np.ascontiguousarray(detectors[:, graph.detectors], dtype=np.uint8)
            # pymatching may know fewer detectors than the sector has (isolated vertices)
            n = matcher.num_detectors
            if n < sub.shape[1]:
                if sub[:, n:].any():
                    raise ValueError(f"{graph.sector}: flipped detector without any incident edge")
                sub = sub[:, :n]
            elif n > sub.shape[1]:
                sub = np.pad(sub, ((0, 0), (0, n - sub.shape[1])))
            pred = matcher.decode_batch(sub)
            if pred.shape[1] < n_obs:
                pred = np.pad(pred, ((0, 0), (0, n_obs - pred.shape[1])))
            out ^= pred[:, :n_obs].astype(bool)
        return out

    def failures(self, detectors: np.ndarray, observables: np.ndarray) -> np.ndarray:
        """(shots, n_obs) bool: which observables were mispredicted per shot."""
        return self.predict(detectors) ^ observables


# -- exact matching via networkx ---------------------------------------------------

class ShortestPaths:
    """Dijkstra from flipped vertices, with logical parity along each path.

    Ties between equal-weight paths go to the path whose edge-key sequence
    is lexicographically smallest, so results are reproducible.
    """

    def __init__(self, graph: MatchingGraph):
        self.graph = graph
        self.adj: list[list[tuple[int, float, int, tuple]]] = [[] for _ in range(graph.num_vertices + 1)]
        b = graph.num_vertices  # boundary node id
        for key in sorted(graph.edges):
            e = graph.edges[key]
            v = b if e.v == BOUNDARY else e.v
            self.adj[e.u].append((v, e.weight, e.observables, key))
            self.adj[v].append((e.u, e.weight, e.observables, key))
        self.boundary = b
        self._cache: dict[int, tuple[dict, dict]] = {}

    def from_vertex(self, src: int):
        if src in self._cache:
            return self._cache[src]
        dist = {src: 0.0}
        info = {src: (0, ())}  # node -> (observable mask, path edge keys)
        heap = [(0.0, (), src)]
        done = set()
        while heap:
            d, path, u = heapq.heappop(heap)
            if u in done:
                continue
            done.add(u)
            if u == self.boundary and u != src:
                continue  # paths do not pass through the boundary
            for v, w, obs, key in self.adj[u]:
                nd = d + w
                npath = path + (key,)
                old = dist.get(v)
                if old is None or nd < old - 1e-12 or (abs(nd - old) <= 1e-12 and npath < info[v][1]):
                    dist[v] = nd
                    info[v] = (info[u][0] ^ obs, npath)
                    heapq.heappush(heap, (nd, npath, v))
        self._cache[src] = (dist, info)
        return dist, info


def mwpm_decode(graph: MatchingGraph, syndrome, paths: ShortestPaths | None = None) -> DecodeResult:
    """Exact minimum-weight perfect matching of the flipped vertices.

    ``syndrome`` holds local vertex ids of ``graph``.  Each flipped vertex is
    paired with another flipped vertex or with the boundary.
    """
    flipped = sorted(set(int(s) for s in syndrome))
    if not flipped:
        return DecodeResult(0, (), 0.0)
    paths = paths or ShortestPaths(graph)
    b = paths.boundary
    g = nx.Graph()
    tables = {v: paths.from_vertex(v) for v in flipped}
    for v in flipped:
        dist, _ = tables[v]
        if b not in dist and not any(u in dist for u in flipped if u != v):
            raise ValueError(f"flipped vertex {v} cannot be matched")
    big = 1.0 + sum(e.weight for e in graph.edges.values())
    for a, c in itertools.combinations(flipped, 2):
        dist, _ = tables[a]
        if c in dist:
            g.add_edge(("v", a), ("v", c), weight=big - dist[c])
    for v in flipped:
        dist, _ = tables[v]
        if b in dist:
            g.add_edge(("v", v), ("b", v), weight=big - dist[b])
    for a, c in itertools.combinations(flipped, 2):
        if b in tables[a][0] and b in tables[c][0]:
            g.add_edge(("b", a), ("b", c), weight=big)
    matching = nx.max_weight_matching(g, maxcardinality=True)
    obs = 0
    total = 0.0
    used = []
    for x, y in sorted(tuple(sorted(p)) for p in matching):
        if x[0] == "b" and y[0] == "b":
            continue
        if x[0] == "b":
            x, y = y, x
        src = x[1]
        dst = b if y[0] == "b" else y[1]
        dist, info = tables[src]
        obs ^= info[dst][0]
        total += dist[dst]
        used.extend(info[dst][1])
    return DecodeResult(obs, tuple(used), total)


def brute_force_matching_weight(graph: MatchingGraph, syndrome) -> float:
    """Minimum pairing weight by exhaustive enumeration (tiny syndromes only)."""
    flipped = sorted(set(syndrome))
    paths = ShortestPaths(graph)
    b = paths.boundary

    def dist(a, c):
        return paths.from_vertex(a)[0].get(c, math.inf)

    def best(rest):
        if not rest:
            return 0.0
        first, others = rest[0], rest[1:]
        out = dist(first, b) + best(others)
        for k, o in enumerate(others):
            out = min(out, dist(first, o) + best(others[:k] + others[k + 1 :]))
        return out

    return best(tuple(flipped))


# -- brute-force maximum likelihood ------------------------------------------------

class MLDecoder:
    """Most probable set of at most ``max_faults`` mechanisms per syndrome cluster.

    With ``escalate_to`` set, a cluster that has no explanation within
    ``max_faults`` is retried with budgets up to ``escalate_to``.

    The syndrome is split into clusters: two flipped detectors share a cluster
    when some chain of at most ``max_faults`` mechanisms links them.  Each
    cluster is solved independently by exhaustive search, which is exact as
    long as no optimal explanation links two clusters.
    """

    def __init__(self, dem: DetectorErrorModel, max_faults: int = 3, escalate_to: int | None = None):
        self.dem = dem
        self.max_faults = max_faults
        # clusters with no explanation inside the budget are retried with a larger one
        self.escalate_to = max_faults if escalate_to is None else max(escalate_to, max_faults)
        self.symptoms = [frozenset(m.detectors) for m in dem.mechanisms]
        self.cost = [math.log((1 - m.probability) / m.probability) for m in dem.mechanisms]
        self.by_symptom: dict[frozenset, int] = {}
        self.touching: list[list[int]] = [[] for _ in range(dem.num_detectors)]
        for k, m in enumerate(dem.mechanisms):
            key = frozenset(m.detectors)
            old = self.by_symptom.get(key)
            if old is None or (self.cost[k], k) < (self.cost[old], old):
                self.by_symptom[key] = k
            for d in m.detectors:
                self.touching[d].append(k)
        nb = [set() for _ in range(dem.num_detectors)]
        for m in dem.mechanisms:
            for a in m.detectors:
                nb[a].update(m.detectors)
        self.neighbours = nb
        self.cache: dict[frozenset, tuple] = {}

    def clusters(self, flipped: list[int], reach_hops: int | None = None) -> list[list[int]]:
        hops = self.max_faults if reach_hops is None else reach_hops
        flipped_set = set(flipped)
        seen: set[int] = set()
        out = []
        for s in flipped:
            if s in seen:
                continue
            comp = [s]
            seen.add(s)
            stack = [s]
            while stack:
                u = stack.pop()
                # detectors within max_faults mechanism hops
                frontier, reach = {u}, {u}
                for _ in range(hops):
                    frontier = set().union(*(self.neighbours[x] for x in frontier)) - reach
                    reach |= frontier
                for v in sorted(reach & flipped_set):
                    if v not in seen:
                        seen.add(v)
                        comp.append(v)
                        stack.append(v)
            out.append(sorted(comp))
        return out

    def _solve(self, target: frozenset, budget: int, memo: dict):
        """(cost, sorted mechanism ids) of the best explanation, or None.

        Some fault of any explanation flips the smallest target detector, so
        branching on the faults that touch it enumerates every fault set.
        """
        if not target:
            return (0.0, ())
        key = (target, budget)
        if key in memo:
            return memo[key]
        best = None
        k = self.by_symptom.get(target)
        if k is not None:
            best = (self.cost[k], (k,))
        if budget >= 2:
            for f1 in self.touching[min(target)]:
                sub = self._solve(target ^ self.symptoms[f1], budget - 1, memo)
                if sub is None or f1 in sub[1]:
                    continue
                cand = (sub[0] + self.cost[f1], tuple(sorted(sub[1] + (f1,))))
                if best is None or cand < best:
                    best = cand
        memo[key] = best
        return best

    def decode(self, flipped) -> DecodeResult:
        key = frozenset(int(x) for x in flipped)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        obs = 0
        ids: list[int] = []
        total = 0.0
        # escalation widens both the fault budget and the cluster reach
        for budget in range(self.max_faults, self.escalate_to + 1):
            solved = [self._solve(frozenset(cl), budget, {}) for cl in self.clusters(sorted(key), budget)]
            if all(got is not None for got in solved):
                break
        else:
            raise ValueError(f"no explanation with at most {self.escalate_to} faults per cluster")
        for got in solved:
            total += got[0]
            ids.extend(got[1])
        for i in ids:
            for o in self.dem.mechanisms[i].observables:
                obs ^= 1 << o
        res = DecodeResult(obs, tuple(sorted(ids)), total)
        self.cache[key] = res
        return res


def ml_decode_bruteforce(dem: DetectorErrorModel, syndrome, max_faults: int = 3) -> DecodeResult:
    """Most probable fault subset (up to ``max_faults`` per cluster) explaining ``syndrome``.

    Ties go to the lexicographically smallest sorted list of mechanism ids.
    """
    return MLDecoder(dem, max_faults).decode(syndrome)

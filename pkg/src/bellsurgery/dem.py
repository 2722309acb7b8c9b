"""Detector error models and matching graphs.

:func:`extract` propagates every single Pauli that a noise channel can apply
through the noiseless circuit (one frame lane per basis Pauli, products
composed by XOR) and merges faults with identical symptoms.
:func:`split_graphlike` then separates every mechanism into its primal
(Z-check) and dual (X-check) parts and turns each part into matching-graph
edges, decomposing hyperedges into known edges.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field

from .circuit import Circuit
from . import sim

log = logging.getLogger(__name__)

BOUNDARY = -1
SECTORS = ("primal", "dual")


@dataclass(frozen=True)
class Provenance:
    instruction: int
    name: str
    tag: str
    qubits: tuple[int, ...]
    pauli: str
    p: float
    after: str = ""  # instruction the channel follows

    @property
    def category(self) -> str:
        """Coarse noise source: Interface, TeleportPair, SeamGate, BulkGate,
        SingleQubitGate, Idle, SPAM or Injected."""
        if self.name == "DEPOLARIZE2":
            if self.tag == "interface":
                return "Interface"
            if self.tag == "teleport":
                return "TeleportPair"
            return "SeamGate" if self.tag == "seam" else "BulkGate"
        if self.name == "DEPOLARIZE1":
            return "Idle" if self.after == "I" else "SingleQubitGate"
        if self.name == "X_ERROR":
            return "SPAM"
        return "Injected"


@dataclass(frozen=True)
class FaultMechanism:
    probability: float
    detectors: tuple[int, ...]
    observables: tuple[int, ...]
    provenance: tuple[Provenance, ...]

    def to_dict(self) -> dict:
        return {
            "p": self.probability,
            "detectors": list(self.detectors),
            "observables": list(self.observables),
            "sources": [[s.instruction, s.name, s.tag, list(s.qubits), s.pauli] for s in self.provenance],
        }


def combine(p1: float, p2: float) -> float:
    """Probability that exactly one of two independent events fires."""
    return p1 * (1 - p2) + p2 * (1 - p1)


@dataclass
class DetectorErrorModel:
    num_detectors: int
    num_observables: int
    coords: list[tuple[float, ...]]
    sectors: list[str]
    observable_sectors: list[str]
    mechanisms: list[FaultMechanism]
    raw_count: int = 0  # (channel, Pauli) pairs before merging

    def to_json(self) -> str:
        return json.dumps(
            {
                "num_detectors": self.num_detectors,
                "num_observables": self.num_observables,
                "detectors": [{"coords": list(c), "sector": s} for c, s in zip(self.coords, self.sectors)],
                "observable_sectors": self.observable_sectors,
                "mechanisms": [m.to_dict() for m in self.mechanisms],
            },
            indent=1,
        )

    def to_text(self) -> str:
        """Line format readable by common stabilizer tools (``error(p) D0 D3 L1``)."""
        lines = []
        for k, (c, s) in enumerate(zip(self.coords, self.sectors)):
            lines.append(f"detector({', '.join(_num(v) for v in c)}) D{k}")
        for m in self.mechanisms:
            targets = [f"D{d}" for d in m.detectors] + [f"L{o}" for o in m.observables]
            lines.append(f"error({m.probability!r}) " + " ".join(targets))
        return "\n".join(lines) + "\n"


def _num(v: float) -> str:
    return str(int(v)) if float(v) == int(v) else repr(float(v))


_PAULI_BITS = {"X": (1, 0), "Z": (0, 1), "Y": (1, 1)}


def _channel_terms(name: str, p: float, arity: int) -> list[tuple[str, float]]:
    if name == "DEPOLARIZE1":
        return [(q, p / 3) for q in "XYZ"]
    if name == "DEPOLARIZE2":
        return [("".join(t), p / 15) for t in itertools.product("IXYZ", repeat=2) if t != ("I", "I")]
    return [(name[0], p)]


def _xor(a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...]:
    return tuple(sorted(set(a) ^ set(b)))


def _mask_list(mask: int) -> tuple[int, ...]:
    out, k = [], 0
    while mask:
        if mask & 1:
            out.append(k)
        mask >>= 1
        k += 1
    return tuple(out)


def raw_faults(circuit: Circuit) -> list[tuple[float, tuple[int, ...], int, Provenance]]:
    """One entry per (channel unit, Pauli): probability, detectors, observable mask, provenance."""
    bad_d, bad_o = sim.nondeterministic(circuit.without_noise())
    if bad_d or bad_o:
        raise ValueError(f"noiseless circuit has non-deterministic detectors {bad_d[:10]} or observables {bad_o}")
    program = sim.Program(circuit)
    lanes = sim.fault_lanes(program)
    index = {(int(s), int(u), int(c), int(b)): k
             for k, (s, u, c, b) in enumerate(zip(lanes.sites, lanes.units, lanes.columns, lanes.bases))}
    out = []
    for s, site in enumerate(program.sites):
        if site.p <= 0:
            continue
        arity = site.units.shape[1]
        terms = _channel_terms(site.name, site.p, arity)
        before = circuit.instructions[site.instruction - 1].name if site.instruction else ""
        for u in range(site.units.shape[0]):
            qs = tuple(int(q) for q in site.units[u])
            for pauli, prob in terms:
                dets: tuple[int, ...] = ()
                obs = 0
                for col, letter in enumerate(pauli):
                    if letter == "I":
                        continue
                    xb, zb = _PAULI_BITS[letter]
                    for basis, on in ((0, xb), (1, zb)):
                        if on:
                            k = index[(s, u, col, basis)]
                            dets = _xor(dets, lanes.detectors[k])
                            obs ^= lanes.observables[k]
                out.append((prob, dets, obs, Provenance(site.instruction, site.name, site.tag, qs, pauli, site.p, before)))
    return out


def extract(circuit: Circuit) -> DetectorErrorModel:
    """Merged detector error model of an annotated circuit."""
    raw = raw_faults(circuit)
    merged: dict[tuple, list] = {}
    for prob, dets, obs, prov in raw:
        if not dets:
            if obs:
                raise ValueError(f"undetectable logical fault from {prov}: the circuit has distance zero")
            continue
        key = (dets, obs)
        if key in merged:
            entry = merged[key]
            entry[0] = combine(entry[0], prob)
            entry[1].append(prov)
        else:
            merged[key] = [prob, [prov]]
    mechs = [
        FaultMechanism(p, dets, _mask_list(obs), tuple(provs))
        for (dets, obs), (p, provs) in sorted(merged.items(), key=lambda kv: (kv[0][0], kv[0][1]))
    ]
    dets_meta = circuit.detectors
    return DetectorErrorModel(
        num_detectors=len(dets_meta),
        num_observables=circuit.num_observables,
        coords=[d.coords for d in dets_meta],
        sectors=[d.sector for d in dets_meta],
        observable_sectors=circuit.observable_sectors,
        mechanisms=mechs,
        raw_count=len(raw),
    )


# -- matching graphs -----------------------------------------------------------

def edge_weight(p: float) -> float:
    """ln((1 - p) / p), clamped to a small positive value for p >= 1/2."""
    if p <= 0:
        raise ValueError("zero-probability edges have infinite weight")
    if p >= 0.5:
        return 1e-9
    return math.log((1 - p) / p)


@dataclass
class Edge:
    u: int  # local vertex id
    v: int  # local vertex id or BOUNDARY
    p: float
    observables: int  # bitmask over all observables
    sources: list = field(default_factory=list)  # mechanism ids

    @property
    def weight(self) -> float:
        return edge_weight(self.p)


@dataclass
class MatchingGraph:
    sector: str
    detectors: list[int]  # local id -> global detector id
    coords: list[tuple[float, ...]]
    edges: dict  # (u, v) with u > v or v == BOUNDARY -> Edge
    num_observables: int

    def __post_init__(self):
        self.local = {g: k for k, g in enumerate(self.detectors)}
        # parallel edges whose logical action differs from the matched edge
        self.alternatives: dict[tuple[int, int], list[Edge]] = {}

    def all_edges(self) -> list[Edge]:
        out = []
        for key in sorted(self.edges):
            out.append(self.edges[key])
            out.extend(self.alternatives.get(key, ()))
        return out

    @property
    def num_vertices(self) -> int:
        return len(self.detectors)

    def degrees(self) -> list[int]:
        deg = [0] * len(self.detectors)
        for (u, v) in self.edges:
            deg[u] += 1
            if v != BOUNDARY:
                deg[v] += 1
        return deg

    def neighbours(self) -> list[set]:
        nb = [set() for _ in self.detectors]
        for (u, v) in self.edges:
            nb[u].add(v)
            if v != BOUNDARY:
                nb[v].add(u)
        return nb

    def to_json(self) -> str:
        return json.dumps(
            {
                "sector": self.sector,
                "detectors": self.detectors,
                "coords": [list(c) for c in self.coords],
                "edges": [
                    {"u": e.u, "v": e.v, "p": e.p, "weight": e.weight, "observables": list(_mask_list(e.observables))}
                    for e in self.sorted_edges()
                ],
            },
            indent=1,
        )

    def to_edge_list(self) -> str:
        """``u v weight observables`` per line; ``B`` marks the boundary."""
        lines = []
        for e in self.sorted_edges():
            v = "B" if e.v == BOUNDARY else str(e.v)
            obs = ",".join(str(o) for o in _mask_list(e.observables)) or "-"
            lines.append(f"{e.u} {v} {e.weight!r} {obs}")
        return "\n".join(lines) + "\n"

    def sorted_edges(self) -> list[Edge]:
        return [self.edges[k] for k in sorted(self.edges)]


@dataclass(frozen=True)
class DecompositionRecord:
    mechanism: int
    sector: str
    detectors: tuple[int, ...]
    pieces: tuple[tuple[int, ...], ...]
    forced: bool  # True if no decomposition into known edges was found
    provenance: tuple[Provenance, ...]


def _edge_key(a: int, b: int) -> tuple[int, int]:
    if b == BOUNDARY:
        return (a, BOUNDARY)
    return (max(a, b), min(a, b))


def _components(dem: DetectorErrorModel, m: FaultMechanism):
    """Per-sector (detectors, observable mask) of one mechanism."""
    out = {}
    for sector in SECTORS:
        dets = tuple(d for d in m.detectors if dem.sectors[d] == sector)
        obs = 0
        for o in m.observables:
            if dem.observable_sectors[o] == sector:
                obs |= 1 << o
        out[sector] = (dets, obs)
    return out


def _pairings(dets: tuple[int, ...]):
    """All ways to split ``dets`` into pieces of size 1 or 2 (no piece repeated)."""
    if not dets:
        yield ()
        return
    first, rest = dets[0], dets[1:]
    yield from (((first,),) + tail for tail in _pairings(rest))
    for k, other in enumerate(rest):
        remaining = rest[:k] + rest[k + 1 :]
        yield from (((first, other),) + tail for tail in _pairings(remaining))


def split_graphlike(dem: DetectorErrorModel):
    """Return ``(primal, dual, log)`` where ``log`` lists every decomposed hyperedge."""
    comps = [_components(dem, m) for m in dem.mechanisms]
    # known graphlike pieces per sector: detector tuple -> observable mask (most probable source wins)
    known: dict[str, dict[tuple[int, ...], tuple[float, int]]] = {s: {} for s in SECTORS}
    for m, comp in zip(dem.mechanisms, comps):
        for sector, (dets, obs) in comp.items():
            if 1 <= len(dets) <= 2:
                prev = known[sector].get(dets)
                if prev is None or m.probability > prev[0]:
                    known[sector][dets] = (m.probability, obs)
    graphs = {}
    records: list[DecompositionRecord] = []
    unresolved_obs = 0
    for sector in SECTORS:
        det_ids = [d for d in range(dem.num_detectors) if dem.sectors[d] == sector]
        local = {g: k for k, g in enumerate(det_ids)}
        edges: dict[tuple[int, int], Edge] = {}
        alternatives: dict[tuple[int, int], dict[int, Edge]] = {}

        def add(piece, obs, p, source):
            a = local[piece[0]]
            b = local[piece[1]] if len(piece) == 2 else BOUNDARY
            key = _edge_key(a, b)
            e = edges.get(key)
            if e is None:
                edges[key] = Edge(key[0], key[1], p, obs, [source])
            elif e.observables == obs:
                e.p = combine(e.p, p)
                e.sources.append(source)
            else:
                # same endpoints, different logical action: the likelier one is
                # matched on, the other is kept for distance searches
                alts = alternatives.setdefault(key, {})
                if p > e.p:
                    edges[key], e = Edge(key[0], key[1], p, obs, [source]), edges[key]
                    obs, p, source = e.observables, e.p, None
                    alt = alts.get(obs)
                    if alt is None:
                        alts[obs] = e
                    else:
                        alt.p = combine(alt.p, e.p)
                        alt.sources.extend(e.sources)
                    return
                alt = alts.get(obs)
                if alt is None:
                    alts[obs] = Edge(key[0], key[1], p, obs, [source])
                else:
                    alt.p = combine(alt.p, p)
                    alt.sources.append(source)

        for mid, (m, comp) in enumerate(zip(dem.mechanisms, comps)):
            dets, obs = comp[sector]
            if not dets:
                if obs:
                    unresolved_obs += 1
                continue
            if len(dets) <= 2:
                add(dets, obs, m.probability, mid)
                continue
            pieces = None
            for cand in _pairings(dets):
                if all(pc in known[sector] for pc in cand):
                    acc = 0
                    for pc in cand:
                        acc ^= known[sector][pc][1]
                    if acc == obs:
                        pieces = [(pc, known[sector][pc][1]) for pc in cand]
                        break
            forced = pieces is None
            if forced:
                cand = next(_pairings_by_distance(dets, dem.coords))
                pieces = [(pc, obs if k == 0 else 0) for k, pc in enumerate(cand)]
                log.warning("forced decomposition of mechanism %d (%s): %s", mid, sector, m.provenance[:1])
            records.append(DecompositionRecord(mid, sector, dets, tuple(pc for pc, _ in pieces), forced, m.provenance))
            for pc, o in pieces:
                add(pc, o, m.probability, mid)
        graph = MatchingGraph(sector, det_ids, [dem.coords[d] for d in det_ids], edges, dem.num_observables)
        graph.alternatives = {k: list(v.values()) for k, v in sorted(alternatives.items())}
        graphs[sector] = graph
    if unresolved_obs:
        log.warning("%d mechanism parts flip an observable without any detector in their sector", unresolved_obs)
    return graphs["primal"], graphs["dual"], records


def _pairings_by_distance(dets: tuple[int, ...], coords):
    """Fallback pairing: greedily pair nearest detectors in spacetime."""
    remaining = list(dets)
    pieces = []
    while len(remaining) > 1:
        best = None
        for a, b in itertools.combinations(remaining, 2):
            dist = sum((x - y) ** 2 for x, y in zip(coords[a], coords[b]))
            if best is None or (dist, a, b) < best:
                best = (dist, a, b)
        _, a, b = best
        pieces.append((a, b))
        remaining.remove(a)
        remaining.remove(b)
    if remaining:
        pieces.append((remaining[0],))
    yield tuple(pieces)


def graph_symmetry_check(graph: MatchingGraph, interface_coordinate: float, tol: float = 1e-6) -> bool:
    """True iff reflecting x -> 2*interface - x maps the edge set onto itself.

    Edges are compared by endpoint coordinates (boundary as ``None``).
    Only edges with at least one endpoint whose reflection lands on an
    existing vertex take part; an empty set is symmetric.
    """
    def key(c):
        return tuple(round(v / tol) * tol for v in c)

    pos = {key(c): k for k, c in enumerate(graph.coords)}
    mirror = {}
    for k, c in enumerate(graph.coords):
        r = (2 * interface_coordinate - c[0],) + tuple(c[1:])
        if key(r) in pos:
            mirror[k] = pos[key(r)]
    edges = set(graph.edges)
    for (u, v) in edges:
        if u not in mirror or (v != BOUNDARY and v not in mirror):
            continue
        ru = mirror[u]
        rv = BOUNDARY if v == BOUNDARY else mirror[v]
        if _edge_key(ru, rv) not in edges:
            return False
    return True


def predicted_flip_rates(dem: DetectorErrorModel) -> list[float]:
    """Exact per-detector flip probability under independent mechanisms."""
    # P(odd number fire) = (1 - prod(1 - 2p)) / 2
    prod = [1.0] * dem.num_detectors
    for m in dem.mechanisms:
        for d in m.detectors:
            prod[d] *= 1 - 2 * m.probability
    return [(1 - x) / 2 for x in prod]

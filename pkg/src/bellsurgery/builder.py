"""Compile layouts and schedules into annotated circuits.

Two experiments are supported:

* a memory experiment on a single patch or on the merged two-patch code;
* the logical Bell-state preparation: both patches start in ``|0>``, are
  merged for ``rounds_merged`` rounds (measuring ``X_L1 X_L2``), split, run
  ``post_split_rounds`` more rounds and are then read out by an ideal
  measurement of every patch stabilizer plus ``X_L1 X_L2`` and ``Z_L1 Z_L2``.

Bell-measurement byproducts are never applied as gates.  Instead each
detector and observable starts from the obvious set of check outcomes and is
completed over GF(2) with nearby Bell-frame outcomes until it is
deterministic in the noiseless circuit (see :func:`_complete`).  Gate
teleportation in the benchmark protocol uses classically controlled Paulis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .circuit import Circuit, Instruction, Rec
from .geometry import Kind, MergedLayout, Module, PatchLayout, Plaquette, Protocol, QubitId
from .schedule import CROSSING_SLOT, NUM_SLOTS, Label, Policy, round_sequence, sequence_for_round
from . import sim


# -- stand-alone gadgets --------------------------------------------------------

def _bell_crossing_ops(a_left: int, a_right: int, pair: tuple[int, int] | None) -> tuple[list, list]:
    """(preparation ops, slot ops) of the crossing step of a Bell gadget."""
    if pair is None:
        return [], [("CX", (a_left, a_right), "interface")]
    e_l, e_r = pair
    prep = [("R", (e_l, e_r), "ideal"), ("H", (e_l,), "ideal"), ("CX", (e_l, e_r), "teleport")]
    return prep, [("CX", (a_left, e_l), "seam"), ("CX", (e_r, a_right), "seam")]


def _pair_prep_ops(pair: tuple[int, int]) -> list:
    e_l, e_r = pair
    return [("R", (e_l, e_r), "ideal"), ("H", (e_l,), "ideal"), ("CX", (e_l, e_r), "teleport")]


def _emit(circuit: Circuit, ops: list) -> None:
    for name, targets, tag in ops:
        circuit.instructions.append(Instruction(name, tuple(targets), (), tag))


def _check_modules(a: QubitId, b: QubitId) -> None:
    if a.module is b.module:
        raise ValueError("gadget endpoints must lie in different modules")


def apply_bell_gadget(circuit: Circuit, ancilla_left: QubitId, ancilla_right: QubitId,
                      protocol: Protocol | str, pair: tuple[QubitId, QubitId] | None = None) -> dict:
    """Append a Bell measurement of two ancillas in different modules.

    Returns the records whose parity gives ``X1 X2`` (``"xx"``) and
    ``Z1 Z2`` (``"zz"``) and the number of Bell pairs consumed.
    """
    protocol = Protocol.parse(protocol)
    _check_modules(ancilla_left, ancilla_right)
    a, b = ancilla_left.index, ancilla_right.index
    start = circuit.num_measurements
    if protocol is Protocol.BELL_TELEPORTED:
        if pair is None:
            raise ValueError("the teleported gadget needs a pair of link qubits")
        _check_modules(pair[0], pair[1])
        e_l, e_r = pair[0].index, pair[1].index
        prep, slot = _bell_crossing_ops(a, b, (e_l, e_r))
        _emit(circuit, prep + slot)
        _emit(circuit, [("H", (a, e_r), "seam"), ("M", (a, e_l, e_r, b), "seam")])
        return {"xx": (start, start + 2), "zz": (start + 1, start + 3), "ebits": 1}
    if protocol is not Protocol.BELL_DIRECT:
        raise ValueError("Bell gadgets belong to the Bell-measurement protocols")
    _emit(circuit, [("CX", (a, b), "interface"), ("H", (a,), "seam"), ("M", (a, b), "seam")])
    return {"xx": (start,), "zz": (start + 1,), "ebits": 0}


def _teleported_gate_ops(control: int, target: int, gate_kind: str, pair: tuple[int, int], first_record: int):
    """Slot ops and readout ops of a teleported CX/CZ from ``control`` to ``target``."""
    e_l, e_r = pair
    kind = gate_kind.replace("Cross", "")
    if kind not in ("CX", "CZ"):
        raise ValueError(f"cannot teleport {gate_kind}")
    slot = [("CX", (control, e_l), "seam"), (kind, (e_r, target), "seam")]
    m1, m2 = first_record, first_record + 1
    readout = [("H", (e_r,), "seam"), ("M", (e_l, e_r), "seam")]
    # X^m1 (CX) or Z^m1 (CZ) on the target, Z^m2 on the control.
    feedback = [(kind, (Rec(m1), target), "teleport"), ("CZ", (Rec(m2), control), "teleport")]
    return slot, readout, feedback


def apply_teleported_two_qubit_gate(circuit: Circuit, control: QubitId, target: QubitId, gate_kind: str,
                                    pair: tuple[QubitId, QubitId], p_link: float | None = None) -> int:
    """Append a CX or CZ implemented by consuming one Bell pair.

    When ``p_link`` is given the pair is followed by ``DEPOLARIZE2(p_link)``.
    Returns the number of Bell pairs consumed (one).
    """
    _check_modules(control, target)
    _check_modules(pair[0], pair[1])
    p = (pair[0].index, pair[1].index)
    _emit(circuit, _pair_prep_ops(p))
    if p_link is not None:
        circuit.append("DEPOLARIZE2", p, (p_link,), "teleport")
    slot, readout, feedback = _teleported_gate_ops(control.index, target.index, gate_kind, p, circuit.num_measurements)
    _emit(circuit, slot + readout + feedback)
    return 1


def build_pair_fidelity_circuit(p_link: float) -> Circuit:
    """One link pair prepared as in the teleported protocols, then an ideal
    readout of ``X X`` (detector 0) and ``Z Z`` (detector 1)."""
    from .noise import NoiseParams, annotate

    bare = Circuit(meta={"experiment": "PairFidelity"})
    _emit(bare, _pair_prep_ops((0, 1)))
    bare.append("MPP", ((("X", 0), ("X", 1)), (("Z", 0), ("Z", 1))), (), "ideal")
    bare.append("DETECTOR", (Rec(0),), (0.0, 0.0), "dual")
    bare.append("DETECTOR", (Rec(1),), (0.0, 0.0), "primal")
    return annotate(bare, NoiseParams.interface_only(p_link))


def sampled_pair_fidelity(p_link: float, shots: int, seed: int) -> tuple[float, float]:
    """Monte Carlo overlap with the ideal Bell pair: (estimate, standard error)."""
    batch = sim.sample(build_pair_fidelity_circuit(p_link), shots, seed)
    f = float((~batch.detectors.any(axis=1)).mean())
    return f, (f * (1 - f) / shots) ** 0.5


# -- experiment compiler --------------------------------------------------------

@dataclass
class _Measured:
    key: str
    basis: str
    coord: tuple[float, float]
    round: int
    value: tuple[int, ...]


@dataclass
class _PendingDetector:
    base: set
    coord: tuple[float, float]
    round: int
    sector: str
    lo_round: int


class _Compiler:
    def __init__(self, layout: MergedLayout | PatchLayout, policy: Policy):
        self.layout = layout
        self.policy = policy
        self.merged_layout = isinstance(layout, MergedLayout)
        self.c = Circuit()
        self.n_meas = 0
        self.active: set[int] = set()
        self.seam_qubits: set[int] = set()
        self.qubits: dict[int, QubitId] = {q.index: q for q in layout.qubits}
        self.data = [q.index for q in layout.data_qubits]
        self.frames: list[tuple[int, tuple[int, ...]]] = []  # (round, records)
        self.known: dict[str, tuple[int, ...]] = {}
        self.known_round: dict[str, int] = {}
        self.pending: list[_PendingDetector] = []
        self.ebits_per_round: list[int] = []
        self.round_marks: list[tuple[int, int]] = []  # (instruction position, records so far)
        self.first_merged_seam_x: list[tuple[int, ...]] = []
        self.round_index = 0

    # -- low level emission
    def _tag(self, q: int) -> str:
        return "seam" if q in self.seam_qubits else "bulk"

    def _ops(self, ops: list) -> None:
        for name, targets, tag in ops:
            if name in ("M", "MR"):
                self.n_meas += len(targets)
            self.c.instructions.append(Instruction(name, tuple(targets), (), tag))

    def _layer(self, ops: list, idle: bool = True) -> None:
        touched = set()
        for name, targets, tag in ops:
            touched.update(t for t in targets if not isinstance(t, Rec))
        self._ops(ops)
        if idle:
            rest = sorted(self.active - touched)
            by_tag: dict[str, list[int]] = {}
            for q in rest:
                by_tag.setdefault(self._tag(q), []).append(q)
            for tag in sorted(by_tag):
                self._ops([("I", tuple(by_tag[tag]), tag)])
        self.c.append("TICK")

    def _grouped(self, name: str, qubits, tag_of=None) -> list:
        by_tag: dict[str, list[int]] = {}
        for q in qubits:
            by_tag.setdefault(tag_of(q) if tag_of else self._tag(q), []).append(q)
        return [(name, tuple(v), t) for t, v in sorted(by_tag.items())]

    def _measure(self, name: str, qubits: list[int]) -> dict[int, int]:
        ops = self._grouped(name, qubits)
        out = {}
        k = self.n_meas
        for _, targets, _ in ops:
            for q in targets:
                out[q] = k
                k += 1
        return out, ops

    # -- rounds
    def header(self, data_basis: str) -> None:
        for q in sorted(self.qubits):
            self.c.append("QUBIT_COORDS", (q,), self.qubits[q].coord)
        resettable = [q for q in sorted(self.qubits) if self.qubits[q].kind is not Kind.TELEPORT]
        self.active = set(self.data)
        self._layer(self._grouped("R", resettable, lambda q: "bulk"), idle=False)
        if data_basis == "X":
            self._layer([("H", tuple(self.data), "bulk")])

    def _plaquettes(self, merged: bool) -> list[Plaquette]:
        if not self.merged_layout:
            return list(self.layout.plaquettes)
        lay: MergedLayout = self.layout
        plaqs = list(lay.left.plaquettes) + list(lay.right.plaquettes)
        if merged:
            plaqs = [p for p in plaqs if p.key[1] != "b"] + list(lay.seam_plaquettes)
        return plaqs

    def round(self, merged: bool, right_label: Label | None = None) -> list[_Measured]:
        t = self.round_index
        self.c.append("TICK", (), (), "round")
        label = sequence_for_round(self.policy, t)
        seq = round_sequence(self.layout, label, merged, right_label=right_label)
        plaqs = self._plaquettes(merged)
        protocol = self.layout.protocol if self.merged_layout else None
        seam_keys = {p.key for p in plaqs if p.crossing}
        self.seam_qubits = {a.index for p in plaqs if p.crossing for a in p.ancillas}
        ancillas = sorted({a.index for p in plaqs for a in p.ancillas})
        self.active = set(self.data) | set(ancillas)
        ebits = 0
        pairs = self.layout.pairs if self.merged_layout else {}

        self._layer(self._grouped("H", ancillas))
        by_slot = seq.by_slot()
        teleport_readouts = []
        for slot in range(1, NUM_SLOTS + 1):
            ops = []
            prep = []
            readouts = []
            for key in sorted(seq.gates):
                for g in seq.gates[key]:
                    if g.slot != slot:
                        continue
                    if not g.crossing:
                        tag = "seam" if key in seam_keys else "bulk"
                        ops.append((g.kind, (g.control.index, g.target.index), tag))
                        continue
                    if protocol is Protocol.BELL_TELEPORTED:
                        e_l, e_r = pairs[(key, "bell")]
                        pr, sl = _bell_crossing_ops(g.control.index, g.target.index, (e_l.index, e_r.index))
                        prep += pr
                        ops += sl
                        self.active |= {e_l.index, e_r.index}
                        self.seam_qubits |= {e_l.index, e_r.index}
                        ebits += 1
                    elif protocol is Protocol.BENCHMARK_TELEPORTED:
                        plaq = next(p for p in plaqs if p.key == key)
                        corner = plaq.corners[[q.index for q in plaq.data_qubits].index(g.target.index)]
                        e_l, e_r = pairs[(key, corner)]
                        prep += _pair_prep_ops((e_l.index, e_r.index))
                        readouts.append((g, (e_l.index, e_r.index)))
                        self.active |= {e_l.index, e_r.index}
                        self.seam_qubits |= {e_l.index, e_r.index}
                        ebits += 1
                    else:
                        kind = g.kind.replace("Cross", "")
                        ops.append((kind, (g.control.index, g.target.index), "interface"))
            if prep:
                self._ops(prep)
            for g, pair in readouts:
                sl, _, _ = _teleported_gate_ops(g.control.index, g.target.index, g.kind, pair, 0)
                ops += sl
            self._layer(_merge_ops(ops))
            for g, pair in readouts:
                # Link qubits are read out right after the teleported gate; the
                # other qubits do not wait for this readout.
                _, readout, feedback = _teleported_gate_ops(g.control.index, g.target.index, g.kind, pair, self.n_meas)
                self._ops(readout + feedback)
                self.active -= set(pair)
        # second Hadamard layer: everything measured in X
        x_measured = []
        z_measured = []
        for p in plaqs:
            if len(p.ancillas) == 1:
                x_measured.append(p.ancillas[0].index)
            else:
                a_l, a_r = p.ancillas
                x_measured.append(a_l.index)
                z_measured.append(a_r.index)
                if protocol is Protocol.BELL_TELEPORTED:
                    e_l, e_r = pairs[(p.key, "bell")]
                    x_measured.append(e_r.index)
                    z_measured.append(e_l.index)
        self._layer(self._grouped("H", sorted(x_measured)))
        link = {q for q in self.active if self.qubits[q].kind is Kind.TELEPORT}
        resettable = sorted(set(x_measured + z_measured) - link)
        recs, ops = self._measure("MR", resettable)
        if link:
            r2, ops2 = self._measure_after(ops, sorted(link))
            recs.update(r2)
            ops += ops2
        self._layer(ops)
        self.active -= link
        self.round_marks.append((len(self.c.instructions), self.n_meas))

        out = []
        for p in plaqs:
            coord = _detector_coord(p)
            if len(p.ancillas) == 1:
                value = (recs[p.ancillas[0].index],)
            else:
                a_l, a_r = p.ancillas
                if protocol is Protocol.BELL_TELEPORTED:
                    e_l, e_r = pairs[(p.key, "bell")]
                    value = (recs[a_l.index], recs[e_r.index])
                    self.frames.append((t, (recs[e_l.index], recs[a_r.index])))
                else:
                    value = (recs[a_l.index],)
                    self.frames.append((t, (recs[a_r.index],)))
            out.append(_Measured(p.key, p.basis, coord, t, value))
        self.ebits_per_round.append(ebits)
        self.round_index += 1
        return out

    def _measure_after(self, previous_ops: list, qubits: list[int]):
        k = self.n_meas + sum(len(t) for _, t, _ in previous_ops)
        out = {}
        ops = self._grouped("M", qubits)
        for _, targets, _ in ops:
            for q in targets:
                out[q] = k
                k += 1
        return out, ops

    # -- detectors
    def close(self, measured: list[_Measured], fresh_basis: str | None = None) -> None:
        """Turn this round's check outcomes into detector base sets."""
        by_key = {m.key: m for m in measured}
        done = set()
        for m in measured:
            if m.key in done:
                continue
            sector = "primal" if m.basis == "Z" else "dual"
            base = None
            lo = m.round
            if m.key in self.known:
                base = set(m.value) ^ set(self.known[m.key])
                lo = self.known_round[m.key]
            elif m.key.startswith("S") and m.basis == "Z":
                j = m.key[1:]
                lk, rk = f"Lb{j}", f"Rb{j}"
                if lk in self.known and rk in self.known:
                    base = set(m.value) ^ set(self.known[lk]) ^ set(self.known[rk])
                    lo = min(self.known_round[lk], self.known_round[rk])
                elif fresh_basis == "Z":
                    base = set(m.value)
            elif m.key[1] == "b" and f"S{m.key[2:]}" in self.known:
                j = m.key[2:]
                lk, rk = f"Lb{j}", f"Rb{j}"
                other = by_key[rk if m.key == lk else lk]
                base = set(by_key[lk].value) ^ set(by_key[rk].value) ^ set(self.known[f"S{j}"])
                lo = self.known_round[f"S{j}"]
                done.add(other.key)
                m = _Measured(f"S{j}", "Z", (self.layout.d - 0.5, int(j) + 0.5), m.round, ())
            elif fresh_basis is not None and m.basis == fresh_basis:
                base = set(m.value)
            if base is not None:
                self.pending.append(_PendingDetector(base, m.coord, m.round, sector, lo))
            done.add(m.key)
        for m in measured:
            self.known[m.key] = m.value
            self.known_round[m.key] = m.round
        if any(m.key.startswith("S") for m in measured):
            for j in range(self.layout.d):
                for k in (f"Lb{j}", f"Rb{j}"):
                    self.known.pop(k, None)
        elif any(m.key[1:2] == "b" for m in measured):
            for j in range(self.layout.d):
                self.known.pop(f"S{j}", None)


def _merge_ops(ops: list) -> list:
    """Group same-name same-tag ops into one instruction each, preserving order of first appearance."""
    groups: dict[tuple[str, str], list] = {}
    for name, targets, tag in ops:
        groups.setdefault((name, tag), []).extend(targets)
    return [(name, tuple(t), tag) for (name, tag), t in groups.items()]


def _detector_coord(p: Plaquette) -> tuple[float, float]:
    if p.crossing:
        return p.center
    return p.ancillas[0].coord


def _solve(target: int, pool: list[int]) -> int | None:
    """Bitmask of pool entries whose XOR equals ``target`` (None if impossible)."""
    basis: dict[int, tuple[int, int]] = {}  # pivot bit -> (vector, combination)
    for k, v in enumerate(pool):
        comb = 1 << k
        while v:
            top = v.bit_length() - 1
            if top not in basis:
                basis[top] = (v, comb)
                break
            bv, bc = basis[top]
            v ^= bv
            comb ^= bc
    comb = 0
    v = target
    while v:
        top = v.bit_length() - 1
        if top not in basis:
            return None
        bv, bc = basis[top]
        v ^= bv
        comb ^= bc
    return comb


def _complete(base: set, gauges: list[int], candidates: list[tuple[int, ...]]) -> set:
    v = 0
    for r in base:
        v ^= gauges[r]
    if v == 0:
        return base
    pool = []
    for recs in candidates:
        g = 0
        for r in recs:
            g ^= gauges[r]
        pool.append(g)
    comb = _solve(v, pool)
    if comb is None:
        raise RuntimeError(f"cannot make record set {sorted(base)} deterministic")
    out = set(base)
    k = 0
    while comb:
        if comb & 1:
            out ^= set(candidates[k])
        comb >>= 1
        k += 1
    return out


def _finish(comp: _Compiler, observables: list[tuple[set, str]], meta: dict, verify: bool = True) -> Circuit:
    body = comp.c
    gauges, _ = sim.gauge_vectors(body)
    marks = comp.round_marks + [(len(body.instructions), comp.n_meas)]
    inserts: dict[int, list[Instruction]] = {}
    for det in comp.pending:
        cands = [recs for r, recs in comp.frames if det.lo_round - 1 <= r <= det.round + 1]
        recs = _complete(det.base, gauges, cands)
        top = max(recs)
        pos = next(p for p, n in marks if n > top)
        args = (float(det.coord[0]), float(det.coord[1]), float(det.round))
        inserts.setdefault(pos, []).append(Instruction("DETECTOR", tuple(Rec(r) for r in sorted(recs)), args, det.sector))
    out = Circuit(meta=meta)
    for pos, ins in enumerate(body.instructions):
        out.instructions.extend(inserts.get(pos, ()))
        out.instructions.append(ins)
    out.instructions.extend(inserts.get(len(body.instructions), ()))
    all_frames = [recs for _, recs in comp.frames]
    for k, (base, sector) in enumerate(observables):
        recs = _complete(base, gauges, all_frames)
        out.instructions.append(Instruction("OBSERVABLE_INCLUDE", tuple(Rec(r) for r in sorted(recs)), (float(k),), sector))
    if verify:
        bad_d, bad_o = sim.nondeterministic(out)
        if bad_d or bad_o:
            raise RuntimeError(f"non-deterministic detectors {bad_d[:10]} / observables {bad_o}")
    return out


def _meta(comp: _Compiler, experiment: str, **extra) -> dict:
    lay = comp.layout
    meta = {
        "experiment": experiment,
        "d": lay.d,
        "protocol": lay.protocol.value if comp.merged_layout else None,
        "policy": comp.policy.value,
        "qubits": {q.index: q for q in lay.qubits},
        "data_qubits": list(comp.data),
        "interface_x": lay.interface_x if comp.merged_layout else None,
        "ebits_per_round": list(comp.ebits_per_round),
        "ebits_total": sum(comp.ebits_per_round),
    }
    meta.update(extra)
    return meta


def build_memory_circuit(layout: MergedLayout | PatchLayout, policy: Policy | str = Policy.ALTERNATE, rounds: int = 3,
                         noise_params=None, basis: str = "Z", verify: bool = True) -> Circuit:
    """Memory experiment: prepare data in ``basis``, run ``rounds`` rounds,
    read data out transversally in the same basis."""
    from .noise import annotate

    policy = Policy.parse(policy)
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if not isinstance(layout, (MergedLayout, PatchLayout)):
        raise TypeError("layout must be a PatchLayout or MergedLayout")
    if basis not in ("X", "Z"):
        raise ValueError("basis must be X or Z")
    comp = _Compiler(layout, policy)
    comp.header(basis)
    merged = comp.merged_layout
    for r in range(rounds):
        measured = comp.round(merged=merged)
        comp.close(measured, fresh_basis=basis if r == 0 else None)
    # transversal readout
    if basis == "X":
        comp._layer([("H", tuple(comp.data), "bulk")])
    recs, ops = comp._measure("M", comp.data)
    comp._layer(ops, idle=False)
    comp.round_marks.append((len(comp.c.instructions), comp.n_meas))
    final = []
    for p in comp._plaquettes(merged):
        if p.basis != basis:
            continue
        final.append(_Measured(p.key, p.basis, _detector_coord(p), comp.round_index, tuple(recs[q.index] for q in p.data_qubits)))
    comp.close(final)
    if merged:
        support = layout.merged_logical_zz if basis == "Z" else layout.left.logical_x
    else:
        support = layout.logical_z if basis == "Z" else layout.logical_x
    obs = [({recs[q] for q in support}, "primal" if basis == "Z" else "dual")]
    circuit = _finish(comp, obs, _meta(comp, "Memory", rounds=rounds, basis=basis, observable_names=["Z_L" if basis == "Z" else "X_L"]), verify)
    if noise_params is not None:
        circuit = annotate(circuit, noise_params)
    return circuit


def build_bell_prep_circuit(d: int, protocol: Protocol | str, policy: Policy | str = Policy.ALTERNATE, noise_params=None,
                            rounds_merged: int | None = None, pre_merge_rounds: int = 0, post_split_rounds: int = 1,
                            verify: bool = True, right_label: Label | None = None) -> Circuit:
    """Logical Bell-state preparation across the interface.

    Observable 0 is ``X_L1 X_L2`` as reported by the first merged round;
    observable 1 is ``Z_L1 Z_L2`` including the Bell-measurement frame.
    """
    from .geometry import build_merged_layout
    from .noise import annotate

    policy = Policy.parse(policy)
    layout = build_merged_layout(d, protocol)
    if rounds_merged is None:
        rounds_merged = d
    if rounds_merged < 1:
        raise ValueError("rounds_merged must be >= 1")
    if pre_merge_rounds < 0 or post_split_rounds < 0:
        raise ValueError("round counts must be non-negative")
    comp = _Compiler(layout, policy)
    comp.header("Z")
    first = True
    for _ in range(pre_merge_rounds):
        comp.close(comp.round(merged=False, right_label=right_label), fresh_basis="Z" if first else None)
        first = False
    seam_x_first: list[tuple[int, ...]] = []
    for r in range(rounds_merged):
        measured = comp.round(merged=True, right_label=right_label)
        if r == 0:
            seam_x_first = [m.value for m in measured if m.key.startswith("S") and m.basis == "X"]
        comp.close(measured, fresh_basis="Z" if first else None)
        first = False
    merged_ebits = list(comp.ebits_per_round[pre_merge_rounds:])
    for _ in range(post_split_rounds):
        comp.close(comp.round(merged=False, right_label=right_label))

    # ideal final readout of every patch stabilizer and both logical products
    prods = []
    plaqs = list(layout.left.plaquettes) + list(layout.right.plaquettes)
    for p in plaqs:
        prods.append(tuple((p.basis, q.index) for q in p.data_qubits))
    prods.append(tuple(("X", q) for q in sorted(layout.merged_logical_xx)))
    prods.append(tuple(("Z", q) for q in sorted(layout.merged_logical_zz)))
    start = comp.n_meas
    comp.c.append("MPP", prods, (), "ideal")
    comp.n_meas += len(prods)
    comp.round_marks.append((len(comp.c.instructions), comp.n_meas))
    final = [_Measured(p.key, p.basis, _detector_coord(p), comp.round_index, (start + k,)) for k, p in enumerate(plaqs)]
    comp.close(final)
    xx_rec, zz_rec = start + len(plaqs), start + len(plaqs) + 1
    xx_base = {xx_rec}
    for v in seam_x_first:
        xx_base ^= set(v)
    obs = [(xx_base, "dual"), ({zz_rec}, "primal")]
    meta = _meta(
        comp,
        "BellPrep",
        rounds_merged=rounds_merged,
        pre_merge_rounds=pre_merge_rounds,
        post_split_rounds=post_split_rounds,
        merged_ebits_per_round=merged_ebits,
        observable_names=["XX", "ZZ"],
    )
    circuit = _finish(comp, obs, meta, verify)
    if noise_params is not None:
        circuit = annotate(circuit, noise_params)
    return circuit

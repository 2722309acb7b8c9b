"""Two-qubit gate orderings for syndrome extraction rounds.

Sequence A measures X checks in a Z-shaped order (NW, NE, SW, SE) and Z
checks in an N-shaped order (NW, SW, NE, SE).  Sequence B permutes the slots
of A: 1<->3 and 2<->4 for X checks, 1<->2 and 3<->4 for Z checks.  Under the
Bell protocols the right patch uses the mirror image (east and west swapped)
so the whole round is symmetric about the interface.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .geometry import MergedLayout, PatchLayout, Plaquette, Protocol, QubitId

NUM_SLOTS = 4
CROSSING_SLOT = 4


class Label(enum.Enum):
    A = "A"
    B = "B"


class Policy(enum.Enum):
    REPEAT_A = "RepeatA"
    REPEAT_B = "RepeatB"
    ALTERNATE = "Alternate"

    @classmethod
    def parse(cls, value: "str | Policy") -> "Policy":
        if isinstance(value, Policy):
            return value
        for p in cls:
            if value.lower() in (p.value.lower(), p.name.lower()):
                return p
        raise ValueError(f"unknown schedule policy {value!r}")


_ORDER_A = {"X": ("NW", "NE", "SW", "SE"), "Z": ("NW", "SW", "NE", "SE")}
_SWAP = {"X": (2, 3, 0, 1), "Z": (1, 0, 3, 2)}
_MIRROR = {"NW": "NE", "NE": "NW", "SW": "SE", "SE": "SW"}


@dataclass(frozen=True)
class GateSlot:
    slot: int
    kind: str  # CX, CZ, CrossCX or CrossCZ
    control: QubitId
    target: QubitId

    @property
    def crossing(self) -> bool:
        return self.kind.startswith("Cross")


@dataclass(frozen=True)
class GateSequence:
    label: Label
    gates: dict  # plaquette key -> tuple[GateSlot, ...]

    def all_gates(self) -> list[GateSlot]:
        return [g for key in self.gates for g in self.gates[key]]

    def by_slot(self) -> dict[int, list[GateSlot]]:
        out: dict[int, list[GateSlot]] = {s: [] for s in range(1, NUM_SLOTS + 1)}
        for g in self.all_gates():
            out[g.slot].append(g)
        return out


def swap_order(order: tuple[str, ...], basis: str) -> tuple[str, ...]:
    """Apply the A<->B slot permutation (an involution)."""
    return tuple(order[k] for k in _SWAP[basis])


def corner_order(basis: str, label: Label, mirrored: bool = False) -> tuple[str, ...]:
    order = _ORDER_A[basis]
    if label is Label.B:
        order = swap_order(order, basis)
    if mirrored:
        order = tuple(_MIRROR[c] for c in order)
    return order


def sequence_for_round(policy: Policy | str, round_index: int) -> Label:
    policy = Policy.parse(policy)
    if round_index < 0:
        raise ValueError("round index must be non-negative")
    if policy is Policy.REPEAT_A:
        return Label.A
    if policy is Policy.REPEAT_B:
        return Label.B
    return Label.A if round_index % 2 == 0 else Label.B


def _local_gates(plaq: Plaquette, anc: QubitId, label: Label, mirrored: bool, only=None) -> list[GateSlot]:
    order = corner_order(plaq.basis, label, mirrored)
    kind = "CX" if plaq.basis == "X" else "CZ"
    out = []
    for slot, corner in enumerate(order, start=1):
        if only is not None and corner not in only:
            continue
        q = plaq.corner(corner)
        if q is None:
            continue
        out.append(GateSlot(slot, kind, anc, q))
    return out


def bulk_sequence(label: Label, plaquettes, mirrored: bool = False) -> GateSequence:
    """Single-ancilla gate slots for each plaquette in ``plaquettes``."""
    gates = {}
    for p in plaquettes:
        gates[p.key] = tuple(_local_gates(p, p.ancillas[0], label, mirrored))
    return GateSequence(label, gates)


def interface_sequence(label: Label, layout: MergedLayout) -> GateSequence:
    """Two-ancilla seam gadgets of the Bell protocols.

    The left ancilla touches the west corners at the slots of the left
    patch's order, the right ancilla the east corners at the mirrored slots,
    and the crossing CX from left to right ancilla comes last.
    """
    if not layout.protocol.is_bell:
        raise ValueError("benchmark protocols measure the seam with the bulk sequence")
    gates = {}
    for p in layout.seam_plaquettes:
        a_l, a_r = p.ancillas
        g = _local_gates(p, a_l, label, False, only=("NW", "SW"))
        g += _local_gates(p, a_r, label, True, only=("NE", "SE"))
        g.sort(key=lambda s: (s.slot, s.control.index))
        g.append(GateSlot(CROSSING_SLOT, "CrossCX", a_l, a_r))
        gates[p.key] = tuple(g)
    return GateSequence(label, gates)


def _benchmark_seam(label: Label, layout: MergedLayout) -> dict:
    gates = {}
    for p in layout.seam_plaquettes:
        local = _local_gates(p, p.ancillas[0], label, False)
        out = []
        for g in local:
            corner = p.corners[[q.index for q in p.data_qubits].index(g.target.index)]
            if corner in ("NE", "SE"):
                g = GateSlot(g.slot, "Cross" + g.kind, g.control, g.target)
            out.append(g)
        gates[p.key] = tuple(out)
    return gates


def round_sequence(layout: MergedLayout | PatchLayout, label: Label, merged: bool = True,
                   right_label: Label | None = None) -> GateSequence:
    """All gates of one round.

    For a merged layout with ``merged=False`` the two patches run separately
    (pre-merge or post-split rounds).  ``right_label`` overrides the label of
    the right patch, which is only useful to build deliberately asymmetric
    schedules.
    """
    if isinstance(layout, PatchLayout):
        return bulk_sequence(label, layout.plaquettes)
    rl = label if right_label is None else right_label
    mirrored = layout.protocol.is_bell
    left = list(layout.left.plaquettes)
    right = list(layout.right.plaquettes)
    if merged:
        replaced = {p.key for p in layout.left.plaquettes + layout.right.plaquettes if p.key[1] == "b"}
        left = [p for p in left if p.key not in replaced]
        right = [p for p in right if p.key not in replaced]
    gates = dict(bulk_sequence(label, left).gates)
    gates.update(bulk_sequence(rl, right, mirrored=mirrored).gates)
    if merged:
        if layout.protocol.is_bell:
            gates.update(interface_sequence(label, layout).gates)
        else:
            gates.update(_benchmark_seam(label, layout))
    return GateSequence(label, gates)


def check_collisions(seq: GateSequence) -> None:
    for slot, gates in seq.by_slot().items():
        seen: set[int] = set()
        for g in gates:
            for q in (g.control.index, g.target.index):
                if q in seen:
                    raise ValueError(f"qubit {q} used twice in slot {slot}")
                seen.add(q)


def render_table(seq: GateSequence) -> str:
    """One line per plaquette: the qubit touched in each slot."""
    lines = [f"sequence {seq.label.value}", "plaquette " + " ".join(f"{'slot' + str(s):>22}" for s in range(1, NUM_SLOTS + 1))]
    for key in sorted(seq.gates):
        cells = {s: [] for s in range(1, NUM_SLOTS + 1)}
        for g in seq.gates[key]:
            cells[g.slot].append(f"{g.kind}{g.target.coord}")
        lines.append(f"{key:<9} " + " ".join(f"{'/'.join(cells[s]):>22}" for s in cells))
    return "\n".join(lines)

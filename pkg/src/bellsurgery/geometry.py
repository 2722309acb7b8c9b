"""Rotated surface code patches and the two-module merged layout.

Data qubits sit on integer coordinates ``(x, y)`` with ``y`` growing downwards.
A plaquette ``(i, j)`` has its centre at ``(i + 0.5, j + 0.5)`` and corners
NW ``(i, j)``, NE ``(i + 1, j)``, SW ``(i, j + 1)`` and SE ``(i + 1, j + 1)``.
It is an X check iff ``i + j`` is even.  The left patch occupies columns
``0..d-1`` and the right patch columns ``d..2d-1``, so the interface is the
vertical line ``x = d - 0.5``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Iterable

CORNERS = ("NW", "NE", "SW", "SE")
_CORNER_OFFSETS = {"NW": (0, 0), "NE": (1, 0), "SW": (0, 1), "SE": (1, 1)}


class Module(enum.Enum):
    LEFT = "Left"
    RIGHT = "Right"


class Kind(enum.Enum):
    DATA = "Data"
    ANCILLA = "Ancilla"
    TELEPORT = "TeleportAncilla"


class Protocol(enum.Enum):
    BENCHMARK_DIRECT = "BenchmarkDirect"
    BENCHMARK_TELEPORTED = "BenchmarkTeleported"
    BELL_DIRECT = "BellDirect"
    BELL_TELEPORTED = "BellTeleported"

    @property
    def is_bell(self) -> bool:
        return self in (Protocol.BELL_DIRECT, Protocol.BELL_TELEPORTED)

    @property
    def is_teleported(self) -> bool:
        return self in (Protocol.BELL_TELEPORTED, Protocol.BENCHMARK_TELEPORTED)

    @classmethod
    def parse(cls, value: "str | Protocol") -> "Protocol":
        if isinstance(value, Protocol):
            return value
        for p in cls:
            if value.lower() in (p.value.lower(), p.name.lower()):
                return p
        raise ValueError(f"unknown protocol {value!r}")


@dataclass(frozen=True)
class QubitId:
    index: int
    coord: tuple[float, float]
    module: Module
    kind: Kind


@dataclass(frozen=True)
class Plaquette:
    """A stabilizer check.

    ``data_qubits`` and ``corners`` are aligned and listed in NW, NE, SW, SE
    order with missing corners skipped.
    """

    key: str
    basis: str
    center: tuple[float, float]
    data_qubits: tuple[QubitId, ...]
    corners: tuple[str, ...]
    ancillas: tuple[QubitId, ...]
    crossing: bool = False

    @property
    def weight(self) -> int:
        return len(self.data_qubits)

    def corner(self, name: str) -> QubitId | None:
        for c, q in zip(self.corners, self.data_qubits):
            if c == name:
                return q
        return None

    @property
    def support(self) -> frozenset[int]:
        return frozenset(q.index for q in self.data_qubits)


@dataclass(frozen=True)
class PatchLayout:
    d: int
    module: Module
    data_qubits: tuple[QubitId, ...]
    ancillas: tuple[QubitId, ...]
    plaquettes: tuple[Plaquette, ...]
    logical_x: frozenset[int]
    logical_z: frozenset[int]

    @property
    def qubits(self) -> tuple[QubitId, ...]:
        return self.data_qubits + self.ancillas

    def seam_boundary(self, j: int) -> Plaquette:
        """The weight-2 Z check of this patch that faces the interface at row ``j``."""
        for p in self.plaquettes:
            if p.key == _key(self.module, "b", j):
                return p
        raise KeyError(j)


@dataclass(frozen=True)
class MergedLayout:
    d: int
    protocol: Protocol
    left: PatchLayout
    right: PatchLayout
    seam_plaquettes: tuple[Plaquette, ...]
    merged_logical_xx: frozenset[int]
    merged_logical_zz: frozenset[int]
    teleport_qubits: tuple[QubitId, ...] = ()
    # (seam plaquette key, corner or "bell") -> (left pair qubit, right pair qubit)
    pairs: dict = field(default_factory=dict, compare=False)

    @property
    def interface_x(self) -> float:
        return self.d - 0.5

    @property
    def qubits(self) -> tuple[QubitId, ...]:
        seen: dict[int, QubitId] = {}
        for q in self.left.qubits + self.right.qubits + self.teleport_qubits:
            seen[q.index] = q
        for p in self.seam_plaquettes:
            for q in p.ancillas:
                seen[q.index] = q
        return tuple(seen[i] for i in sorted(seen))

    @property
    def data_qubits(self) -> tuple[QubitId, ...]:
        return self.left.data_qubits + self.right.data_qubits

    def stabilizers(self) -> list[Plaquette]:
        """Checks of the merged code: every patch check except the two
        weight-2 Z checks that the seam Z plaquettes replace."""
        replaced = set()
        for p in self.seam_plaquettes:
            if p.basis == "Z":
                j = int(p.center[1] - 0.5)
                replaced.add(_key(Module.LEFT, "b", j))
                replaced.add(_key(Module.RIGHT, "b", j))
        out = [p for p in self.left.plaquettes + self.right.plaquettes if p.key not in replaced]
        return out + list(self.seam_plaquettes)

    def to_json(self) -> str:
        def qd(q: QubitId) -> dict:
            return {"index": q.index, "coord": list(q.coord), "module": q.module.value, "kind": q.kind.value}

        def pd(p: Plaquette) -> dict:
            return {
                "key": p.key,
                "basis": p.basis,
                "center": list(p.center),
                "data": [q.index for q in p.data_qubits],
                "corners": list(p.corners),
                "ancillas": [q.index for q in p.ancillas],
                "crossing": p.crossing,
            }

        return json.dumps(
            {
                "d": self.d,
                "protocol": self.protocol.value,
                "qubits": [qd(q) for q in self.qubits],
                "plaquettes": [pd(p) for p in self.left.plaquettes + self.right.plaquettes + self.seam_plaquettes],
            },
            indent=1,
        )


def _key(module: Module, kind: str, *ij: int) -> str:
    return f"{module.value[0]}{kind}" + ",".join(str(v) for v in ij)


def _check_distance(d: int) -> None:
    if not isinstance(d, int) or d < 3 or d % 2 == 0:
        raise ValueError(f"distance must be an odd integer >= 3, got {d!r}")


def checkerboard_basis(i: int, j: int) -> str:
    return "X" if (i + j) % 2 == 0 else "Z"


def _patch(d: int, module: Module, next_index: int, seam_offset: float = 0.0) -> tuple[PatchLayout, int]:
    """Build one patch.  ``seam_offset`` pulls the ancillas of the weight-2
    checks facing the interface towards this patch's side so that the two
    patches' ancillas get distinct coordinates when both exist."""
    x0 = 0 if module is Module.LEFT else d
    xs = range(x0, x0 + d)
    data: dict[tuple[int, int], QubitId] = {}
    for y in range(d):
        for x in xs:
            data[(x, y)] = QubitId(next_index, (float(x), float(y)), module, Kind.DATA)
            next_index += 1
    seam_i = d - 1  # plaquette column sitting on the interface line
    plaquettes = []
    ancillas = []
    for j in range(-1, d):
        for i in range(x0 - 1, x0 + d):
            basis = checkerboard_basis(i, j)
            present = [(c, data.get((i + dx, j + dy))) for c, (dx, dy) in _CORNER_OFFSETS.items()]
            present = [(c, q) for c, q in present if q is not None]
            if len(present) < 2:
                continue
            top_or_bottom = j in (-1, d - 1)
            left_or_right = i in (x0 - 1, x0 + d - 1)
            if len(present) == 2:
                if top_or_bottom and basis != "X":
                    continue
                if left_or_right and basis != "Z":
                    continue
            cx, cy = i + 0.5, j + 0.5
            if len(present) == 2 and i == seam_i:
                cx += -seam_offset if module is Module.LEFT else seam_offset
                key = _key(module, "b", j)
            else:
                key = _key(module, "p", i, j)
            anc = QubitId(next_index, (cx, cy), module, Kind.ANCILLA)
            next_index += 1
            ancillas.append(anc)
            plaquettes.append(
                Plaquette(
                    key=key,
                    basis=basis,
                    center=(i + 0.5, j + 0.5),
                    data_qubits=tuple(q for _, q in present),
                    corners=tuple(c for c, _ in present),
                    ancillas=(anc,),
                )
            )
    # Z_L runs along a row, X_L down a column.
    logical_z = frozenset(data[(x, 0)].index for x in xs)
    col = x0 if module is Module.LEFT else x0 + d - 1
    logical_x = frozenset(data[(col, y)].index for y in range(d))
    layout = PatchLayout(
        d=d,
        module=module,
        data_qubits=tuple(data[(x, y)] for y in range(d) for x in xs),
        ancillas=tuple(ancillas),
        plaquettes=tuple(plaquettes),
        logical_x=logical_x,
        logical_z=logical_z,
    )
    return layout, next_index


def build_patch(d: int) -> PatchLayout:
    _check_distance(d)
    return _patch(d, Module.LEFT, 0)[0]


def build_merged_layout(d: int, protocol: Protocol | str) -> MergedLayout:
    _check_distance(d)
    protocol = Protocol.parse(protocol)
    left, n = _patch(d, Module.LEFT, 0, seam_offset=0.25)
    right, n = _patch(d, Module.RIGHT, n, seam_offset=0.25)
    by_xy = {(int(q.coord[0]), int(q.coord[1])): q for q in left.data_qubits + right.data_qubits}

    seam = []
    teleport: list[QubitId] = []
    pairs: dict = {}

    def new(coord, module, kind) -> QubitId:
        nonlocal n
        q = QubitId(n, coord, module, kind)
        n += 1
        return q

    i = d - 1
    for j in range(d):
        if j == d - 1:
            corners = ("NW", "NE")
            basis = "X"
        else:
            corners = CORNERS
            basis = checkerboard_basis(i, j)
            assert basis == ("X" if j % 2 == 0 else "Z")
        qs = tuple(by_xy[(i + _CORNER_OFFSETS[c][0], j + _CORNER_OFFSETS[c][1])] for c in corners)
        cy = j + 0.5
        if basis == "Z":
            a_left = left.seam_boundary(j).ancillas[0]
            a_right = right.seam_boundary(j).ancillas[0]
        else:
            a_left = new((d - 0.75, cy), Module.LEFT, Kind.ANCILLA)
            a_right = new((d - 0.25, cy), Module.RIGHT, Kind.ANCILLA) if protocol.is_bell else None
        key = f"S{j}"
        if protocol.is_bell:
            ancillas = (a_left, a_right)
            if protocol is Protocol.BELL_TELEPORTED:
                e_l = new((d - 0.625, cy), Module.LEFT, Kind.TELEPORT)
                e_r = new((d - 0.375, cy), Module.RIGHT, Kind.TELEPORT)
                teleport += [e_l, e_r]
                pairs[(key, "bell")] = (e_l, e_r)
        else:
            ancillas = (a_left,)
            if protocol is Protocol.BENCHMARK_TELEPORTED:
                for c in corners:
                    if c in ("NE", "SE"):
                        dy = -0.25 if c == "NE" else 0.25
                        e_l = new((d - 0.625, cy + dy), Module.LEFT, Kind.TELEPORT)
                        e_r = new((d - 0.375, cy + dy), Module.RIGHT, Kind.TELEPORT)
                        teleport += [e_l, e_r]
                        pairs[(key, c)] = (e_l, e_r)
        seam.append(
            Plaquette(
                key=key,
                basis=basis,
                center=(i + 0.5, cy),
                data_qubits=qs,
                corners=corners,
                ancillas=ancillas,
                crossing=True,
            )
        )

    xx = frozenset(by_xy[(x, y)].index for x in (d - 1, d) for y in range(d))
    zz = left.logical_z | right.logical_z
    return MergedLayout(
        d=d,
        protocol=protocol,
        left=left,
        right=right,
        seam_plaquettes=tuple(seam),
        merged_logical_xx=xx,
        merged_logical_zz=zz,
        teleport_qubits=tuple(teleport),
        pairs=pairs,
    )


def merged_logical_supports(layout: MergedLayout) -> tuple[frozenset[int], frozenset[int]]:
    return layout.merged_logical_xx, layout.merged_logical_zz


def commutes(basis_a: str, support_a: Iterable[int], basis_b: str, support_b: Iterable[int]) -> bool:
    """Whether two single-basis Pauli strings commute."""
    if basis_a == basis_b:
        return True
    return len(set(support_a) & set(support_b)) % 2 == 0

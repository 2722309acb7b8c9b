"""Flat annotated circuits and their line-oriented text form.

The text form uses the instruction names of common stabilizer tools
(``H``, ``CX``, ``DEPOLARIZE2(p)``, ``DETECTOR(x, y, t) rec[-1]`` ...), so a
printed circuit can be fed to an external simulator unchanged.  Internally,
measurement records are referenced by absolute index.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

GATES_1Q = {"H", "I"}
GATES_2Q = {"CX", "CZ"}
RESETS = {"R"}
MEASUREMENTS = {"M", "MR"}
NOISE_1Q = {"DEPOLARIZE1", "X_ERROR", "Y_ERROR", "Z_ERROR"}
NOISE_2Q = {"DEPOLARIZE2"}
NOISE = NOISE_1Q | NOISE_2Q
ANNOTATIONS = {"DETECTOR", "OBSERVABLE_INCLUDE", "TICK", "QUBIT_COORDS"}
KNOWN = GATES_1Q | GATES_2Q | RESETS | MEASUREMENTS | NOISE | ANNOTATIONS | {"MPP"}

TAGS = ("bulk", "seam", "interface", "teleport", "ideal", "round", "primal", "dual")


class Rec(NamedTuple):
    """Absolute measurement record index."""

    index: int


PauliProduct = tuple  # tuple[tuple[str, int], ...]


@dataclass(frozen=True)
class Instruction:
    name: str
    targets: tuple = ()
    args: tuple = ()
    tag: str = ""

    def __post_init__(self):
        if self.name not in KNOWN:
            raise ValueError(f"unknown instruction {self.name!r}")

    @property
    def is_noise(self) -> bool:
        return self.name in NOISE

    @property
    def is_feedback(self) -> bool:
        return self.name in GATES_2Q and any(isinstance(t, Rec) for t in self.targets)

    def num_measurements(self) -> int:
        if self.name in MEASUREMENTS:
            return len(self.targets)
        if self.name == "MPP":
            return len(self.targets)
        return 0

    def qubit_groups(self) -> list[tuple[int, ...]]:
        """Targets grouped by gate arity (pairs for two-qubit gates)."""
        if self.is_feedback:
            return [(t,) for t in self.targets if not isinstance(t, Rec)]
        if self.name in GATES_2Q | NOISE_2Q:
            t = self.targets
            return [(t[k], t[k + 1]) for k in range(0, len(t), 2)]
        if self.name == "MPP":
            return [tuple(q for _, q in prod) for prod in self.targets]
        return [(t,) for t in self.targets if not isinstance(t, Rec)]


@dataclass(frozen=True)
class Detector:
    records: tuple[int, ...]
    coords: tuple[float, ...]
    sector: str  # "primal" (Z checks) or "dual" (X checks)


@dataclass
class Circuit:
    instructions: list[Instruction] = field(default_factory=list)
    meta: dict = field(default_factory=dict, compare=False)

    def append(self, name: str, targets: Iterable = (), args: Iterable = (), tag: str = "") -> None:
        self.instructions.append(Instruction(name, tuple(targets), tuple(args), tag))

    def copy(self) -> "Circuit":
        return Circuit(list(self.instructions), dict(self.meta))

    @property
    def num_qubits(self) -> int:
        n = 0
        for ins in self.instructions:
            for grp in ins.qubit_groups():
                if grp:
                    n = max(n, max(grp) + 1)
        return n

    @property
    def num_measurements(self) -> int:
        return sum(ins.num_measurements() for ins in self.instructions)

    @property
    def detectors(self) -> list[Detector]:
        return [
            Detector(tuple(t.index for t in ins.targets), tuple(ins.args), ins.tag)
            for ins in self.instructions
            if ins.name == "DETECTOR"
        ]

    @property
    def num_detectors(self) -> int:
        return sum(1 for ins in self.instructions if ins.name == "DETECTOR")

    @property
    def observables(self) -> list[tuple[int, ...]]:
        obs: dict[int, list[int]] = {}
        for ins in self.instructions:
            if ins.name == "OBSERVABLE_INCLUDE":
                obs.setdefault(int(ins.args[0]), []).extend(t.index for t in ins.targets)
        n = max(obs) + 1 if obs else 0
        return [tuple(obs.get(k, ())) for k in range(n)]

    @property
    def observable_sectors(self) -> list[str]:
        out: dict[int, str] = {}
        for ins in self.instructions:
            if ins.name == "OBSERVABLE_INCLUDE":
                out[int(ins.args[0])] = ins.tag
        return [out[k] for k in sorted(out)]

    @property
    def num_observables(self) -> int:
        return len(self.observables)

    @property
    def is_noisy(self) -> bool:
        return any(ins.is_noise for ins in self.instructions)

    def qubit_coords(self) -> dict[int, tuple[float, ...]]:
        out = {}
        for ins in self.instructions:
            if ins.name == "QUBIT_COORDS":
                for q in ins.targets:
                    out[q] = tuple(ins.args)
        return out

    def without_noise(self) -> "Circuit":
        return Circuit([i for i in self.instructions if not i.is_noise], dict(self.meta))

    def __str__(self) -> str:
        return to_text(self)


def _fmt_num(v: float) -> str:
    v = float(v)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_text(circuit: Circuit) -> str:
    lines = []
    measured = 0
    for ins in circuit.instructions:
        head = ins.name
        if ins.tag:
            head += f"[{ins.tag}]"
        if ins.args:
            head += "(" + ", ".join(_fmt_num(a) for a in ins.args) + ")"
        parts = []
        if ins.name == "MPP":
            parts = ["*".join(f"{p}{q}" for p, q in prod) for prod in ins.targets]
        else:
            for t in ins.targets:
                if isinstance(t, Rec):
                    if t.index >= measured:
                        raise ValueError(f"{ins.name} references a future measurement")
                    parts.append(f"rec[{t.index - measured}]")
                else:
                    parts.append(str(t))
        lines.append(head + (" " + " ".join(parts) if parts else ""))
        measured += ins.num_measurements()
    return "\n".join(lines) + ("\n" if lines else "")


_LINE = re.compile(r"^([A-Z_0-9]+)(?:\[([^\]]*)\])?(?:\(([^)]*)\))?\s*(.*)$")
_REC = re.compile(r"^rec\[(-\d+)\]$")


def from_text(text: str) -> Circuit:
    circuit = Circuit()
    measured = 0
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE.match(line)
        if not m:
            raise ValueError(f"cannot parse line {raw!r}")
        name, tag, args, rest = m.groups()
        args_t = tuple(float(a) for a in args.split(",")) if args else ()
        targets: list = []
        for tok in rest.split():
            if name == "MPP":
                targets.append(tuple((f[0], int(f[1:])) for f in tok.split("*")))
                continue
            r = _REC.match(tok)
            if r:
                targets.append(Rec(measured + int(r.group(1))))
            else:
                targets.append(int(tok))
        ins = Instruction(name, tuple(targets), args_t, tag or "")
        circuit.instructions.append(ins)
        measured += ins.num_measurements()
    return circuit

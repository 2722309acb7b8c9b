"""Circuit-level noise placement.

Rules, applied by :func:`annotate` to a noiseless circuit:

* ``DEPOLARIZE1(p_loc)`` after every ``H`` and every idle ``I``;
* ``DEPOLARIZE2(p_loc)`` after local ``CX``/``CZ`` and ``DEPOLARIZE2(p_link)``
  after gates that cross the interface;
* ``X_ERROR(p_loc)`` after resets and before measurements;
* a link Bell pair is prepared ideally and then hit by ``DEPOLARIZE2(p_link)``.

Instructions tagged ``ideal`` and classically controlled corrections stay
noiseless.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

from .circuit import Circuit, Instruction

ELEVATED_LINK_P_LOC = 0.001


class Profile(enum.Enum):
    UNIFORM = "Uniform"
    ELEVATED_LINK = "ElevatedLink"
    CUSTOM = "Custom"
    PHENOMENOLOGICAL = "Phenomenological"


@dataclass(frozen=True)
class NoiseParams:
    p_loc: float
    p_link: float
    profile: Profile = Profile.CUSTOM
    seam_spam: str = "local"  # "local" or "link": rate of seam-ancilla resets and measurements

    def __post_init__(self):
        for name in ("p_loc", "p_link"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.profile is Profile.UNIFORM and self.p_link != self.p_loc:
            raise ValueError("uniform noise needs p_link == p_loc")
        if self.seam_spam not in ("local", "link"):
            raise ValueError("seam_spam must be 'local' or 'link'")

    @classmethod
    def uniform(cls, p: float) -> "NoiseParams":
        return cls(p, p, Profile.UNIFORM)

    @classmethod
    def elevated_link(cls, p_link: float, p_loc: float = ELEVATED_LINK_P_LOC) -> "NoiseParams":
        return cls(p_loc, p_link, Profile.ELEVATED_LINK)

    @classmethod
    def interface_only(cls, p_link: float) -> "NoiseParams":
        return cls(0.0, p_link, Profile.CUSTOM)

    @classmethod
    def phenomenological(cls, p: float) -> "NoiseParams":
        return cls(p, p, Profile.PHENOMENOLOGICAL)

    def to_dict(self) -> dict:
        return {"p_loc": self.p_loc, "p_link": self.p_link, "profile": self.profile.value, "seam_spam": self.seam_spam}

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseParams":
        profile = Profile(d.get("profile", "Custom"))
        p_loc = d.get("p_loc")
        p_link = d.get("p_link")
        if profile is Profile.UNIFORM:
            p = p_loc if p_loc is not None else p_link
            return cls(p, p, profile, d.get("seam_spam", "local"))
        if profile is Profile.ELEVATED_LINK and p_loc is None:
            p_loc = ELEVATED_LINK_P_LOC
        return cls(float(p_loc), float(p_link), profile, d.get("seam_spam", "local"))


@dataclass(frozen=True)
class PauliChannel:
    arity: int
    p: float

    def terms(self) -> list[tuple[str, float]]:
        """Non-identity Pauli products with their probabilities."""
        letters = ["".join(t) for t in itertools.product("IXYZ", repeat=self.arity)]
        errs = [t for t in letters if set(t) != {"I"}]
        return [(t, self.p / len(errs)) for t in errs]

    def kraus_weights(self) -> list[tuple[str, float]]:
        """All Pauli products including the identity, with probabilities."""
        return [("I" * self.arity, 1 - self.p)] + self.terms()


def pair_fidelity(p_link: float) -> float:
    """Overlap of a depolarized Bell pair with the ideal one."""
    if not 0 <= p_link <= 1:
        raise ValueError("p_link must lie in [0, 1]")
    return 1 - 4 * p_link / 5


def annotate(circuit: Circuit, params: NoiseParams) -> Circuit:
    if circuit.is_noisy:
        raise ValueError("circuit already carries noise channels")
    if params.profile is Profile.PHENOMENOLOGICAL:
        return _phenomenological(circuit, params.p_loc)
    out = Circuit(meta=dict(circuit.meta))
    out.meta["noise"] = params.to_dict()
    emit = out.instructions.append
    p_loc, p_link = params.p_loc, params.p_link

    def spam(tag: str) -> float:
        return p_link if (tag == "seam" and params.seam_spam == "link") else p_loc

    for ins in circuit.instructions:
        name, tag, t = ins.name, ins.tag, ins.targets
        if tag == "ideal" and name != "CX":
            emit(ins)
            continue
        if name in ("M", "MR"):
            emit(Instruction("X_ERROR", t, (spam(tag),), tag))
            emit(ins)
            if name == "MR":
                emit(Instruction("X_ERROR", t, (spam(tag),), tag))
        elif name == "R":
            emit(ins)
            emit(Instruction("X_ERROR", t, (spam(tag),), tag))
        elif name in ("H", "I"):
            emit(ins)
            emit(Instruction("DEPOLARIZE1", t, (p_loc,), tag))
        elif name in ("CX", "CZ") and not ins.is_feedback:
            emit(ins)
            if tag == "ideal":
                continue
            p = p_link if tag in ("interface", "teleport") else p_loc
            emit(Instruction("DEPOLARIZE2", t, (p,), tag))
        else:
            emit(ins)
    return out


def _phenomenological(circuit: Circuit, p: float) -> Circuit:
    """Data depolarization at the start of each round plus measurement flips."""
    data = circuit.meta.get("data_qubits")
    if data is None:
        raise ValueError("phenomenological noise needs the data-qubit list in circuit.meta")
    out = Circuit(meta=dict(circuit.meta))
    out.meta["noise"] = NoiseParams.phenomenological(p).to_dict()
    for ins in circuit.instructions:
        if ins.name in ("M", "MR") and ins.tag != "ideal":
            out.instructions.append(Instruction("X_ERROR", ins.targets, (p,), ins.tag))
        out.instructions.append(ins)
        if ins.name == "TICK" and ins.tag == "round":
            out.instructions.append(Instruction("DEPOLARIZE1", tuple(data), (p,), "bulk"))
    return out

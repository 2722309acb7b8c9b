"""Bit-packed Pauli-frame simulation.

Every row of the ``x``/``z`` frame arrays is one qubit and every bit one
shot (64 shots per ``uint64`` word).  The same propagation core serves three
purposes:

* Monte Carlo sampling, where noise channels flip random frame bits;
* fault lanes, where each bit position carries one deterministic single-qubit
  Pauli inserted at one noise location (used to extract error models);
* gauge lanes, where each bit carries a stabilizer of the noiseless state
  (``Z`` after a reset or measurement).  A detector whose parity changes
  under some gauge lane is not deterministic.

Sampling draws randomness per fixed-size block of shots from a generator
seeded by ``(seed, block index)``, so a shot's bits depend only on the seed
and the shot index, not on how the work is split.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import Circuit, Instruction, Rec, NOISE

BLOCK_SHOTS = 8192
_ONE = np.uint64(1)


@dataclass
class NoiseSite:
    """One noise instruction, with its targets grouped into units."""

    op: int  # position in the compiled program
    instruction: int  # position in the circuit
    name: str
    p: float
    units: np.ndarray  # (n_units, arity) qubit indices
    tag: str


class Program:
    """A circuit compiled to index arrays for fast frame propagation."""

    def __init__(self, circuit: Circuit):
        self.circuit = circuit
        self.num_qubits = circuit.num_qubits
        ops = []
        sites: list[NoiseSite] = []
        measured = 0
        for pos, ins in enumerate(circuit.instructions):
            name = ins.name
            if name in ("TICK", "QUBIT_COORDS", "DETECTOR", "OBSERVABLE_INCLUDE", "I"):
                continue
            if ins.is_feedback:
                for k in range(0, len(ins.targets), 2):
                    r, q = ins.targets[k], ins.targets[k + 1]
                    if not isinstance(r, Rec) or isinstance(q, Rec):
                        raise ValueError("feedback must be 'rec target' pairs")
                    if r.index >= measured:
                        raise ValueError("feedback references a future measurement")
                    ops.append(("FBX" if name == "CX" else "FBZ", r.index, q))
                continue
            if name in NOISE:
                arity = 2 if name == "DEPOLARIZE2" else 1
                units = np.array(ins.targets, dtype=np.int64).reshape(-1, arity)
                sites.append(NoiseSite(len(ops), pos, name, float(ins.args[0]), units, ins.tag))
                ops.append(("NOISE", len(sites) - 1))
                continue
            if name == "MPP":
                # one op per product: later products see the collapse of earlier ones
                for prod in ins.targets:
                    xs = np.array([q for p, q in prod if p in "XY"], dtype=np.int64)
                    zs = np.array([q for p, q in prod if p in "ZY"], dtype=np.int64)
                    ops.append(("MPP", xs, zs, measured))
                    measured += 1
                continue
            qs = list(ins.targets)
            for chunk in _distinct_chunks(qs, 2 if name in ("CX", "CZ") else 1):
                arr = np.array(chunk, dtype=np.int64)
                if name == "H":
                    ops.append(("H", arr))
                elif name == "CX":
                    ops.append(("CX", arr[0::2], arr[1::2]))
                elif name == "CZ":
                    ops.append(("CZ", arr[0::2], arr[1::2]))
                elif name == "R":
                    ops.append(("R", arr))
                elif name in ("M", "MR"):
                    ops.append((name, arr, measured))
                    measured += len(arr)
                else:
                    raise ValueError(f"cannot simulate {name}")
        self.ops = ops
        self.sites = sites
        self.num_measurements = measured
        dets = circuit.detectors
        for d in dets:
            if any(r >= measured for r in d.records):
                raise ValueError("detector references a future measurement")
        self.det_index = _pad([d.records for d in dets], measured)
        self.obs_index = _pad(circuit.observables, measured)
        self.num_detectors = len(dets)
        self.num_observables = len(circuit.observables)

    # -- core -------------------------------------------------------------
    def run(self, words: int, on_noise=None, after=None, init=None):
        """Propagate frames; returns the measurement-flip array."""
        x = np.zeros((self.num_qubits, words), dtype=np.uint64)
        z = np.zeros((self.num_qubits, words), dtype=np.uint64)
        rec = np.zeros((self.num_measurements + 1, words), dtype=np.uint64)
        if init is not None:
            init(x, z)
        for pos, op in enumerate(self.ops):
            code = op[0]
            if code == "NOISE":
                if on_noise is not None:
                    on_noise(op[1], x, z)
                continue
            if code == "H":
                q = op[1]
                tmp = x[q]
                x[q] = z[q]
                z[q] = tmp
            elif code == "CX":
                c, t = op[1], op[2]
                x[t] ^= x[c]
                z[c] ^= z[t]
            elif code == "CZ":
                a, b = op[1], op[2]
                xa = x[a]
                xb = x[b]
                z[a] ^= xb
                z[b] ^= xa
            elif code == "R":
                x[op[1]] = 0
                z[op[1]] = 0
            elif code == "M":
                q, s = op[1], op[2]
                rec[s : s + len(q)] = x[q]
            elif code == "MR":
                q, s = op[1], op[2]
                rec[s : s + len(q)] = x[q]
                x[q] = 0
                z[q] = 0
            elif code == "MPP":
                _, xs, zs, s = op
                v = np.zeros(words, dtype=np.uint64)
                if len(xs):
                    v ^= np.bitwise_xor.reduce(z[xs], axis=0)
                if len(zs):
                    v ^= np.bitwise_xor.reduce(x[zs], axis=0)
                rec[s] = v
            elif code == "FBX":
                x[op[2]] ^= rec[op[1]]
            elif code == "FBZ":
                z[op[2]] ^= rec[op[1]]
            if after is not None:
                after(pos, op, x, z)
        return rec

    def detector_bits(self, rec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Packed (n_det, words) and (n_obs, words) parity arrays."""
        return _xor_rows(rec, self.det_index), _xor_rows(rec, self.obs_index)


def _xor_rows(rec: np.ndarray, index: np.ndarray) -> np.ndarray:
    if index.shape[0] == 0:
        return np.zeros((0, rec.shape[1]), dtype=np.uint64)
    if index.shape[1] == 0:
        return np.zeros((index.shape[0], rec.shape[1]), dtype=np.uint64)
    out = rec[index[:, 0]].copy()
    for k in range(1, index.shape[1]):
        out ^= rec[index[:, k]]
    return out


def _pad(lists, fill: int) -> np.ndarray:
    width = max((len(x) for x in lists), default=0)
    out = np.full((len(lists), width), fill, dtype=np.int64)
    for i, x in enumerate(lists):
        out[i, : len(x)] = x
    return out


def _distinct_chunks(targets: list, arity: int):
    """Split a target list so that no qubit repeats inside a chunk."""
    chunk: list = []
    seen: set = set()
    for k in range(0, len(targets), arity):
        grp = targets[k : k + arity]
        if any(q in seen for q in grp):
            yield chunk
            chunk, seen = [], set()
        chunk.extend(grp)
        seen.update(grp)
    if chunk:
        yield chunk


def unpack(bits: np.ndarray, shots: int) -> np.ndarray:
    """(rows, words) uint64 -> (shots, rows) bool."""
    if bits.shape[0] == 0:
        return np.zeros((shots, 0), dtype=bool)
    b = np.unpackbits(np.ascontiguousarray(bits).view(np.uint8), axis=1, bitorder="little")
    return b[:, :shots].T.astype(bool)


# -- Monte Carlo ---------------------------------------------------------------

def _hit_positions(rng: np.random.Generator, n: int, p: float) -> np.ndarray:
    if p <= 0 or n == 0:
        return np.zeros(0, dtype=np.int64)
    if p >= 1:
        return np.arange(n, dtype=np.int64)
    if p > 0.2:
        return np.flatnonzero(rng.random(n) < p)
    chunks = []
    last = -1
    while True:
        remaining = n - 1 - last
        k = int(remaining * p + 6 * np.sqrt(remaining * p) + 16)
        pos = last + np.cumsum(rng.geometric(p, size=k))
        if pos[-1] >= n:
            chunks.append(pos[pos < n])
            break
        chunks.append(pos)
        last = int(pos[-1])
    return np.concatenate(chunks).astype(np.int64)


def _noise_sampler(program: Program, rng: np.random.Generator, words: int):
    shots = words * 64

    def on_noise(site_id: int, x: np.ndarray, z: np.ndarray) -> None:
        site = program.sites[site_id]
        units = site.units
        hits = _hit_positions(rng, len(units) * shots, site.p)
        if len(hits) == 0:
            return
        unit = hits // shots
        shot = hits % shots
        w = shot >> 6
        bit = np.left_shift(_ONE, (shot & 63).astype(np.uint64))
        if site.name == "X_ERROR":
            np.bitwise_xor.at(x, (units[unit, 0], w), bit)
            return
        if site.name == "Z_ERROR":
            np.bitwise_xor.at(z, (units[unit, 0], w), bit)
            return
        if site.name == "Y_ERROR":
            np.bitwise_xor.at(x, (units[unit, 0], w), bit)
            np.bitwise_xor.at(z, (units[unit, 0], w), bit)
            return
        if site.name == "DEPOLARIZE1":
            r = rng.integers(1, 4, size=len(hits))
            comps = [(0, r & 1, x), (0, r >> 1, z)]
        else:
            r = rng.integers(1, 16, size=len(hits))
            comps = [(0, r & 1, x), (0, (r >> 1) & 1, z), (1, (r >> 2) & 1, x), (1, (r >> 3) & 1, z)]
        for col, mask, arr in comps:
            sel = mask.astype(bool)
            if sel.any():
                np.bitwise_xor.at(arr, (units[unit[sel], col], w[sel]), bit[sel])

    return on_noise


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(block)])))


def sample_block_packed(program: Program, seed: int, block: int) -> tuple[np.ndarray, np.ndarray]:
    """Packed detector and observable flips for one full block of shots."""
    words = BLOCK_SHOTS // 64
    rng = block_rng(seed, block)
    rec = program.run(words, on_noise=_noise_sampler(program, rng, words))
    return program.detector_bits(rec)


@dataclass
class ShotBatch:
    detectors: np.ndarray  # (shots, n_det) bool
    observables: np.ndarray  # (shots, n_obs) bool
    seed: int
    start: int

    @property
    def shots(self) -> int:
        return self.detectors.shape[0]

    def to_packed_bytes(self) -> bytes:
        """Shot-major, detector-minor, little-endian bit packing per shot."""
        bits = np.concatenate([self.detectors, self.observables], axis=1)
        return np.packbits(bits, axis=1, bitorder="little").tobytes()

    def to_csv(self) -> str:
        lines = []
        for d, o in zip(self.detectors, self.observables):
            lines.append("".join("1" if b else "0" for b in d) + "," + "".join("1" if b else "0" for b in o))
        return "\n".join(lines) + "\n"


def sample(circuit: Circuit | Program, shots: int, seed: int, start: int = 0) -> ShotBatch:
    """Sample shots ``start .. start + shots - 1`` of the stream for ``seed``."""
    program = circuit if isinstance(circuit, Program) else Program(circuit)
    if shots < 0:
        raise ValueError("shots must be non-negative")
    dets, obs = [], []
    first = start // BLOCK_SHOTS
    last = (start + shots - 1) // BLOCK_SHOTS if shots else first - 1
    for b in range(first, last + 1):
        d, o = sample_block_packed(program, seed, b)
        lo = max(start - b * BLOCK_SHOTS, 0)
        hi = min(start + shots - b * BLOCK_SHOTS, BLOCK_SHOTS)
        dets.append(unpack(d, BLOCK_SHOTS)[lo:hi])
        obs.append(unpack(o, BLOCK_SHOTS)[lo:hi])
    if not dets:
        return ShotBatch(np.zeros((0, program.num_detectors), bool), np.zeros((0, program.num_observables), bool), seed, start)
    return ShotBatch(np.concatenate(dets), np.concatenate(obs), seed, start)


# -- deterministic lanes -------------------------------------------------------

def _lane_bits(lanes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return lanes >> 6, np.left_shift(_ONE, (lanes & 63).astype(np.uint64))


def gauge_vectors(circuit: Circuit | Program) -> tuple[list[int], Program]:
    """For every measurement record, the set of gauge lanes that flip it,
    as a Python int bitset.  A parity of records is deterministic in the
    noiseless circuit iff the XOR of their gauge vectors is zero."""
    program = circuit if isinstance(circuit, Program) else Program(circuit)
    events: list[tuple[int, object]] = []  # (op position, payload)
    n_lanes = program.num_qubits
    plan: dict[int, list] = {}
    for pos, op in enumerate(program.ops):
        code = op[0]
        if code in ("R", "M", "MR"):
            q = op[1]
            lanes = np.arange(n_lanes, n_lanes + len(q))
            n_lanes += len(q)
            plan.setdefault(pos, []).append(("Z", q, lanes))
        elif code == "MPP":
            _, xs, zs, _ = op
            lane = np.array([n_lanes])
            n_lanes += 1
            if len(xs):
                plan.setdefault(pos, []).append(("X", xs, np.repeat(lane, len(xs))))
            if len(zs):
                plan.setdefault(pos, []).append(("Z", zs, np.repeat(lane, len(zs))))
    words = max(1, (n_lanes + 63) // 64)

    def init(x, z):
        q = np.arange(program.num_qubits)
        w, b = _lane_bits(q)
        np.bitwise_xor.at(z, (q, w), b)

    def after(pos, op, x, z):
        for basis, q, lanes in plan.get(pos, ()):
            w, b = _lane_bits(lanes)
            np.bitwise_xor.at(x if basis == "X" else z, (q, w), b)

    rec = program.run(words, after=after, init=init)
    vecs = [int.from_bytes(rec[i].tobytes(), "little") for i in range(program.num_measurements)]
    return vecs, program


def nondeterministic(circuit: Circuit) -> tuple[list[int], list[int]]:
    """Indices of detectors and observables that are random without noise."""
    vecs, program = gauge_vectors(circuit)
    bad_d, bad_o = [], []
    for k, d in enumerate(circuit.detectors):
        v = 0
        for r in d.records:
            v ^= vecs[r]
        if v:
            bad_d.append(k)
    for k, recs in enumerate(circuit.observables):
        v = 0
        for r in recs:
            v ^= vecs[r]
        if v:
            bad_o.append(k)
    return bad_d, bad_o


@dataclass
class LaneResult:
    """Symptoms of single basis faults: lane ``k`` is the Pauli ``bases[k]``
    on qubit ``qubits[k]`` inserted at noise site ``sites[k]``, unit ``units[k]``."""

    sites: np.ndarray
    units: np.ndarray
    qubits: np.ndarray
    bases: np.ndarray  # 0 = X, 1 = Z
    columns: np.ndarray  # position of the qubit inside its unit
    detectors: list  # per lane: tuple of detector ids
    observables: list  # per lane: observable bitmask


def fault_lanes(program: Program, chunk: int = 1 << 14) -> LaneResult:
    """Propagate one X and one Z lane per qubit of every noise unit."""
    site_ids, unit_ids, qubits, bases, columns = [], [], [], [], []
    for s, site in enumerate(program.sites):
        n_u, arity = site.units.shape
        for col in range(arity):
            for basis in (0, 1):
                if site.name == "X_ERROR" and basis == 1:
                    continue
                if site.name == "Z_ERROR" and basis == 0:
                    continue
                site_ids.append(np.full(n_u, s))
                unit_ids.append(np.arange(n_u))
                qubits.append(site.units[:, col])
                bases.append(np.full(n_u, basis))
                columns.append(np.full(n_u, col))
    cat = lambda xs: np.concatenate(xs).astype(np.int64) if xs else np.zeros(0, np.int64)
    site_ids, unit_ids, qubits, bases, columns = cat(site_ids), cat(unit_ids), cat(qubits), cat(bases), cat(columns)
    dets_out: list = []
    obs_out: list = []
    for lo in range(0, len(site_ids), chunk):
        hi = min(lo + chunk, len(site_ids))
        lanes = np.arange(hi - lo)
        words = max(1, (hi - lo + 63) // 64)
        by_site: dict[int, list] = {}
        for k in range(lo, hi):
            by_site.setdefault(int(site_ids[k]), []).append(k)
        per_site = {}
        for s, ks in by_site.items():
            ks = np.array(ks)
            w, b = _lane_bits(ks - lo)
            per_site[s] = (qubits[ks], bases[ks], w, b)

        def on_noise(site_id, x, z, per_site=per_site):
            got = per_site.get(site_id)
            if got is None:
                return
            q, basis, w, b = got
            sx = basis == 0
            if sx.any():
                np.bitwise_xor.at(x, (q[sx], w[sx]), b[sx])
            if (~sx).any():
                np.bitwise_xor.at(z, (q[~sx], w[~sx]), b[~sx])

        rec = program.run(words, on_noise=on_noise)
        det, obs = program.detector_bits(rec)
        dbits = unpack(det, len(lanes))  # (lanes, n_det)
        obits = unpack(obs, len(lanes))
        for k in range(len(lanes)):
            dets_out.append(tuple(np.flatnonzero(dbits[k]).tolist()))
            m = 0
            for o in np.flatnonzero(obits[k]):
                m |= 1 << int(o)
            obs_out.append(m)
        del lanes
    return LaneResult(site_ids, unit_ids, qubits, bases, columns, dets_out, obs_out)


# -- single-Pauli helpers ------------------------------------------------------

def conjugate(pauli: str, gate: str) -> str:
    """Heisenberg propagation of a Pauli string through H, CX or CZ.

    ``pauli`` has one letter per gate operand (control first for CX).
    """
    gate = gate.upper()

    def bits(p):
        return {"I": (0, 0), "X": (1, 0), "Z": (0, 1), "Y": (1, 1)}[p]

    def letter(xb, zb):
        return {(0, 0): "I", (1, 0): "X", (0, 1): "Z", (1, 1): "Y"}[(xb, zb)]

    if gate == "H":
        if len(pauli) != 1:
            raise ValueError("H acts on one qubit")
        x, z = bits(pauli)
        return letter(z, x)
    if gate in ("CX", "CNOT", "CZ"):
        if len(pauli) != 2:
            raise ValueError(f"{gate} acts on two qubits")
        (x1, z1), (x2, z2) = bits(pauli[0]), bits(pauli[1])
        if gate == "CZ":
            z1, z2 = z1 ^ x2, z2 ^ x1
        else:
            x2 ^= x1
            z1 ^= z2
        return letter(x1, z1) + letter(x2, z2)
    raise ValueError(f"unknown gate {gate!r}")


def noise_locations(circuit: Circuit) -> list[tuple[int, int]]:
    """(instruction index, unit index) for every noise unit, in order."""
    out = []
    for pos, ins in enumerate(circuit.instructions):
        if ins.is_noise:
            arity = 2 if ins.name == "DEPOLARIZE2" else 1
            out.extend((pos, u) for u in range(len(ins.targets) // arity))
    return out


def inject_fault(circuit: Circuit, location: int | tuple[int, int], pauli: str, keep_noise: bool = False) -> Circuit:
    """Replace one noise unit by a Pauli that fires with certainty.

    ``location`` is an index into :func:`noise_locations` or an explicit
    ``(instruction, unit)`` pair.  Other noise is removed unless
    ``keep_noise`` is set.
    """
    locs = noise_locations(circuit)
    if isinstance(location, int):
        if not 0 <= location < len(locs):
            raise IndexError(f"noise location {location} out of range")
        location = locs[location]
    if tuple(location) not in set(locs):
        raise IndexError(f"invalid noise location {location}")
    pos, unit = location
    ins = circuit.instructions[pos]
    arity = 2 if ins.name == "DEPOLARIZE2" else 1
    if len(pauli) != arity or any(p not in "IXYZ" for p in pauli):
        raise ValueError(f"Pauli {pauli!r} does not fit a {ins.name} unit")
    qs = ins.targets[unit * arity : (unit + 1) * arity]
    out = Circuit(meta=dict(circuit.meta))
    for k, other in enumerate(circuit.instructions):
        if k == pos:
            if keep_noise:
                rest = ins.targets[: unit * arity] + ins.targets[(unit + 1) * arity :]
                if rest:
                    out.instructions.append(Instruction(ins.name, rest, ins.args, ins.tag))
            for p, q in zip(pauli, qs):
                if p != "I":
                    out.instructions.append(Instruction(f"{p}_ERROR", (q,), (1.0,), ins.tag))
            continue
        if other.is_noise and not keep_noise:
            continue
        out.instructions.append(other)
    return out

"""Fault-count stratified estimation of tiny logical error rates.

When every noisy channel unit of a circuit fires independently with the same
probability p, the number of units that fire is Binomial(N, p) and, given k
of them fire, which units and which Pauli terms is uniform.  So

    p_L(p) = sum_k Binom(N, k; p) * f_k

where f_k is the decoder failure rate given exactly k faulty units.  f_k is
estimated by Monte Carlo with exactly k faults injected, which resolves
error rates far below direct sampling reach.  Faults are propagated exactly
(each unit/Pauli symptom comes from the frame simulator), not through the
merged error model.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binom

from .circuit import Circuit
from .dem import extract, raw_faults
from .decoder import BatchDecoder
from .sim import block_rng


@dataclass
class FaultTable:
    """Symptoms of every (unit, Pauli term) of an annotated circuit."""

    p: float
    num_detectors: int
    num_observables: int
    symptoms: np.ndarray  # (terms, words) uint64 packed detector flips
    obs: np.ndarray  # (terms,) observable masks
    first: np.ndarray  # (units,) index of a unit's first term
    count: np.ndarray  # (units,) number of terms per unit

    @property
    def num_units(self) -> int:
        return len(self.first)


def fault_table(circuit: Circuit) -> FaultTable:
    raw = raw_faults(circuit)
    rates = {prov.p for _, _, _, prov in raw}
    if len(rates) != 1:
        raise ValueError(f"stratification needs a single channel rate, found {sorted(rates)}")
    n_det = circuit.num_detectors
    words = max(1, (n_det + 63) // 64)
    units: dict[tuple, list[int]] = defaultdict(list)
    for k, (_, _, _, prov) in enumerate(raw):
        units[(prov.instruction, prov.qubits)].append(k)
    sym = np.zeros((len(raw), words), dtype=np.uint64)
    obs = np.zeros(len(raw), dtype=np.int64)
    for k, (_, dets, mask, _) in enumerate(raw):
        for dd in dets:
            sym[k, dd >> 6] |= np.uint64(1) << np.uint64(dd & 63)
        obs[k] = mask
    order = sorted(units)
    first = np.array([units[u][0] for u in order], dtype=np.int64)
    count = np.array([len(units[u]) for u in order], dtype=np.int64)
    for u in order:  # terms of a unit are contiguous
        ids = units[u]
        if ids != list(range(ids[0], ids[0] + len(ids))):
            raise AssertionError("unit terms are not contiguous")
    return FaultTable(rates.pop(), n_det, circuit.num_observables, sym, obs, first, count)


def sample_k_faults(table: FaultTable, k: int, shots: int, rng: np.random.Generator):
    """Shots with exactly ``k`` distinct faulty units: (detectors bool, observables bool)."""
    n = table.num_units
    if not 0 < k <= n:
        raise ValueError("k must lie in [1, number of units]")
    units = np.argpartition(rng.random((shots, n)), k - 1, axis=1)[:, :k]
    term = table.first[units] + (rng.random((shots, k)) * table.count[units]).astype(np.int64)
    packed = np.bitwise_xor.reduce(table.symptoms[term], axis=1)
    dets = np.unpackbits(packed.view(np.uint8), axis=1, bitorder="little")[:, : table.num_detectors].astype(bool)
    mask = np.bitwise_xor.reduce(table.obs[term], axis=1)
    obs = ((mask[:, None] >> np.arange(table.num_observables)) & 1).astype(bool)
    return dets, obs


@dataclass
class Stratum:
    k: int
    weight: float  # Binom(N, k; p)
    samples: int
    failures: int

    @property
    def rate(self) -> float:
        return self.failures / self.samples if self.samples else 0.0


@dataclass
class StratifiedEstimate:
    p: float
    num_units: int
    strata: list = field(default_factory=list)
    tail: float = 0.0  # probability mass of unsampled strata (bounds their contribution)

    @property
    def p_L(self) -> float:
        return sum(s.weight * s.rate for s in self.strata)

    @property
    def stderr(self) -> float:
        var = 0.0
        for s in self.strata:
            if s.samples:
                f = s.rate
                var += s.weight**2 * f * (1 - f) / s.samples
        return math.sqrt(var)

    @property
    def failures(self) -> int:
        return sum(s.failures for s in self.strata)

    @property
    def samples(self) -> int:
        return sum(s.samples for s in self.strata)

    def dominant(self) -> Stratum:
        return max(self.strata, key=lambda s: s.weight * s.rate)

    def to_dict(self) -> dict:
        return {
            "p": self.p, "num_units": self.num_units, "p_L": self.p_L, "stderr": self.stderr,
            "tail": self.tail,
            "strata": [{"k": s.k, "weight": s.weight, "samples": s.samples, "failures": s.failures} for s in self.strata],
        }


def stratified_estimate(circuit: Circuit, seed: int, min_failures: int = 100, max_samples: int = 10**7,
                        block: int = 8192, tail_tol: float = 1e-3, k_max: int | None = None) -> StratifiedEstimate:
    """p_L of a single-rate circuit from per-fault-count strata.

    Strata k = 1, 2, ... are sampled until each has ``min_failures`` failures
    or ``max_samples`` samples.  Strata stop once the remaining binomial mass
    is below ``tail_tol`` times the running estimate.
    """
    table = fault_table(circuit)
    decoder = BatchDecoder(extract(circuit))
    n, p = table.num_units, table.p
    est = StratifiedEstimate(p, n)
    k = 1
    while k <= n and (k_max is None or k <= k_max):
        weight = float(binom.pmf(k, n, p))
        tail_after = float(binom.sf(k, n, p))
        samples = failures = 0
        b = 0
        while failures < min_failures and samples < max_samples:
            size = min(block, max_samples - samples)
            rng = block_rng(seed, (k << 32) | b)
            dets, obs = sample_k_faults(table, k, size, rng)
            failures += int(decoder.failures(dets, obs).any(axis=1).sum())
            samples += size
            b += 1
        est.strata.append(Stratum(k, weight, samples, failures))
        est.tail = tail_after
        if est.p_L > 0 and tail_after < tail_tol * est.p_L:
            break
        k += 1
    return est

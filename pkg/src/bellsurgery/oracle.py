"""Decoder cross-checks on one sampled syndrome set.

MWPM (pymatching) is compared against the most-probable-explanation search
over the full error model.  The same search restricted to the matching-graph
edges separates the two causes of any gap: correlations the sector graphs
drop, or matching itself.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .builder import build_bell_prep_circuit
from .decoder import BatchDecoder, MLDecoder
from .dem import BOUNDARY, DetectorErrorModel, FaultMechanism, extract, raw_faults
from .noise import NoiseParams
from .sim import sample

log = logging.getLogger(__name__)


@dataclass
class OracleCounts:
    protocol: str
    d: int
    p: float
    shots: int
    seed: int
    mwpm_failures: int
    ml_failures: int
    ml_unexplained: int  # counted inside ml_failures
    graph_ml_failures: int
    disagreements: int  # shots where MWPM and ML predict different observables
    single_faults: int
    single_fault_failures: int

    def to_dict(self) -> dict:
        return asdict(self)


def graph_dem(dem: DetectorErrorModel, decoder: BatchDecoder) -> DetectorErrorModel:
    """The matching-graph edges of both sectors as an error model of their own."""
    mechs = []
    for g in decoder.graphs:
        for e in g.sorted_edges():
            dets = tuple(sorted(g.detectors[x] for x in (e.u, e.v) if x != BOUNDARY))
            obs = tuple(k for k in range(dem.num_observables) if e.observables >> k & 1)
            mechs.append(FaultMechanism(e.p, dets, obs, ()))
    return DetectorErrorModel(dem.num_detectors, dem.num_observables, dem.coords, dem.sectors,
                              dem.observable_sectors, mechs)


def _ml_predictions(ml: MLDecoder, det: np.ndarray, n_obs: int) -> tuple[np.ndarray, np.ndarray]:
    pred = np.zeros((det.shape[0], n_obs), dtype=bool)
    unexplained = np.zeros(det.shape[0], dtype=bool)
    rows, inverse = np.unique(det, axis=0, return_inverse=True)
    order = np.argsort(inverse.reshape(-1), kind="stable")
    groups = np.split(order, np.cumsum(np.bincount(inverse.reshape(-1), minlength=len(rows)))[:-1])
    for row, sel in zip(rows, groups):
        try:
            mask = ml.decode(np.nonzero(row)[0]).observables
        except ValueError:
            unexplained[sel] = True
            continue
        pred[sel] = [(mask >> k) & 1 for k in range(n_obs)]
    return pred, unexplained


def single_fault_failures(circuit, decoder: BatchDecoder) -> tuple[int, int]:
    """(fault terms with a non-empty symptom, how many of them MWPM mis-decodes)."""
    faults = [(dets, obs) for _, dets, obs, _ in raw_faults(circuit) if dets]
    det = np.zeros((len(faults), circuit.num_detectors), bool)
    obs = np.zeros((len(faults), circuit.num_observables), bool)
    for k, (dd, o) in enumerate(faults):
        det[k, list(dd)] = True
        obs[k] = [(o >> j) & 1 for j in range(circuit.num_observables)]
    return len(faults), int(decoder.failures(det, obs).any(axis=1).sum())


def decoder_oracle(protocol: str, d: int = 3, p: float = 0.001, shots: int = 10**6, seed: int = 0,
                   max_faults: int = 3, escalate_to: int = 6) -> OracleCounts:
    circuit = build_bell_prep_circuit(d, protocol, "Alternate", NoiseParams.uniform(p))
    dem = extract(circuit)
    mwpm = BatchDecoder(dem)
    batch = sample(circuit, shots, seed)
    det, obs = batch.detectors, batch.observables
    mwpm_pred = mwpm.predict(det)
    ml_pred, unexplained = _ml_predictions(MLDecoder(dem, max_faults, escalate_to), det, dem.num_observables)
    graph_pred, graph_unexplained = _ml_predictions(
        MLDecoder(graph_dem(dem, mwpm), max_faults, escalate_to), det, dem.num_observables)
    ml_fail = (ml_pred != obs).any(axis=1) | unexplained
    n_single, single_bad = single_fault_failures(circuit, mwpm)
    counts = OracleCounts(
        protocol, d, p, shots, seed,
        mwpm_failures=int((mwpm_pred != obs).any(axis=1).sum()),
        ml_failures=int(ml_fail.sum()),
        ml_unexplained=int(unexplained.sum()),
        graph_ml_failures=int(((graph_pred != obs).any(axis=1) | graph_unexplained).sum()),
        disagreements=int((mwpm_pred != ml_pred).any(axis=1).sum()),
        single_faults=n_single,
        single_fault_failures=single_bad,
    )
    log.info("oracle %s: %s", protocol, counts)
    return counts

import numpy as np
import pytest

from bellsurgery.builder import build_memory_circuit
from bellsurgery.decoder import BatchDecoder
from bellsurgery.dem import extract, raw_faults
from bellsurgery.geometry import build_merged_layout
from bellsurgery.noise import NoiseParams
from bellsurgery.sim import block_rng, sample
from bellsurgery.stratified import fault_table, sample_k_faults, stratified_estimate


def _circuit(p, d=3, policy="RepeatA", protocol="BellDirect"):
    return build_memory_circuit(build_merged_layout(d, protocol), policy, rounds=d,
                                noise_params=NoiseParams.interface_only(p))


def test_table_layout():
    c = _circuit(0.01)
    table = fault_table(c)
    assert table.p == 0.01
    assert table.count.sum() == len(raw_faults(c))
    assert set(table.count) == {15}  # every unit is a two-qubit depolarizing channel
    assert table.num_units == 3 * 3  # d crossing gates in each of d rounds


def test_mixed_rates_rejected():
    c = build_memory_circuit(build_merged_layout(3, "BellDirect"), "RepeatA", rounds=3,
                             noise_params=NoiseParams.elevated_link(0.02))
    with pytest.raises(ValueError):
        fault_table(c)


def test_k_faults_use_distinct_units():
    table = fault_table(_circuit(0.01))
    rng = block_rng(1, 0)
    dets, obs = sample_k_faults(table, 1, 2000, rng)
    # with one fault, each symptom equals the symptom of a single term
    singles = {tuple(np.nonzero(row)[0]) for row in dets}
    allowed = {tuple(np.unpackbits(s.view(np.uint8), bitorder="little")[: table.num_detectors].nonzero()[0])
               for s in table.symptoms}
    assert singles <= allowed
    with pytest.raises(ValueError):
        sample_k_faults(table, 0, 10, rng)
    with pytest.raises(ValueError):
        sample_k_faults(table, table.num_units + 1, 10, rng)


def test_strata_weights_and_determinism():
    c = _circuit(0.01)
    a = stratified_estimate(c, seed=3, min_failures=50, max_samples=200000)
    b = stratified_estimate(c, seed=3, min_failures=50, max_samples=200000)
    assert a.to_dict() == b.to_dict()
    assert sum(s.weight for s in a.strata) + a.tail == pytest.approx(1 - (1 - 0.01) ** a.num_units)
    assert a.dominant().k in (1, 2)


@pytest.mark.parametrize("policy", ["RepeatA", "Alternate"])
def test_agrees_with_direct_sampling(policy):
    p = 0.03
    c = _circuit(p, policy=policy)
    strat = stratified_estimate(c, seed=9, min_failures=400, max_samples=400000)
    shots = 300000
    batch = sample(c, shots, seed=9)
    fails = BatchDecoder(extract(c)).failures(batch.detectors, batch.observables).any(axis=1).mean()
    se = np.sqrt(fails * (1 - fails) / shots + strat.stderr**2)
    assert abs(fails - strat.p_L) < 4 * se

import itertools

import pytest
from hypothesis import given, strategies as st

from bellsurgery.builder import build_bell_prep_circuit, build_memory_circuit
from bellsurgery.circuit import from_text, to_text
from bellsurgery.dem import (BOUNDARY, combine, edge_weight, extract, graph_symmetry_check, predicted_flip_rates,
                             raw_faults, split_graphlike)
from bellsurgery.geometry import build_merged_layout, build_patch
from bellsurgery.noise import NoiseParams
from bellsurgery.sim import inject_fault, noise_locations, sample

probs = st.floats(min_value=0, max_value=1)


@given(probs, probs)
def test_merge_rule(a, b):
    c = combine(a, b)
    assert c == pytest.approx(a * (1 - b) + b * (1 - a))
    assert combine(a, 0) == pytest.approx(a)
    assert 0 <= c <= 1 + 1e-12


@given(probs, probs, probs)
def test_merge_rule_is_associative(a, b, c):
    assert combine(combine(a, b), c) == pytest.approx(combine(a, combine(b, c)))


def test_edge_weight():
    assert edge_weight(0.01) == pytest.approx(4.59512, rel=1e-5)
    assert edge_weight(0.6) > 0
    with pytest.raises(ValueError):
        edge_weight(0)


def test_idle_bulk_depolarization_mechanisms():
    bare = build_memory_circuit(build_patch(5), "RepeatA", rounds=3)
    # one idle depolarization on a central data qubit between rounds
    ticks = [k for k, ins in enumerate(bare.instructions) if ins.name == "TICK" and ins.tag == "round"]
    centre = bare.meta["data_qubits"][12]
    text = to_text(bare).splitlines()
    pos = None
    count = 0
    for k, line in enumerate(text):
        if line.startswith("TICK[round]"):
            count += 1
            if count == 2:
                pos = k
    text.insert(pos + 1, f"DEPOLARIZE1(0.01) {centre}")
    dem = extract(from_text("\n".join(text)))
    assert ticks and len(dem.mechanisms) == 3
    sizes = sorted(len(m.detectors) for m in dem.mechanisms)
    assert sizes == [2, 2, 4]


def test_zero_noise_gives_empty_model():
    dem = extract(build_bell_prep_circuit(3, "BellDirect", "Alternate", NoiseParams.uniform(0.0)))
    assert dem.mechanisms == []
    dem = extract(build_bell_prep_circuit(3, "BellDirect", "Alternate"))
    assert dem.mechanisms == []


def test_symptom_sets_unique_and_probabilities_merged():
    c = build_bell_prep_circuit(3, "BellDirect", "Alternate", NoiseParams.uniform(0.001))
    dem = extract(c)
    keys = [(m.detectors, m.observables) for m in dem.mechanisms]
    assert len(keys) == len(set(keys))
    raw = raw_faults(c)
    assert dem.raw_count == len(raw)
    for m in dem.mechanisms[:50]:
        expected = 0.0
        mask = sum(1 << o for o in m.observables)
        for p, dets, obs, _ in raw:
            if dets == m.detectors and obs == mask:
                expected = combine(expected, p)
        assert m.probability == pytest.approx(expected)


def test_symptoms_match_single_fault_injection():
    # second propagation route: exact injection of each fault and one noiseless shot
    c = build_bell_prep_circuit(3, "BellDirect", "Alternate", NoiseParams.uniform(0.001))
    raw = raw_faults(c)
    locs = {loc: k for k, loc in enumerate(noise_locations(c))}
    checked = 0
    for p, dets, obs, prov in raw[::7]:
        ins = c.instructions[prov.instruction]
        arity = 2 if ins.name == "DEPOLARIZE2" else 1
        groups = [ins.targets[u * arity:(u + 1) * arity] for u in range(len(ins.targets) // arity)]
        unit = groups.index(prov.qubits)
        shot = sample(inject_fault(c, locs[(prov.instruction, unit)], prov.pauli), 1, 0)
        assert tuple(int(k) for k in shot.detectors[0].nonzero()[0]) == dets
        assert sum(1 << int(k) for k in shot.observables[0].nonzero()[0]) == obs
        checked += 1
    assert checked > 50


def test_single_fault_degree_bound():
    for protocol in ("BellDirect", "BenchmarkTeleported"):
        c = build_bell_prep_circuit(3, protocol, "Alternate", NoiseParams.uniform(0.001))
        sectors = [d.sector for d in c.detectors]
        for p, dets, obs, prov in raw_faults(c):
            if len(prov.pauli) == 1 and prov.pauli != "Y":
                assert len(dets) <= 2
            for sector in ("primal", "dual"):
                if len(prov.pauli) == 1:
                    assert sum(sectors[d] == sector for d in dets) <= 2


@pytest.mark.parametrize("protocol", ["BellDirect", "BellTeleported", "BenchmarkDirect", "BenchmarkTeleported"])
def test_matches_stim_error_model(stim, protocol):
    c = build_bell_prep_circuit(3, protocol, "Alternate", NoiseParams.elevated_link(0.02))
    ours = {(m.detectors, m.observables): m.probability for m in extract(c).mechanisms}
    ref = {}
    for inst in stim.Circuit(to_text(c)).detector_error_model(flatten_loops=True):
        if inst.type != "error":
            continue
        dets = tuple(sorted(t.val for t in inst.targets_copy() if t.is_relative_detector_id()))
        obs = tuple(sorted(t.val for t in inst.targets_copy() if t.is_logical_observable_id()))
        key = (dets, obs)
        ref[key] = combine(ref.get(key, 0.0), inst.args_copy()[0])
    assert set(ours) == set(ref)
    # stim converts depolarizing channels to independent components, a second-order difference
    for k in ours:
        assert ours[k] == pytest.approx(ref[k], rel=0.03)


def test_predicted_flip_rates_match_sampling():
    c = build_bell_prep_circuit(3, "BellTeleported", "Alternate", NoiseParams.uniform(0.01))
    rates = predicted_flip_rates(extract(c))
    shots = 40000
    seen = sample(c, shots, seed=3).detectors.mean(axis=0)
    for r, s in zip(rates, seen):
        assert abs(r - s) < 5 * (r * (1 - r) / shots) ** 0.5 + 1e-3


def _mid_slice(graph):
    ts = sorted({c[2] for c in graph.coords})
    return ts[len(ts) // 2]


def test_bulk_interior_degree_twelve():
    c = build_memory_circuit(build_patch(7), "RepeatA", rounds=5, noise_params=NoiseParams.uniform(0.001))
    primal, dual, _ = split_graphlike(extract(c))
    for g in (primal, dual):
        deg = g.degrees()
        t = _mid_slice(g)
        interior = [k for k, c_ in enumerate(g.coords) if c_[2] == t and 1.5 <= c_[0] <= 4.5 and 1.5 <= c_[1] <= 4.5]
        assert interior and all(deg[k] == 12 for k in interior)
        assert max(deg) == 12


def test_alternating_interface_has_degree_eleven():
    d = 7
    c = build_memory_circuit(build_merged_layout(d, "BellDirect"), "Alternate", rounds=5,
                             noise_params=NoiseParams.uniform(0.001))
    primal, dual, _ = split_graphlike(extract(c))
    near = [deg for g in (primal, dual) for deg, c_ in zip(g.degrees(), g.coords) if abs(c_[0] - (d - 0.5)) <= 1]
    assert 11 in near


@pytest.mark.parametrize("protocol,valence", [("BellDirect", 8), ("BenchmarkDirect", 6)])
def test_phenomenological_valence(protocol, valence):
    d = 5
    c = build_memory_circuit(build_merged_layout(d, protocol), "RepeatA", rounds=5,
                             noise_params=NoiseParams.phenomenological(0.001))
    primal, dual, _ = split_graphlike(extract(c))
    for g in (primal, dual):
        deg = g.degrees()
        t = _mid_slice(g)
        seam = [deg[k] for k, c_ in enumerate(g.coords) if c_[2] == t and c_[0] == d - 0.5 and 0.5 <= c_[1] <= d - 1.5]
        bulk = [deg[k] for k, c_ in enumerate(g.coords) if c_[2] == t and c_[0] in (1.5, 2.5) and 1.5 <= c_[1] <= d - 2.5]
        assert bulk and set(bulk) == {6}
        assert seam and max(seam) == valence


def test_bell_graph_symmetric_about_interface():
    d = 5
    c = build_memory_circuit(build_merged_layout(d, "BellDirect"), "Alternate", rounds=3,
                             noise_params=NoiseParams.uniform(0.001))
    primal, dual, _ = split_graphlike(extract(c))
    assert graph_symmetry_check(primal, d - 0.5)
    assert graph_symmetry_check(dual, d - 0.5)


def test_symmetry_check_vacuous_on_single_patch():
    c = build_memory_circuit(build_patch(3), "RepeatA", rounds=2, noise_params=NoiseParams.uniform(0.001))
    primal, _, _ = split_graphlike(extract(c))
    assert graph_symmetry_check(primal, 100.0)


def test_symmetry_check_detects_asymmetry():
    d = 5
    c = build_memory_circuit(build_merged_layout(d, "BellDirect"), "Alternate", rounds=3,
                             noise_params=NoiseParams.uniform(0.001))
    primal, _, _ = split_graphlike(extract(c))
    key = next(k for k in sorted(primal.edges) if primal.coords[k[0]][0] < d - 1.5 and k[1] != BOUNDARY)
    del primal.edges[key]
    assert not graph_symmetry_check(primal, d - 0.5)


def test_graphs_partition_detectors_and_are_graphlike():
    c = build_bell_prep_circuit(3, "BellTeleported", "Alternate", NoiseParams.uniform(0.001))
    dem = extract(c)
    primal, dual, records = split_graphlike(dem)
    assert sorted(primal.detectors + dual.detectors) == list(range(dem.num_detectors))
    for g in (primal, dual):
        for (u, v), e in g.edges.items():
            assert 0 < e.p < 0.5
            assert v == BOUNDARY or u > v
    assert all(len(piece) <= 2 for r in records for piece in r.pieces)


def test_texts_are_parseable(stim):
    c = build_bell_prep_circuit(3, "BellDirect", "Alternate", NoiseParams.uniform(0.001))
    dem = extract(c)
    parsed = stim.DetectorErrorModel(dem.to_text())
    assert parsed.num_errors == len(dem.mechanisms)
    primal, _, _ = split_graphlike(dem)
    lines = primal.to_edge_list().splitlines()
    assert len(lines) == len(primal.edges)

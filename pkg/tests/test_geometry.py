import itertools
import json

import pytest
from hypothesis import given, strategies as st

from bellsurgery.geometry import Kind, Module, Protocol, build_merged_layout, build_patch, commutes, merged_logical_supports
from bellsurgery.schedule import Label, round_sequence

odd_d = st.sampled_from([3, 5, 7, 9])
protocols = st.sampled_from(list(Protocol))


def test_patch_counts_d3():
    patch = build_patch(3)
    assert len(patch.data_qubits) == 9
    assert len(patch.plaquettes) == 8
    assert sum(p.basis == "X" for p in patch.plaquettes) == 4
    assert sum(p.basis == "Z" for p in patch.plaquettes) == 4


def test_patch_counts_d5():
    patch = build_patch(5)
    assert len(patch.data_qubits) == 25
    assert len(patch.plaquettes) == 24
    assert len(patch.logical_x) == len(patch.logical_z) == 5


@pytest.mark.parametrize("d", [2, 4, 1, 0, -3])
def test_rejects_bad_distance(d):
    with pytest.raises(ValueError):
        build_patch(d)


@given(odd_d)
def test_patch_stabilizers_commute_and_logicals_anticommute(d):
    patch = build_patch(d)
    for a, b in itertools.combinations(patch.plaquettes, 2):
        assert commutes(a.basis, a.support, b.basis, b.support)
    for p in patch.plaquettes:
        assert commutes("X", patch.logical_x, p.basis, p.support)
        assert commutes("Z", patch.logical_z, p.basis, p.support)
        assert p.weight in (2, 4)
        assert len(p.ancillas) == 1
    assert len(patch.logical_x & patch.logical_z) == 1


@given(odd_d)
def test_weight_two_checks_sit_on_boundaries(d):
    patch = build_patch(d)
    for p in patch.plaquettes:
        if p.weight == 2:
            xs = [q.coord[0] for q in p.data_qubits]
            ys = [q.coord[1] for q in p.data_qubits]
            assert min(xs) == 0 or max(xs) == d - 1 or min(ys) == 0 or max(ys) == d - 1
            assert len(set(xs)) == 1 or len(set(ys)) == 1


@given(odd_d, protocols)
def test_merged_stabilizers_commute(d, protocol):
    layout = build_merged_layout(d, protocol)
    stabs = layout.stabilizers()
    assert len(stabs) == 2 * (d * d - 1) - (d - 1) // 2 * 2 + d
    for a, b in itertools.combinations(stabs, 2):
        assert commutes(a.basis, a.support, b.basis, b.support)
    xx, zz = merged_logical_supports(layout)
    for p in stabs:
        assert commutes("X", xx, p.basis, p.support)
        assert commutes("Z", zz, p.basis, p.support)
    # XX and ZZ commute; each single-patch logical X anticommutes with ZZ
    assert len(xx & zz) % 2 == 0
    assert len(layout.left.logical_x & zz) % 2 == 1
    assert layout.left.logical_z <= zz and layout.right.logical_z <= zz


def test_xx_support_weight_d3():
    layout = build_merged_layout(3, "BellDirect")
    xx, _ = merged_logical_supports(layout)
    assert len(xx) <= 6


def test_seam_xx_is_product_of_seam_x_checks():
    # the X_L1 X_L2 outcome is read off the seam X checks
    for d in (3, 5, 7):
        layout = build_merged_layout(d, "BellDirect")
        acc = set()
        for p in layout.seam_plaquettes:
            if p.basis == "X":
                acc ^= set(p.support)
        assert frozenset(acc) == layout.merged_logical_xx


def _crossing_gates(layout, label=Label.A):
    seq = round_sequence(layout, label, merged=True)
    return [g for g in seq.all_gates() if g.control.module != g.target.module]


@given(odd_d, protocols, st.sampled_from([Label.A, Label.B]))
def test_crossing_gate_count(d, protocol, label):
    layout = build_merged_layout(d, protocol)
    expected = d if layout.protocol.is_bell else 2 * d - 1
    assert len(_crossing_gates(layout, label)) == expected


def test_crossing_gate_examples():
    assert len(_crossing_gates(build_merged_layout(3, "BellDirect"))) == 3
    assert len(_crossing_gates(build_merged_layout(3, "BenchmarkDirect"))) == 5
    layout = build_merged_layout(5, "BellDirect")
    assert len(layout.seam_plaquettes) == 5
    assert all(len(p.ancillas) == 2 for p in layout.seam_plaquettes)


@given(odd_d, st.sampled_from([Protocol.BELL_DIRECT, Protocol.BELL_TELEPORTED]))
def test_bell_seam_confines_noise(d, protocol):
    layout = build_merged_layout(d, protocol)
    for p in layout.seam_plaquettes:
        left, right = p.ancillas
        assert left.module is Module.LEFT and right.module is Module.RIGHT
    for g in round_sequence(layout, Label.A).all_gates():
        if g.control.module != g.target.module:
            assert g.control.kind is not Kind.DATA and g.target.kind is not Kind.DATA


@given(odd_d, protocols)
def test_qubit_indices_and_coords_unique(d, protocol):
    layout = build_merged_layout(d, protocol)
    qs = layout.qubits
    assert [q.index for q in qs] == list(range(len(qs)))
    assert len({q.coord for q in qs}) == len(qs)
    assert not set(q.index for q in layout.left.data_qubits) & set(q.index for q in layout.right.data_qubits)


def test_layout_json_round_trips_through_json():
    layout = build_merged_layout(3, "BellTeleported")
    data = json.loads(layout.to_json())
    assert data["d"] == 3 and data["protocol"] == "BellTeleported"
    assert len(data["qubits"]) == len(layout.qubits)

import pytest
from hypothesis import given, strategies as st

from bellsurgery.geometry import Protocol, build_merged_layout, build_patch
from bellsurgery.schedule import (CROSSING_SLOT, NUM_SLOTS, Label, Policy, check_collisions, corner_order, render_table,
                                  round_sequence, sequence_for_round, swap_order)

odd_d = st.sampled_from([3, 5, 7])


@pytest.mark.parametrize("basis", ["X", "Z"])
def test_swap_is_an_involution(basis):
    order = corner_order(basis, Label.A)
    assert swap_order(swap_order(order, basis), basis) == order
    assert corner_order(basis, Label.B) == swap_order(order, basis)
    assert sorted(order) == sorted(corner_order(basis, Label.B))


def test_a_orders_avoid_hooks_along_logicals():
    # the last two corners of an X check run horizontally, of a Z check vertically
    assert corner_order("X", Label.A)[2:] == ("SW", "SE")
    assert corner_order("Z", Label.A)[2:] == ("NE", "SE")


def test_b_order_is_the_index_swap_of_a():
    # X: slots 1<->3 and 2<->4; Z: slots 1<->2 and 3<->4
    x, z = corner_order("X", Label.A), corner_order("Z", Label.A)
    assert corner_order("X", Label.B) == (x[2], x[3], x[0], x[1])
    assert corner_order("Z", Label.B) == (z[1], z[0], z[3], z[2])


def test_mirror_swaps_east_and_west():
    assert corner_order("X", Label.A, mirrored=True) == ("NE", "NW", "SE", "SW")


@given(st.integers(min_value=0, max_value=50))
def test_policies(r):
    assert sequence_for_round("RepeatA", r) is Label.A
    assert sequence_for_round(Policy.REPEAT_B, r) is Label.B
    assert sequence_for_round("Alternate", r) is (Label.A if r % 2 == 0 else Label.B)


def test_policy_parse_and_negative_round():
    assert Policy.parse("alternate") is Policy.ALTERNATE
    with pytest.raises(ValueError):
        Policy.parse("Sometimes")
    with pytest.raises(ValueError):
        sequence_for_round("Alternate", -1)


@given(odd_d, st.sampled_from(list(Protocol)), st.sampled_from([Label.A, Label.B]), st.booleans())
def test_no_qubit_used_twice_per_slot(d, protocol, label, merged):
    layout = build_merged_layout(d, protocol)
    seq = round_sequence(layout, label, merged=merged)
    check_collisions(seq)
    assert all(1 <= g.slot <= NUM_SLOTS for g in seq.all_gates())


@given(odd_d, st.sampled_from([Label.A, Label.B]))
def test_patch_round_touches_every_support_once(d, label):
    patch = build_patch(d)
    seq = round_sequence(patch, label)
    for p in patch.plaquettes:
        assert sorted(g.target.index for g in seq.gates[p.key]) == sorted(q.index for q in p.data_qubits)


@given(odd_d, st.sampled_from([Protocol.BELL_DIRECT, Protocol.BELL_TELEPORTED]), st.sampled_from([Label.A, Label.B]))
def test_bell_crossing_follows_local_gates(d, protocol, label):
    layout = build_merged_layout(d, protocol)
    seq = round_sequence(layout, label)
    for p in layout.seam_plaquettes:
        gates = seq.gates[p.key]
        crossing = [g for g in gates if g.crossing]
        assert len(crossing) == 1 and crossing[0].slot == CROSSING_SLOT
        assert gates[-1] is crossing[0]
        assert sorted(g.target.index for g in gates if not g.crossing) == sorted(q.index for q in p.data_qubits)


def test_collision_is_detected():
    layout = build_merged_layout(3, "BellDirect")
    seq = round_sequence(layout, Label.A)
    key = next(iter(seq.gates))
    g = seq.gates[key][0]
    seq.gates[key] = seq.gates[key] + (g,)
    with pytest.raises(ValueError):
        check_collisions(seq)


def test_render_table_lists_every_plaquette():
    layout = build_merged_layout(3, "BenchmarkDirect")
    seq = round_sequence(layout, Label.B)
    text = render_table(seq)
    assert text.splitlines()[0] == "sequence B"
    assert len(text.splitlines()) == 2 + len(seq.gates)
    assert "CrossCX" in text or "CrossCZ" in text

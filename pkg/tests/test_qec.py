from __future__ import annotations

import numpy as np
import pytest

from donorcluster.qec import (
    InfeasibleLayoutError,
    StabilizerCode,
    assign_to_chain,
    build_xzzx_toric,
    check_types,
    code_distance,
    gf2_rank,
    pauli_to_symplectic,
    schedule_is_local,
    symplectic_product,
    symplectic_to_pauli,
    syndrome_schedule,
)

RING = [4] * 6


@pytest.fixture(scope="module")
def code():
    return build_xzzx_toric(3, 2)


@pytest.fixture(scope="module")
def ring_assignment(code):
    return assign_to_chain(code, RING, closed=True)


def test_parameters(code):
    assert code.n_qubits == 12 and code.k == 2
    assert code.checks_commute()


def test_distance(code):
    assert code_distance(code, max_weight=2) is None
    assert code_distance(code) == 3


def test_logicals_commute_with_checks(code):
    s = code.check_matrix()
    l = code.logical_matrix()
    assert l.shape[0] == 2 * code.k
    assert not symplectic_product(l, s).any()
    # logicals come in anticommuting X/Z pairs
    p = symplectic_product(l, l)
    for i in range(code.k):
        assert p[2 * i, 2 * i + 1] == 1


@pytest.mark.parametrize("l1,l2", [(2, 2), (3, 2), (3, 3), (4, 2)])
def test_every_generated_code_is_valid(l1, l2):
    c = build_xzzx_toric(l1, l2)
    assert c.n_qubits == 2 * l1 * l2
    assert c.checks_commute()
    assert c.k == 2
    assert (check_types(c) == 2).all()


def test_symplectic_round_trip():
    for p in ("XIZY", "IIII", "ZZXX"):
        assert symplectic_to_pauli(pauli_to_symplectic(p)) == p


def test_gf2_rank():
    assert gf2_rank(np.array([[1, 1, 0], [0, 1, 1], [1, 0, 1]], dtype=np.uint8)) == 2


def test_ring_of_four_donor_clusters(code, ring_assignment):
    sched = syndrome_schedule(code, ring_assignment)
    assert schedule_is_local(sched, ring_assignment)
    assert len(sched) > 0
    placed = list(ring_assignment.data.values()) + ring_assignment.ancilla_nodes
    assert len(set(placed)) == len(placed)
    for k, size in enumerate(RING):
        assert sum(1 for c, _ in placed if c == k) <= size


def test_weight_four_check_gate_count(code, ring_assignment):
    sched = syndrome_schedule(code, ring_assignment)
    for c in range(len(code.checks)):
        assert sum(g.check == c for g in sched) <= 4
    plain = syndrome_schedule(code, ring_assignment, use_cxx=False)
    assert len(plain) == 4 * len(code.checks)
    assert len(sched) <= len(plain)


def test_permuting_slots_preserves_locality(code, ring_assignment):
    a = ring_assignment
    # reverse the slot order inside every cluster
    flip = lambda cs: (cs[0], RING[cs[0]] - 1 - cs[1])
    permuted = type(a)(a.chain, {q: flip(v) for q, v in a.data.items()}, {c: flip(v) for c, v in a.ancilla.items()}, a.window, a.closed)
    assert schedule_is_local(syndrome_schedule(code, permuted), permuted)


def test_single_small_cluster_infeasible(code):
    with pytest.raises(InfeasibleLayoutError):
        assign_to_chain(code, [2])


def test_open_chain_infeasible(code):
    with pytest.raises(InfeasibleLayoutError):
        assign_to_chain(code, [4, 4, 4])


def test_empty_code_has_empty_schedule():
    empty = StabilizerCode(4, [])
    a = assign_to_chain(empty, [4])
    assert syndrome_schedule(empty, a) == []


def test_bad_chain_rejected(code):
    with pytest.raises(ValueError):
        assign_to_chain(code, [])
    with pytest.raises(ValueError):
        assign_to_chain(code, RING, locality="cluster")

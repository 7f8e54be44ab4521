from __future__ import annotations

import itertools

import numpy as np
import pytest

from donorcluster.compiler import (
    CompileError,
    CompileOptions,
    GateSpec,
    compile_gate,
    direct_esr_count,
    equal_up_to_phase,
    flip_configurations,
    ideal_unitary,
    nmr_assisted_plan,
    pulse_inventory,
    verify_compiled,
)
from donorcluster.dynamics import PulseSequence, process_fidelity
from donorcluster.spectrum import esr_frequency_table
from donorcluster.spins import SpinSystem

PAIR_23 = SpinSystem.from_hyperfine([60, 170], [15, 120, 230], b0=1.35, j_exchange=100.0)


def _binary_cluster(n):
    # binary weights keep every signed sum distinct
    return [7.0 * 2**i for i in range(n)]


def _expand(conditions, sys):
    """Full nuclear configurations covered by recorded pulse conditions."""
    out = []
    for _, cfg in conditions:
        if len(cfg) == sys.n_nuclei:
            out.append(cfg)
            continue
        k = next(k for k in range(sys.n_electrons) if len(sys.nuclear_indices(k)) == len(cfg))
        idx = sys.nuclear_indices(k)
        for full in itertools.product("UD", repeat=sys.n_nuclei):
            if all(full[i] == ch for i, ch in zip(idx, cfg)):
                out.append("".join(full))
    return out


@pytest.mark.parametrize("n", range(1, 8))
def test_direct_intra_count_exhaustive(n):
    sys = SpinSystem.from_hyperfine(_binary_cluster(n), b0=1.35)
    table = esr_frequency_table(sys)
    for k in range(1, n + 1):
        gate = GateSpec("CZ", tuple(range(k)))
        seq = compile_gate(gate, sys, freq_table=table)
        assert seq.n_esr == direct_esr_count(n, k) == 2 ** (n - k)


@pytest.mark.parametrize("m", range(2, 10))
def test_direct_inter_count_exhaustive(m):
    for l in range(2, m + 1):
        gate = GateSpec("CZ", tuple(range(l)))
        assert len(flip_configurations(gate, m)) == direct_esr_count(m, l) == 2 ** (m - l)


@pytest.mark.parametrize("m", range(2, 8))
def test_direct_inter_compiled_count(m):
    half = m // 2
    left = [5.0 + 13.0 * i for i in range(half)]
    right = [3.0 + 29.0 * i for i in range(m - half)]
    sys = SpinSystem.from_hyperfine(left, right, b0=1.35, j_exchange=100.0, gradient_db=0.02)
    table = esr_frequency_table(sys)
    # alternate between the clusters so every gate is inter-cluster
    order = [q for pair in itertools.zip_longest(range(half), range(half, m)) for q in pair if q is not None]
    for l in range(2, m + 1):
        gate = GateSpec("CZ", tuple(sorted(order[:l])))
        assert gate.validate_for(sys) == "inter"
        seq = compile_gate(gate, sys, freq_table=table, options=CompileOptions(tolerance_mhz=0.0))
        assert seq.n_esr == 2 ** (m - l)


def test_pair_examples():
    toff = pulse_inventory(compile_gate(GateSpec("Toffoli", (0, 1, 2, 3), (4,)), PAIR_23))
    assert (toff["nmr"], toff["esr"]) == (2, 1)
    cnot = pulse_inventory(compile_gate(GateSpec("CNOT", (0,), (3,)), PAIR_23))
    assert (cnot["nmr"], cnot["esr"]) == (2, 8)


def test_three_donor_cz_counts():
    sys = SpinSystem.from_hyperfine([50, 110, 200], b0=1.35)
    assert compile_gate(GateSpec("CZ", (0, 1, 2)), sys).n_esr == 1
    assert compile_gate(GateSpec("CZ", (0, 1)), sys).n_esr == 2


def test_esr_assisted_transfer_overhead():
    # 2P-3P CZ between one nucleus of each cluster: 2^(a-1) transfer pulses, a = 2
    seq = compile_gate(GateSpec("CZ", (0, 3), scheme="esr_assisted"), PAIR_23)
    transfers = [p for p in seq if p.label.startswith("pi ") and "undo" not in p.label]
    assert len(transfers) == 2 ** (2 - 1)


def test_nmr_assisted_overhead():
    # an intra CZ on 2 of 3 nuclei: 2^(b-2) configurations mapped onto a reference, b = 3
    sys = SpinSystem.from_hyperfine([50, 110, 200], b0=1.35)
    seq = compile_gate(GateSpec("CZ", (0, 1), scheme="nmr_assisted"), sys)
    assert seq.n_esr == 2 ** (3 - 2)


def test_nmr_assisted_plan_prefers_fewer_flips():
    plan = nmr_assisted_plan(["DDD"], 3)
    assert plan == [(0, "D")]
    plan = nmr_assisted_plan(["UUU"], 3)
    assert plan == [(0, "U")]


@pytest.mark.parametrize(
    "gate,sys",
    [
        (GateSpec("CZ", (0, 1)), SpinSystem.from_hyperfine([50, 110, 200], b0=1.35)),
        (GateSpec("CZ", (0, 3), scheme="esr_assisted"), PAIR_23),
        (GateSpec("Toffoli", (0, 1, 2, 3), (4,)), PAIR_23),
        (GateSpec("CNOT", (0,), (3,)), PAIR_23),
        (GateSpec("CXX", (0,), (1, 2)), SpinSystem.from_hyperfine([50, 110, 200], b0=1.35)),
    ],
)
def test_shielding_completeness(gate, sys):
    seq = compile_gate(gate, sys, freq_table=esr_frequency_table(sys), options=CompileOptions(tolerance_mhz=0.0))
    covered = _expand(seq.metadata["conditions"], sys)
    assert sorted(covered) == sorted(flip_configurations(gate, sys.n_nuclei))
    assert len(set(covered)) == len(covered)


def test_cxx_equals_two_cnots():
    n = 3
    cxx = ideal_unitary(GateSpec("CXX", (0,), (1, 2)), n)
    a = ideal_unitary(GateSpec("CNOT", (0,), (1,)), n)
    b = ideal_unitary(GateSpec("CNOT", (0,), (2,)), n)
    assert equal_up_to_phase(cxx, a @ b)
    assert equal_up_to_phase(cxx, b @ a)


def test_empty_sequence_verifies_as_identity():
    sys = SpinSystem.from_hyperfine([40.0, 140.0], b0=1.35)
    v = verify_compiled(GateSpec("CZ", (0, 1)), PulseSequence(), sys)
    assert v.fidelity == pytest.approx(0.25)
    assert np.allclose(v.unitary, np.eye(4))


def test_direct_and_nmr_assisted_agree_in_simulation():
    sys = SpinSystem.from_hyperfine([40.0], [100.0], b0=1.35, j_exchange=20.0)
    us = []
    for scheme in ("direct", "nmr_assisted"):
        g = GateSpec("CZ", (0, 1), scheme=scheme)
        v = verify_compiled(g, compile_gate(g, sys), sys, steps_per_cycle=20)
        assert v.fidelity >= 0.99
        us.append(v.unitary)
    assert process_fidelity(us[0], us[1]) >= 0.99


def test_intra_schemes_agree_in_simulation():
    sys = SpinSystem.from_hyperfine([50.0, 110.0, 200.0], b0=1.35)
    for scheme in ("direct", "nmr_assisted"):
        g = GateSpec("CZ", (0, 1), scheme=scheme)
        v = verify_compiled(g, compile_gate(g, sys), sys, steps_per_cycle=20)
        assert v.passed, (scheme, v.message)


def test_esr_assisted_valid_with_gradient():
    # the transfer pulses need J^2 / delta small, which a field gradient provides
    sys = SpinSystem.from_hyperfine([40.0], [100.0], b0=1.35, j_exchange=5.0, gradient_db=0.01)
    g = GateSpec("CZ", (0, 1), scheme="esr_assisted")
    v = verify_compiled(g, compile_gate(g, sys), sys, steps_per_cycle=20)
    assert v.passed, v.message
    with pytest.raises(CompileError):
        compile_gate(GateSpec("CZ", (0, 1)), sys)


def test_compiled_cnot_simulates():
    sys = SpinSystem.from_hyperfine([117.0], [40.0, 100.0], b0=1.35)
    g = GateSpec("CNOT", (1,), (2,))
    v = verify_compiled(g, compile_gate(g, sys), sys, steps_per_cycle=20)
    assert v.passed, v.message


def test_crowded_lines_rejected():
    sys = SpinSystem.from_hyperfine([80.0, 80.2], b0=1.35)
    with pytest.raises(CompileError):
        compile_gate(GateSpec("CZ", (0,)), sys)


def test_esr_assisted_needs_two_clusters():
    sys = SpinSystem.from_hyperfine([50.0, 110.0], b0=1.35)
    with pytest.raises(CompileError):
        compile_gate(GateSpec("CZ", (0, 1), scheme="esr_assisted"), sys)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"kind": "SWAP"},
        {"kind": "CZ", "controls": (0,), "targets": (0,)},
        {"kind": "CNOT", "controls": (0, 1), "targets": (2,)},
        {"kind": "CXX", "controls": (), "targets": (1, 2)},
        {"kind": "Toffoli", "controls": (0,), "targets": ()},
        {"kind": "CZ", "scheme": "magic"},
    ],
)
def test_gate_spec_validation(kwargs):
    with pytest.raises(ValueError):
        GateSpec(**kwargs)


def test_gate_scope_inference():
    assert GateSpec("CZ", (0, 1)).validate_for(PAIR_23) == "intra"
    assert GateSpec("CZ", (0, 2)).validate_for(PAIR_23) == "inter"
    with pytest.raises(ValueError):
        GateSpec("CZ", (0, 9)).validate_for(PAIR_23)
    with pytest.raises(ValueError):
        GateSpec("CZ", (0, 2), scope="intra").validate_for(PAIR_23)


def test_direct_count_guards():
    with pytest.raises(ValueError):
        direct_esr_count(3, 0)
    with pytest.raises(ValueError):
        direct_esr_count(3, 4)

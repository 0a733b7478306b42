import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dft_matrix, kron_single, random_amps
from sawtooth_qc.core import ANGLE, MOMENTUM, ContractViolation, DomainError, MapParams, StateVector
from sawtooth_qc.gates import (
    CPHASE,
    HADAMARD,
    LAYOUT_COMPACT,
    LAYOUT_PAPER,
    PHASE,
    GateEvent,
    GateSchedule,
    apply_controlled_phase,
    apply_hadamard,
    apply_phase,
    bit_reversal_permutation,
    build_schedule,
    qft,
    run_events,
)
from sawtooth_qc.sawtooth import ideal_kick_array

H2 = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
S = 1 / math.sqrt(2)


def test_hadamard_definition_and_involution(rng):
    out = apply_hadamard(StateVector(np.array([1.0, 0.0])), 0)
    assert np.allclose(out.amps, [S, S], atol=1e-15)
    psi = StateVector(random_amps(rng, 16))
    back = apply_hadamard(apply_hadamard(psi, 2), 2)
    assert np.max(np.abs(back.amps - psi.amps)) < 1e-12


@pytest.mark.parametrize("n_q", [1, 2, 3, 4])
def test_hadamard_matches_kron_oracle(rng, n_q):
    for q in range(n_q):
        a = random_amps(rng, 2**n_q)
        out = apply_hadamard(StateVector(a), q).amps
        assert np.max(np.abs(out - kron_single(n_q, q, H2) @ a)) < 1e-13


def test_phase_examples():
    out = apply_phase(StateVector(np.array([S, S])), 0, math.pi / 2)
    assert np.allclose(out.amps, [S, 1j * S], atol=1e-15)
    psi = StateVector(np.array([0.6, 0.8j]))
    assert np.max(np.abs(apply_phase(psi, 0, 2 * math.pi).amps - psi.amps)) < 1e-12


@pytest.mark.parametrize("n_q", [2, 3, 4])
def test_phase_matches_kron_oracle(rng, n_q):
    for q in range(n_q):
        a = random_amps(rng, 2**n_q)
        gate = np.diag([1, np.exp(0.37j)])
        out = apply_phase(StateVector(a), q, 0.37).amps
        assert np.max(np.abs(out - kron_single(n_q, q, gate) @ a)) < 1e-13


def test_controlled_phase_examples():
    uni = StateVector(np.full(4, 0.5))
    assert np.array_equal(apply_controlled_phase(uni, 0, 1, 0.0).amps, uni.amps)
    out = apply_controlled_phase(uni, 0, 1, math.pi).amps
    assert np.allclose(out, [0.5, 0.5, 0.5, -0.5], atol=1e-15)


@pytest.mark.parametrize("n_q", [3, 4])
def test_controlled_phase_matches_dense_oracle(rng, n_q):
    dim = 2**n_q
    idx = np.arange(dim)
    for q1 in range(n_q):
        for q2 in range(n_q):
            if q1 == q2:
                continue
            a = random_amps(rng, dim)
            both = ((idx >> q1) & 1) & ((idx >> q2) & 1)
            expected = np.exp(0.9j * both) * a
            out = apply_controlled_phase(StateVector(a), q1, q2, 0.9).amps
            assert np.max(np.abs(out - expected)) < 1e-14


def test_gate_domain_errors():
    psi = StateVector(np.full(4, 0.5))
    with pytest.raises(DomainError):
        apply_hadamard(psi, 2)
    with pytest.raises(DomainError):
        apply_phase(psi, -1, 0.1)
    with pytest.raises(DomainError):
        apply_controlled_phase(psi, 1, 1, 0.1)
    with pytest.raises(DomainError):
        apply_controlled_phase(psi, 0, 5, 0.1)
    with pytest.raises(DomainError):
        GateEvent("X", (0,))
    with pytest.raises(DomainError):
        GateEvent(CPHASE, (0,), 0.1)
    with pytest.raises(DomainError):
        GateEvent(HADAMARD, (0,), 0.1)


def test_qft_of_delta_is_uniform():
    for n_q in (1, 3, 5):
        a = np.zeros(2**n_q, complex)
        a[0] = 1
        out = qft(StateVector(a, MOMENTUM), "backward")
        assert out.basis == ANGLE
        assert np.max(np.abs(out.amps - 2 ** (-n_q / 2))) < 1e-14


@pytest.mark.parametrize("n_q", [1, 2, 3, 4, 6])
def test_qft_matches_dense_dft(rng, n_q):
    dim = 2**n_q
    a = random_amps(rng, dim)
    out = qft(StateVector(a, MOMENTUM), "backward").amps
    assert np.max(np.abs(out - dft_matrix(dim, +1) @ a)) < 1e-12
    back = qft(StateVector(a, ANGLE), "forward").amps
    assert np.max(np.abs(back - dft_matrix(dim, -1) @ a)) < 1e-12


def test_qft_roundtrip_and_basis_contract(rng):
    a = random_amps(rng, 32)
    psi = StateVector(a, MOMENTUM)
    back = qft(qft(psi, "backward"), "forward")
    assert back.basis == MOMENTUM
    assert np.max(np.abs(back.amps - a)) < 1e-12
    with pytest.raises(ContractViolation):
        qft(psi, "forward")
    with pytest.raises(ContractViolation):
        qft(StateVector(a, ANGLE), "backward")
    with pytest.raises(DomainError):
        qft(psi, "sideways")


def test_bit_reversal_permutation_is_involution():
    for n_q in range(1, 8):
        p = bit_reversal_permutation(n_q)
        assert np.array_equal(p[p], np.arange(2**n_q))
    assert list(bit_reversal_permutation(3)) == [0, 4, 2, 6, 1, 5, 3, 7]


@pytest.mark.parametrize("n_q", range(2, 9))
def test_gate_counts(n_q):
    sched = build_schedule(MapParams(n_q), LAYOUT_PAPER)
    assert sched.hadamard_count == 2 * n_q
    assert sched.cp_count + sched.phase_count == 3 * n_q**2 - n_q
    assert sched.cp_count == 3 * n_q * (n_q - 1)
    compact = build_schedule(MapParams(n_q), LAYOUT_COMPACT)
    assert compact.hadamard_count == 2 * n_q
    assert compact.cp_count == 2 * n_q * (n_q - 1)
    c = sched.counts()
    assert c["total"] == c["hadamard"] + c["controlled_phase"] + c["single_phase"]


def test_two_qubit_hadamard_count():
    assert build_schedule(MapParams(2)).hadamard_count == 4


@pytest.mark.parametrize("layout", [LAYOUT_PAPER, LAYOUT_COMPACT])
@pytest.mark.parametrize("n_q", range(2, 8))
def test_schedule_equals_ideal_kick(rng, n_q, layout):
    params = MapParams(n_q)
    sched = build_schedule(params, layout)
    a = random_amps(rng, params.big_n)
    out = run_events(a.copy(), sched)
    assert np.max(np.abs(out - ideal_kick_array(a, params))) < 1e-10
    twice = run_events(out.copy(), sched)
    ref = ideal_kick_array(ideal_kick_array(a, params), params)
    assert np.max(np.abs(twice - ref)) < 1e-10


def test_marker_sits_after_first_qft():
    sched = build_schedule(MapParams(4))
    first = sched.events[: sched.marker]
    assert sum(ev.kind == HADAMARD for ev in first) == 4
    assert sched.segments["qft_backward"] == (0, sched.marker)
    assert all(ev.diagonal for ev in sched.events[slice(*sched.segments["kick_phase"])])


def test_jsonl_roundtrip():
    sched = build_schedule(MapParams(3))
    text = sched.to_jsonl()
    rec = json.loads(text.splitlines()[0])
    assert rec == {"kind": "H", "t": [2]}
    assert GateSchedule.events_from_jsonl(text) == sched.events


def test_operation_counter():
    params = MapParams(4)
    sched = build_schedule(params)
    counter = {}
    run_events(np.ones(16, complex) / 4, sched, counter=counter)
    expect = 16 * sched.hadamard_count + 8 * sched.phase_count + 4 * sched.cp_count
    assert counter["amplitude_updates"] == expect


def test_hooks_called_per_gate_and_once_at_marker():
    sched = build_schedule(MapParams(3))
    calls = {"gate": 0, "marker": 0}

    def after(_):
        calls["gate"] += 1

    def mark(_):
        calls["marker"] += 1

    run_events(np.ones(8, complex), sched, after_gate=after, at_marker=mark)
    assert calls == {"gate": len(sched.events), "marker": 1}


def test_diagonal_gates_commute(rng):
    dim = 32
    evs = [GateEvent(PHASE, (1,), 0.3), GateEvent(CPHASE, (0, 4), 1.1), GateEvent(CPHASE, (2, 3), -0.7), GateEvent(PHASE, (4,), 2.0)]
    a = random_amps(rng, dim)
    x, y = a.copy(), a.copy()
    for ev in evs:
        ev.apply_(x)
    for ev in reversed(evs):
        ev.apply_(y)
    assert np.max(np.abs(x - y)) < 1e-14
    total = sum(ev.phase_vector(dim) for ev in evs)
    assert np.max(np.abs(x - np.exp(1j * total) * a)) < 1e-13


def test_event_inverse(rng):
    a = random_amps(rng, 8)
    for ev in [GateEvent(HADAMARD, (1,)), GateEvent(PHASE, (2,), 0.4), GateEvent(CPHASE, (0, 2), 1.3)]:
        x = a.copy()
        ev.apply_(x)
        ev.inverse().apply_(x)
        assert np.max(np.abs(x - a)) < 1e-14


@settings(max_examples=60, deadline=None)
@given(
    n_q=st.integers(2, 6),
    kind=st.sampled_from([HADAMARD, PHASE, CPHASE]),
    phi=st.floats(-10, 10, allow_nan=False),
    seed=st.integers(0, 2**32 - 1),
    data=st.data(),
)
def test_every_gate_kernel_is_unitary(n_q, kind, phi, seed, data):
    q1 = data.draw(st.integers(0, n_q - 1))
    if kind == CPHASE:
        q2 = data.draw(st.integers(0, n_q - 1).filter(lambda q: q != q1))
        ev = GateEvent(kind, (q1, q2), phi)
    elif kind == PHASE:
        ev = GateEvent(kind, (q1,), phi)
    else:
        ev = GateEvent(kind, (q1,))
    a = random_amps(np.random.default_rng(seed), 2**n_q)
    ev.apply_(a)
    assert abs(np.linalg.norm(a) - 1.0) < 1e-12


@settings(max_examples=30, deadline=None)
@given(n_q=st.integers(1, 7), seed=st.integers(0, 2**32 - 1))
def test_qft_roundtrip_property(n_q, seed):
    a = random_amps(np.random.default_rng(seed), 2**n_q)
    back = qft(qft(StateVector(a, MOMENTUM), "backward"), "forward").amps
    assert np.max(np.abs(back - a)) < 1e-12

import dataclasses
import re
from collections import Counter

import numpy as np
import pytest

from surfsim.circuit import (
    STEPS_PER_ROUND,
    Circuit,
    GateKind,
    NoiseTag,
    build_parallel_circuit,
    build_parallel_round,
    build_serialized_circuit,
    build_serialized_round,
    serialize,
    validate_schedules,
)
from surfsim.noise import NoiseParams, gate_matrix, pauli_matrix
from surfsim.shots import shot_seed
from surfsim.statevector import run_shot
from surfsim.tableau import calibration_frame


def test_gate_identities():
    eye2, eye4 = np.eye(2), np.eye(4)
    assert np.allclose(gate_matrix(GateKind.RX90) @ gate_matrix(GateKind.RX90DAG), eye2, atol=1e-12)
    assert np.allclose(gate_matrix(GateKind.RZX90) @ gate_matrix(GateKind.RZX90DAG), eye4, atol=1e-12)
    rzx = gate_matrix(GateKind.RZX90)
    assert np.allclose(rzx @ rzx, -1j * pauli_matrix("XZ"), atol=1e-12)
    assert np.allclose(np.linalg.matrix_power(rzx, 4), -eye4, atol=1e-12)
    assert np.allclose(gate_matrix(GateKind.RZ90), np.diag([np.exp(-1j * np.pi / 4), np.exp(1j * np.pi / 4)]))


@pytest.mark.parametrize("d,checks", [(3, 8), (5, 24)])
def test_parallel_round_shape(d, checks, request):
    layout = request.getfixturevalue(f"layout{d}")
    rnd = build_parallel_round(layout)
    assert rnd.steps_per_round == STEPS_PER_ROUND == 11
    assert {op.step for op in rnd.ops} == set(range(11))
    assert sum(op.gate is GateKind.MEASURE_Z for op in rnd.ops) == checks
    assert rnd.n_registers == 2 * d * d - 1
    # one op per register per step, except MEASURE_Z + RESET on ancillas at step 10
    per = Counter((q, op.step) for op in rnd.ops for q in op.qubits)
    assert len(per) == rnd.n_registers * 11
    doubled = {key for key, n in per.items() if n == 2}
    assert set(per.values()) == {1, 2}
    assert doubled == {(a, 10) for a in range(d * d, 2 * d * d - 1)}
    for a in range(d * d, 2 * d * d - 1):
        assert [op.gate for op in rnd.ops_on(a) if op.step == 10] == [GateKind.MEASURE_Z, GateKind.RESET]


@pytest.mark.parametrize("d", [3, 5])
def test_serialized_registers(d, request):
    layout = request.getfixturevalue(f"layout{d}")
    assert build_serialized_round(layout).n_registers == d * d + 1


def test_op_invariants(parallel3):
    for op in parallel3.ops:
        if op.gate in (GateKind.RZX90, GateKind.RZX90DAG):
            assert len(op.qubits) == 2
            assert op.noise_tag is NoiseTag.TWO_QUBIT_AFTER_CR
        if op.gate in (GateKind.MEASURE_Z, GateKind.RESET):
            assert op.noise_tag is not NoiseTag.COHERENT_ROTATION
        assert 0 <= op.step < 11
    with pytest.raises(ValueError):
        dataclasses.replace(parallel3.ops[0], gate=GateKind.RZX90, qubits=(0,))


@pytest.mark.parametrize("d", [3, 5])
def test_validate_schedules_pass(d, request):
    layout = request.getfixturevalue(f"layout{d}")
    report = validate_schedules(build_parallel_circuit(layout, 2), build_serialized_circuit(layout, 2))
    assert report.passed, str(report)


def test_per_qubit_sequences_match(layout3):
    par = build_parallel_circuit(layout3, 1)
    ser = build_serialized_circuit(layout3, 1)
    for q in range(9):
        a = [(o.gate, o.noise_tag, o.uid) for o in par.ops_on(q)]
        b = [(o.gate, o.noise_tag, o.uid) for o in ser.ops_on(q)]
        assert a == b


def test_swapped_blocks_detected(layout3):
    par = build_parallel_circuit(layout3, 1, readout=False)
    ser = serialize(par)
    ops = list(ser.ops)
    reg = layout3.n_data
    # run the second check block before the first one
    origin0 = next(op.origin for op in ops if op.origin != -1)
    origin1 = next(op.origin for op in ops if op.origin not in (-1, origin0))
    block0 = [op for op in ops if op.origin == origin0]
    block1 = [op for op in ops if op.origin == origin1]
    shared = {q for op in block0 for q in op.qubits if q < reg} & {q for op in block1 for q in op.qubits if q < reg}
    assert shared, "pick two checks that share a data qubit"
    rest = [op for op in ops if op.origin not in (origin0, origin1)]
    broken = Circuit(tuple(block1 + block0 + rest), ser.n_registers, 11, "serialized", 1, layout3, False)
    report = validate_schedules(par, broken)
    assert not report.passed
    assert report.first_offending is not None
    labels = {s.serial_order: s.label for s in layout3.stabilizers}
    text = "\n".join(report.violations)
    assert labels[origin0] in text and labels[origin1] in text


def test_serialize_rejects_serialized(serial3):
    with pytest.raises(ValueError):
        serialize(serial3)


def test_dump_format(serial3):
    text = serial3.dump()
    lines = text.splitlines()
    assert lines[0].startswith("# schedule=serialized d=3 rounds=3")
    pat = re.compile(r"^\d+ \d+ [A-Z0-9_]+ \d+( \d+)? (OneQubitStep|TwoQubitAfterCR|CoherentRotation|None)$")
    assert all(pat.match(line) for line in lines[1:])
    assert len(lines) == len(serial3.ops) + 1


def test_dumps_identical_between_builds(layout3):
    assert build_serialized_circuit(layout3, 2).dump() == build_serialized_circuit(layout3, 2).dump()


def test_noise_free_round_deterministic(serial3):
    # an ideal round on the code state measures every check with a fixed outcome
    frame = calibration_frame(serial3)
    assert np.all(frame.syndromes == frame.syndromes[0])
    for i in range(5):
        rec = run_shot(serial3, NoiseParams(0.0), frame, shot_seed(3, i))
        assert not rec.syndromes.any()


def test_serialized_equals_parallel_under_noise(layout3):
    # both schedules are the same circuit up to reordering of commuting ops
    params = NoiseParams(0.02, 0.4)
    par = build_parallel_circuit(layout3, 2)
    ser = build_serialized_circuit(layout3, 2)
    fp, fs = calibration_frame(par), calibration_frame(ser)
    for i in range(15):
        seed = shot_seed(21, i)
        assert run_shot(par, params, fp, seed, fuse=False) == run_shot(ser, params, fs, seed)

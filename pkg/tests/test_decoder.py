import numpy as np
import pytest

from surfsim.circuit import build_parallel_circuit, build_serialized_circuit
from surfsim.decoder import (
    Correction,
    DetectionEvent,
    build_decoding_graphs,
    build_matching_graph,
    correction_from_pairing,
    decode_shot,
    detection_events,
    logical_outcome,
    mwpm,
    write_events,
)
from surfsim.frames import enumerate_faults, propagate
from surfsim.matching import BOUNDARY
from surfsim.noise import NoiseParams
from surfsim.shots import Program, ShotRecord, shot_seed
from surfsim.tableau import calibration_frame, run_shot_tableau


def _record(layout, rounds, flips=(), final=()):
    syn = np.zeros((rounds, len(layout.stabilizers)), dtype=np.uint8)
    for r, col in flips:
        syn[r, col] = 1
    fin = np.zeros(layout.n_data, dtype=np.uint8)
    for q in final:
        fin[q - 1] = 1
    return ShotRecord(syn, fin, 0)


def _z_col(layout, product):
    return next(s.serial_order for s in layout.z_stabilizers if s.product() == product)


@pytest.fixture(scope="module")
def graphs3(serial3):
    return build_decoding_graphs(serial3)


@pytest.fixture(scope="module")
def graphs5(layout5):
    return build_decoding_graphs(build_serialized_circuit(layout5, 5))


def test_no_events_for_quiet_record(layout3):
    assert detection_events(_record(layout3, 3), layout3) == []


def test_data_x_between_rounds(layout5):
    # X7 between rounds 2 and 3: the two checks containing 7 read 1 from round 3 on,
    # and the final data readout carries the flip as well
    cols = [_z_col(layout5, "Z1Z2Z6Z7"), _z_col(layout5, "Z7Z8Z12Z13")]
    rec = _record(layout5, 5, [(r, c) for r in (3, 4) for c in cols], final=[7])
    events = detection_events(rec, layout5)
    assert {e.round for e in events} == {3}
    assert all(e.kind == "Z" for e in events)
    assert {layout5.z_stabilizers[e.stabilizer_index - 1].product() for e in events} == {"Z1Z2Z6Z7", "Z7Z8Z12Z13"}


def test_measurement_flip_gives_timelike_pair(layout3):
    col = layout3.z_stabilizers[1].serial_order
    rec = _record(layout3, 3, [(1, col)])
    assert detection_events(rec, layout3) == [DetectionEvent(1, 2, "Z"), DetectionEvent(2, 2, "Z")]
    xcol = layout3.x_stabilizers[0].serial_order
    rec = _record(layout3, 3, [(2, xcol)])
    assert detection_events(rec, layout3) == [DetectionEvent(2, 1, "X")]


def test_dimension_mismatch(layout3, layout5):
    with pytest.raises(ValueError):
        detection_events(_record(layout5, 3), layout3)


def test_single_data_error_pairs_events(layout3, graphs3):
    events = detection_events(_record(layout3, 3, final=[5]), layout3)
    assert len(events) == 2
    mg = build_matching_graph(events, layout3, 3, "Z", graphs3)
    assert mg.weights[0][1] <= min(mg.boundary_weights)
    assert mwpm(mg) == [(0, 1)]


def test_boundary_adjacent_event(layout3, graphs3):
    # an X on corner qubit 1 before readout lights only one Z check
    events = detection_events(_record(layout3, 3, final=[1]), layout3)
    assert len(events) == 1
    mg = build_matching_graph(events, layout3, 3, "Z", graphs3)
    assert mg.boundary_weights == [1]
    assert mwpm(mg) == [(0, BOUNDARY)]


def test_zero_events(layout3, graphs3):
    mg = build_matching_graph([], layout3, 3, "Z", graphs3)
    assert mwpm(mg) == []
    assert correction_from_pairing(mg, []) == Correction(frozenset())


def test_default_graph_is_serialized_circuit(layout3):
    events = detection_events(_record(layout3, 3, final=[5]), layout3)
    mg = build_matching_graph(events, layout3, 3)
    assert len(mg.events) == 2 and mg.weights[0][1] == 1


def test_weights_symmetric(layout3, graphs3):
    rng = np.random.default_rng(0)
    g = graphs3.z
    for _ in range(50):
        u, v = rng.integers(0, g.n_nodes + 1, size=2)
        assert g.distance(u, v) == g.distance(v, u)
        assert g.path_flips(u, v) == g.path_flips(v, u)


def test_noise_free_logical_zero(layout3, graphs3):
    assert decode_shot(_record(layout3, 3), graphs3).logical == 0


@pytest.mark.parametrize("q", range(1, 10))
def test_every_single_data_x_corrected(layout3, graphs3, q):
    for r in range(3):
        rows = [(rr, s.serial_order) for rr in range(r, 3) for s in layout3.z_stabilizers if q in s.support]
        rec = _record(layout3, 3, rows, final=[q])
        assert decode_shot(rec, graphs3).logical == 0


def test_distance_saturation_d5(layout5, graphs5):
    # three X errors down the first column (the X_L direction) are one short of
    # X_L's weight 5; matching completes the column and flips Z_L
    rec = _record(layout5, 5, final=[1, 6, 11])
    assert decode_shot(rec, graphs5).logical == 1
    rec = _record(layout5, 5, final=[1, 6])
    assert decode_shot(rec, graphs5).logical == 0


def test_logical_outcome_parity(layout3):
    rec = _record(layout3, 3, final=[1])
    assert logical_outcome(rec, Correction(frozenset()), layout3) == 1
    assert logical_outcome(rec, Correction(frozenset({1})), layout3) == 0
    assert logical_outcome(rec, Correction(frozenset({4})), layout3) == 1


def test_decoder_is_pure(serial3, graphs3):
    frame = calibration_frame(serial3)
    rec = run_shot_tableau(serial3, NoiseParams(0.02), frame, shot_seed(1, 3))
    a, b = decode_shot(rec, graphs3), decode_shot(rec, graphs3)
    assert a.logical == b.logical and a.correction == b.correction


@pytest.mark.parametrize("d,builder", [(3, build_serialized_circuit), (3, build_parallel_circuit),
                                       (5, build_serialized_circuit)])
def test_frame_propagation_matches_tableau(d, builder, request):
    # a sample of single faults: the frame prediction equals a tableau run with the fault injected
    layout = request.getfixturevalue(f"layout{d}")
    circuit = builder(layout, d)
    program = Program.compile(circuit, NoiseParams(0.0))
    faults = enumerate_faults(program)
    effects = propagate(program, faults)
    frame = calibration_frame(circuit)
    rng = np.random.default_rng(d)
    for f in rng.choice(len(faults), size=60, replace=False):
        fault = faults[f]
        op_qubits = program.codes[fault.pos][1]
        label = "".join(fault.label[fault.qubits.index(q)] if q in fault.qubits else "I" for q in op_qubits)
        rec = run_shot_tableau(circuit, NoiseParams(0.0), frame, int(f), injected={fault.uid: label},
                               program=program)
        assert np.array_equal(rec.syndromes.astype(bool), effects.syndrome_flips[f])
        # individual final bits carry the random frame; compare check and logical parities
        hz = layout.check_matrix("Z")
        got = (hz @ rec.final_data_bits) % 2
        want = (hz @ effects.final_flips[f].astype(int)) % 2
        assert np.array_equal(got, want)


@pytest.mark.parametrize("builder", [build_serialized_circuit, build_parallel_circuit])
def test_graph_has_no_hyperedges_or_conflicts(layout3, builder):
    g = build_decoding_graphs(builder(layout3, 3))
    assert g.z.hyperedge_faults == 0 and g.z.conflicting_edges == 0
    assert g.x.hyperedge_faults == 0


def test_event_dump(tmp_path, layout3):
    path = tmp_path / "events.csv"
    rec = _record(layout3, 3, final=[5])
    write_events(path, [rec], layout3)
    lines = path.read_text().splitlines()
    assert lines[0] == "shot,kind,round,stabilizer_index"
    assert len(lines) == 3 and all(line.split(",")[1] == "Z" for line in lines[1:])

import math
from collections import Counter

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from surfsim.circuit import GateKind, build_parallel_round, build_serialized_round
from surfsim.noise import (
    PAULI_PAIRS,
    CRNoiseMode,
    NoiseParams,
    coherent_overrotation_unitary,
    depolarizing_1q_probs,
    depolarizing_2q_probs,
    gate_matrix,
    noise_locations,
    pauli_1q_from_uniform,
    pauli_2q_from_uniform,
    sample_depolarizing_1q,
    sample_depolarizing_2q,
    stochastic_counts,
)

N = 10**6


def _freqs(fn, p, seed):
    u = np.random.default_rng(seed).random(N)
    return Counter(fn(float(x), p) for x in u)


def test_zero_p_is_identity():
    rng = np.random.default_rng(0)
    params = NoiseParams(0.0)
    assert all(sample_depolarizing_1q(params, rng) == "I" for _ in range(1000))
    assert all(sample_depolarizing_2q(params, rng) == ("I", "I") for _ in range(1000))


def test_1q_frequencies():
    p = 0.03
    counts = _freqs(pauli_1q_from_uniform, p, 1)
    sigma = math.sqrt(0.01 * 0.99 / N)
    for label in "XYZ":
        assert abs(counts[label] / N - p / 3) < 3 * sigma


def test_1q_fully_depolarizing():
    counts = _freqs(pauli_1q_from_uniform, 0.75, 2)
    sigma = math.sqrt(0.25 * 0.75 / N)
    for label in "IXYZ":
        assert abs(counts[label] / N - 0.25) < 3 * sigma


def test_2q_frequencies():
    p = 0.015
    counts = _freqs(pauli_2q_from_uniform, p, 3)
    sigma = math.sqrt(0.001 * 0.999 / N)
    for pair in PAULI_PAIRS[1:]:
        assert abs(counts[pair] / N - p / 15) < 3 * sigma
    assert abs(counts[("I", "I")] / N - (1 - p)) < 3 * math.sqrt(p * (1 - p) / N)


@given(st.floats(0, 0.999))
def test_probabilities_normalised(p):
    assert math.isclose(sum(depolarizing_1q_probs(p).values()), 1.0)
    assert math.isclose(sum(depolarizing_2q_probs(p).values()), 1.0)
    assert len(depolarizing_2q_probs(p)) == 16


@given(st.floats(0, 0.999), st.floats(0, 0.999999))
def test_uniform_maps_to_nonidentity_only_below_p(p, u):
    assert (pauli_1q_from_uniform(u, p) != "I") == (u < p)
    assert (pauli_2q_from_uniform(u, p) != ("I", "I")) == (u < p)


def test_params_validation():
    with pytest.raises(ValueError):
        NoiseParams(1.0)
    with pytest.raises(ValueError):
        NoiseParams(-0.1)
    with pytest.raises(ValueError):
        NoiseParams(0.01, -1)
    with pytest.raises(ValueError):
        NoiseParams(0.9, 2.0)  # 2 c sqrt(p) > pi
    assert NoiseParams(0.01, 0.5).theta == pytest.approx(0.1)


ROT = [GateKind.RX90, GateKind.RX90DAG, GateKind.RZ90, GateKind.RZX90, GateKind.RZX90DAG]


@pytest.mark.parametrize("gate", ROT)
def test_overrotation_unitary(gate):
    u = coherent_overrotation_unitary(gate, NoiseParams(0.01, 0.7))
    assert np.allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=1e-12)
    assert np.allclose(coherent_overrotation_unitary(gate, NoiseParams(0.01, 0.0)), np.eye(u.shape[0]))


@pytest.mark.parametrize("gate", ROT)
def test_overrotation_extends_the_gate(gate):
    # over-rotation commutes with the gate and lengthens its angle
    params = NoiseParams(0.01, 1.0)
    g, u = gate_matrix(gate), coherent_overrotation_unitary(gate, params)
    assert np.allclose(g @ u, u @ g)
    from surfsim.circuit import GENERATORS
    from surfsim.noise import rotation_matrix

    gen, sense = GENERATORS[gate]
    assert np.allclose(u @ g, rotation_matrix(gen, sense * (math.pi / 4 + params.half_angle)))


def test_non_rotation_rejected():
    for gate in (GateKind.MEASURE_Z, GateKind.RESET, GateKind.WAIT):
        with pytest.raises(ValueError):
            coherent_overrotation_unitary(gate, NoiseParams(0.01, 1.0))


@pytest.mark.parametrize("p,c", [(1e-3, 1.0), (1e-2, 0.5)])
def test_bit_flip_probability(p, c):
    # an identity-equivalent RX90 . RX90DAG pair with both over-rotations cancels,
    # so look at the over-rotation alone on |0>
    u = coherent_overrotation_unitary(GateKind.RX90, NoiseParams(p, c))
    p1 = abs(u[1, 0]) ** 2
    expected = float(mpmath.sin(c * mpmath.sqrt(p)) ** 2)
    assert p1 == pytest.approx(expected, rel=1e-12)
    assert NoiseParams(p, c).p_flip == pytest.approx(expected, rel=1e-12)


def test_bit_flip_frozen_value():
    # sin^2(sqrt(1e-3)) evaluated with mpmath at 30 digits
    assert NoiseParams(1e-3, 1.0).p_flip == pytest.approx(9.99666711107937e-4, rel=1e-12)


def test_every_register_one_channel_per_step(layout5):
    rnd = build_parallel_round(layout5)
    annotated = noise_locations(rnd, NoiseParams(0.01))
    counts = stochastic_counts(annotated)
    assert set(counts.values()) == {11}
    assert len(counts) == rnd.n_registers
    per_step = Counter()
    for item in annotated:
        for ch in item.channels:
            for q in ch.qubits:
                per_step[(q, item.op.step)] += 1
    assert set(per_step.values()) == {1}


def test_cr_channels(layout3):
    rnd = build_parallel_round(layout3)
    for item in noise_locations(rnd, NoiseParams(0.01)):
        if item.op.gate in (GateKind.RZX90, GateKind.RZX90DAG):
            assert [ch.kind for ch in item.channels] == ["DEPOL2"]
        elif item.op.gate is GateKind.RESET:
            assert item.channels == ()
    stacked = noise_locations(rnd, NoiseParams(0.01, cr_noise_mode=CRNoiseMode.STACK))
    for item in stacked:
        if item.op.gate is GateKind.RZX90:
            assert sorted(ch.kind for ch in item.channels) == ["DEPOL1", "DEPOL1", "DEPOL2"]


def test_readout_channel_acts_before_measurement(layout3):
    for item in noise_locations(build_parallel_round(layout3), NoiseParams(0.01)):
        for ch in item.channels:
            assert ch.before == (item.op.gate is GateKind.MEASURE_Z)


def test_coherent_only_on_rotations(layout3):
    rnd = build_parallel_round(layout3)
    assert not any(i.has_coherent for i in noise_locations(rnd, NoiseParams(0.01, 0.0)))
    for item in noise_locations(rnd, NoiseParams(0.01, 0.5)):
        rotation = item.op.gate in ROT
        assert item.has_coherent == rotation


def test_serialized_noise_multiset_matches(layout3):
    a = noise_locations(build_parallel_round(layout3), NoiseParams(0.01, 0.3))
    b = noise_locations(build_serialized_round(layout3), NoiseParams(0.01, 0.3))
    key = lambda it: (it.op.uid, it.coherent_angle, tuple((c.kind, c.before) for c in it.channels))  # noqa: E731
    assert sorted(map(key, a)) == sorted(map(key, b))
    data = lambda ann: stochastic_counts([i for i in ann if all(q < 9 for q in i.op.qubits)])  # noqa: E731
    assert data(a) == data(b)

"""Circuit-level noise: depolarizing channels and coherent over-rotation.

Each stochastic location consumes one uniform draw ``u``.  The location is
hit when ``u < p`` and the Pauli is then picked from ``u / p``, so one draw
decides both occurrence and type and every engine that reads the same draw
applies the same Pauli.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .circuit import GENERATORS, ROTATIONS, Circuit, CircuitOp, GateKind, NoiseTag

PAULIS = ("I", "X", "Y", "Z")
PAULI_PAIRS = tuple((a, b) for a in PAULIS for b in PAULIS)

_MATS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class CRNoiseMode(str, enum.Enum):
    REPLACE = "replace"
    STACK = "stack"


@dataclass(frozen=True)
class NoiseParams:
    """Physical error probability ``p`` and coherent ratio ``c``."""

    p: float
    c: float = 0.0
    cr_noise_mode: CRNoiseMode = CRNoiseMode.REPLACE

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise ValueError(f"p must lie in [0, 1), got {self.p}")
        if self.c < 0.0:
            raise ValueError(f"c must be >= 0, got {self.c}")
        if self.theta >= math.pi:
            raise ValueError(f"over-rotation angle 2c*sqrt(p) = {self.theta:.3f} must stay below pi")
        object.__setattr__(self, "cr_noise_mode", CRNoiseMode(self.cr_noise_mode))

    @property
    def theta(self) -> float:
        """Full over-rotation angle 2 c sqrt(p)."""
        return 2.0 * self.c * math.sqrt(self.p)

    @property
    def half_angle(self) -> float:
        return self.c * math.sqrt(self.p)

    @property
    def p_flip(self) -> float:
        return math.sin(self.half_angle) ** 2


def pauli_1q_from_uniform(u: float, p: float) -> str:
    if u >= p:
        return "I"
    return PAULIS[1 + min(int(u / p * 3), 2)]


def pauli_2q_from_uniform(u: float, p: float) -> tuple[str, str]:
    if u >= p:
        return ("I", "I")
    return PAULI_PAIRS[1 + min(int(u / p * 15), 14)]


def sample_depolarizing_1q(params: NoiseParams, rng: np.random.Generator) -> str:
    return pauli_1q_from_uniform(rng.random(), params.p)


def sample_depolarizing_2q(params: NoiseParams, rng: np.random.Generator) -> tuple[str, str]:
    return pauli_2q_from_uniform(rng.random(), params.p)


def depolarizing_1q_probs(p: float) -> dict[str, float]:
    return {"I": 1 - p, "X": p / 3, "Y": p / 3, "Z": p / 3}


def depolarizing_2q_probs(p: float) -> dict[tuple[str, str], float]:
    return {pair: (1 - p if pair == ("I", "I") else p / 15) for pair in PAULI_PAIRS}


def pauli_matrix(label: str) -> np.ndarray:
    """Matrix of a Pauli string; character k acts on qubit k, which is bit k
    of the basis index (little-endian)."""
    m = np.ones((1, 1), dtype=complex)
    for ch in label:
        m = np.kron(_MATS[ch], m)
    return m


def rotation_matrix(generator: str, angle: float) -> np.ndarray:
    """exp(-i * angle * G) for a Pauli string G."""
    g = pauli_matrix(generator)
    return math.cos(angle) * np.eye(g.shape[0]) - 1j * math.sin(angle) * g


def gate_matrix(gate: GateKind) -> np.ndarray:
    if gate not in ROTATIONS:
        raise ValueError(f"{gate.value} is not a unitary rotation gate")
    gen, sense = GENERATORS[gate]
    return rotation_matrix(gen, sense * math.pi / 4)


def coherent_overrotation_unitary(gate: GateKind, params: NoiseParams) -> np.ndarray:
    """exp(-i c sqrt(p) A) in the rotation sense of ``gate``."""
    if gate not in ROTATIONS:
        raise ValueError(f"no over-rotation for {gate.value}; only rotation gates carry coherent noise")
    gen, sense = GENERATORS[gate]
    return rotation_matrix(gen, sense * params.half_angle)


# Draw columns per op: stochastic channel, measurement outcome, stacked extra.
DRAW_CHANNEL, DRAW_MEASURE, DRAW_EXTRA = 0, 1, 2
N_DRAW_COLUMNS = 3


@dataclass(frozen=True)
class Channel:
    kind: str  # "DEPOL1" or "DEPOL2"
    qubits: tuple[int, ...]
    column: int
    before: bool = False  # acts before the op (readout error) instead of after


@dataclass(frozen=True)
class NoisyOp:
    op: CircuitOp
    coherent_angle: float  # signed over-rotation, 0 when absent
    channels: tuple[Channel, ...]

    @property
    def has_coherent(self) -> bool:
        return self.coherent_angle != 0.0


def op_channels(op: CircuitOp, mode: CRNoiseMode) -> tuple[Channel, ...]:
    if op.noise_tag is NoiseTag.TWO_QUBIT_AFTER_CR:
        chans = [Channel("DEPOL2", op.qubits, DRAW_CHANNEL)]
        if mode is CRNoiseMode.STACK:
            chans.append(Channel("DEPOL1", (op.qubits[0],), DRAW_MEASURE))
            chans.append(Channel("DEPOL1", (op.qubits[1],), DRAW_EXTRA))
        return tuple(chans)
    if op.noise_tag is NoiseTag.ONE_QUBIT_STEP:
        return (Channel("DEPOL1", op.qubits, DRAW_CHANNEL, op.gate is GateKind.MEASURE_Z),)
    return ()


def noise_locations(circuit: Circuit, params: NoiseParams) -> list[NoisyOp]:
    """Attach the stochastic channels and coherent over-rotations to every op."""
    out = []
    for op in circuit.ops:
        angle = 0.0
        if op.gate in ROTATIONS and params.half_angle > 0.0:
            angle = GENERATORS[op.gate][1] * params.half_angle
        out.append(NoisyOp(op, angle, op_channels(op, params.cr_noise_mode)))
    return out


def stochastic_counts(annotated: list[NoisyOp], round_index: Optional[int] = None) -> dict[int, int]:
    """Number of stochastic channels touching each register."""
    counts: dict[int, int] = {}
    for item in annotated:
        if round_index is not None and item.op.round != round_index:
            continue
        for ch in item.channels:
            for q in ch.qubits:
                counts[q] = counts.get(q, 0) + 1
    return counts

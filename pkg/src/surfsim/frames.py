"""Pauli-frame propagation of single faults through a Clifford circuit.

Every possible single Pauli fault of the noise model is tracked at once as
one row of boolean X/Z frame arrays.  The result says which measurement
outcomes each fault flips, which is exactly what the decoder needs to know
about the circuit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .noise import PAULI_PAIRS, PAULIS
from .shots import _MEAS, _RESET, _ROT, Program


@dataclass(frozen=True)
class Fault:
    pos: int  # program position
    uid: int
    before: bool  # acts before the op (readout channel) instead of after
    label: str  # Pauli letters on ``qubits``
    qubits: tuple[int, ...]


@dataclass
class FaultEffects:
    faults: list[Fault]
    syndrome_flips: np.ndarray  # (n_faults, rounds, n_checks) bool
    final_flips: np.ndarray  # (n_faults, n_data) bool


def enumerate_faults(program: Program) -> list[Fault]:
    """All single non-identity Paulis of every stochastic channel."""
    faults = []
    seen = set()
    for pos, (_, _, _, _, chans) in enumerate(program.codes):
        uid = int(program.uids[pos])
        for kind, cq, _, before in chans:
            labels = PAULIS[1:] if kind == "DEPOL1" else ["".join(pp) for pp in PAULI_PAIRS[1:]]
            for label in labels:
                key = (pos, before, label, cq)
                if key not in seen:
                    seen.add(key)
                    faults.append(Fault(pos, uid, before, label, cq))
    return faults


def _letter_bits(ch: str) -> tuple[bool, bool]:
    return ch in "XY", ch in "ZY"


def propagate(program: Program, faults: list[Fault]) -> FaultEffects:
    """Measurement flips caused by each fault, assuming ideal Clifford gates."""
    circuit = program.circuit
    n_f = len(faults)
    n_reg = circuit.n_registers
    x = np.zeros((n_f, n_reg), dtype=bool)
    z = np.zeros((n_f, n_reg), dtype=bool)
    syn = np.zeros((n_f, circuit.rounds, program.n_checks), dtype=bool)
    fin = np.zeros((n_f, circuit.n_data), dtype=bool)

    by_pos: dict[int, tuple[list, list]] = {}
    for i, f in enumerate(faults):
        by_pos.setdefault(f.pos, ([], []))[0 if f.before else 1].append(i)

    def inject(rows):
        for i in rows:
            f = faults[i]
            for ch, q in zip(f.label, f.qubits):
                bx, bz = _letter_bits(ch)
                x[i, q] ^= bx
                z[i, q] ^= bz

    for pos, (code, qubits, gen, angle, _) in enumerate(program.codes):
        pre, post = by_pos.get(pos, ((), ()))
        inject(pre)
        if code == _ROT:
            letters = [(ch, q) for ch, q in zip(gen, qubits) if ch != "I"]
            anti = np.zeros(n_f, dtype=bool)
            for ch, q in letters:
                gx, gz = _letter_bits(ch)
                if gz:
                    anti ^= x[:, q]
                if gx:
                    anti ^= z[:, q]
            if anti.any():
                for ch, q in letters:
                    gx, gz = _letter_bits(ch)
                    if gx:
                        x[anti, q] ^= True
                    if gz:
                        z[anti, q] ^= True
        elif code == _MEAS:
            q = qubits[0]
            slot = program.slots[pos]
            if slot[0] == "syn":
                syn[:, slot[1], slot[2]] = x[:, q]
            elif slot[1] is not None:
                fin[:, slot[1]] = x[:, q]
        elif code == _RESET:
            q = qubits[0]
            x[:, q] = False
            z[:, q] = False
        inject(post)
    return FaultEffects(faults, syn, fin)

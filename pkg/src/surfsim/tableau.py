"""Clifford stabilizer tableau engine, used to cross-check the state vector.

Rows 0..n-1 are destabilizers, rows n..2n-1 stabilizers, row 2n is scratch.
Row k stands for (-1)^r[k] times the Pauli with X part x[k] and Z part z[k]
(x = z = 1 meaning Y).  The circuit's rotations by +-pi/4 about a Pauli
string G map a row P that anticommutes with G to +-i P G and leave the
others alone, which is all the Clifford conjugation this circuit needs.
"""

from __future__ import annotations

import math
from typing import Optional

import numba
import numpy as np

from .circuit import Circuit
from .noise import NoiseParams
from .shots import Frame, Program, ShotRecord, apply_frame, draw_table, execute, initialize_codestate

_ANGLE_TOL = 1e-9


@numba.njit(cache=True, inline="always")
def _g(x1, z1, x2, z2):
    # exponent of i picked up by Pauli(x1, z1) * Pauli(x2, z2)
    if x1 == 0 and z1 == 0:
        return 0
    if x1 == 1 and z1 == 1:
        return z2 - x2
    if x1 == 1:
        return z2 * (2 * x2 - 1)
    return x2 * (1 - 2 * z2)


@numba.njit(cache=True)
def _rowsum(x, z, r, h, i):
    # row h <- row i * row h
    n = x.shape[1]
    e = 2 * r[h] + 2 * r[i]
    for j in range(n):
        e += _g(x[i, j], z[i, j], x[h, j], z[h, j])
        x[h, j] ^= x[i, j]
        z[h, j] ^= z[i, j]
    r[h] = (e % 4) // 2


@numba.njit(cache=True, inline="always")
def _anticommutes(x, z, row, qs, gx, gz):
    acc = 0
    for k in range(qs.shape[0]):
        q = qs[k]
        acc += x[row, q] * gz[k] + z[row, q] * gx[k]
    return acc & 1


@numba.njit(cache=True)
def _rotate(x, z, r, qs, gx, gz, i_power):
    # rows anticommuting with G become i^{i_power} * row * G
    n2 = x.shape[0] - 1
    for row in range(n2):
        if _anticommutes(x, z, row, qs, gx, gz):
            e = 2 * r[row] + i_power
            for k in range(qs.shape[0]):
                q = qs[k]
                e += _g(x[row, q], z[row, q], gx[k], gz[k])
                x[row, q] ^= gx[k]
                z[row, q] ^= gz[k]
            r[row] = (e % 4) // 2


@numba.njit(cache=True)
def _pauli(x, z, r, qs, gx, gz):
    n2 = x.shape[0] - 1
    for row in range(n2):
        if _anticommutes(x, z, row, qs, gx, gz):
            r[row] ^= 1


@numba.njit(cache=True)
def _measure(x, z, r, qs, gx, gz, random_bit):
    """Measure the Pauli product given by (qs, gx, gz); returns (outcome, random)."""
    n = x.shape[1]
    pivot = -1
    for row in range(n, 2 * n):
        if _anticommutes(x, z, row, qs, gx, gz):
            pivot = row
            break
    if pivot >= 0:
        for row in range(2 * n):
            if row != pivot and _anticommutes(x, z, row, qs, gx, gz):
                _rowsum(x, z, r, row, pivot)
        x[pivot - n, :] = x[pivot, :]
        z[pivot - n, :] = z[pivot, :]
        r[pivot - n] = r[pivot]
        x[pivot, :] = 0
        z[pivot, :] = 0
        for k in range(qs.shape[0]):
            x[pivot, qs[k]] = gx[k]
            z[pivot, qs[k]] = gz[k]
        # the row must equal +-P exactly; Y letters carry no extra phase here
        r[pivot] = random_bit
        return random_bit, True
    s = 2 * n
    x[s, :] = 0
    z[s, :] = 0
    r[s] = 0
    for row in range(n):
        if _anticommutes(x, z, row, qs, gx, gz):
            _rowsum(x, z, r, s, row + n)
    return r[s], False


class Tableau:
    """Stabilizer state of ``n`` qubits, initialised to |0...0>."""

    def __init__(self, n: int):
        self.n = n
        self.x = np.zeros((2 * n + 1, n), dtype=np.int64)
        self.z = np.zeros((2 * n + 1, n), dtype=np.int64)
        self.r = np.zeros(2 * n + 1, dtype=np.int64)
        for q in range(n):
            self.x[q, q] = 1
            self.z[n + q, q] = 1
        self._cache: dict = {}

    def _encode(self, paulis: str, qubits: tuple[int, ...]):
        key = (paulis, qubits)
        enc = self._cache.get(key)
        if enc is None:
            for q in qubits:
                if not 0 <= q < self.n:
                    raise IndexError(f"register {q} out of range for {self.n} registers")
            qs = np.array(qubits, dtype=np.int64)
            gx = np.array([ch in "XY" for ch in paulis], dtype=np.int64)
            gz = np.array([ch in "ZY" for ch in paulis], dtype=np.int64)
            enc = self._cache[key] = (qs, gx, gz)
        return enc

    def stabilizers(self) -> list[str]:
        """Signed stabilizer generators as strings like ``+XZI``."""
        out = []
        for row in range(self.n, 2 * self.n):
            letters = "".join("IXZY"[self.x[row, q] + 2 * self.z[row, q]] for q in range(self.n))
            out.append(("-" if self.r[row] else "+") + letters)
        return out

    def expectation(self, paulis: str, qubits: tuple[int, ...]) -> int:
        """+1 / -1 for a Pauli product with a definite value, 0 otherwise."""
        qs, gx, gz = self._encode(paulis, qubits)
        x, z, r = self.x.copy(), self.z.copy(), self.r.copy()
        bit, random = _measure(x, z, r, qs, gx, gz, 0)
        return 0 if random else (-1 if bit else 1)

    # backend interface -------------------------------------------------

    def rotate(self, generator: str, qubits: tuple[int, ...], angle: float) -> None:
        """exp(-i angle G); ``angle`` must be +-pi/4 (Clifford)."""
        if abs(angle - math.pi / 4) < _ANGLE_TOL:
            power = 1
        elif abs(angle + math.pi / 4) < _ANGLE_TOL:
            power = 3
        else:
            raise ValueError(f"tableau supports only +-pi/4 rotations, got angle {angle!r}")
        qs, gx, gz = self._encode(generator, qubits)
        _rotate(self.x, self.z, self.r, qs, gx, gz, power)

    def apply_pauli(self, paulis: str, qubits: tuple[int, ...]) -> None:
        qs, gx, gz = self._encode(paulis, qubits)
        _pauli(self.x, self.z, self.r, qs, gx, gz)

    def measure_pauli(self, paulis: str, qubits: tuple[int, ...], u: float) -> int:
        qs, gx, gz = self._encode(paulis, qubits)
        bit, _ = _measure(self.x, self.z, self.r, qs, gx, gz, int(u < 0.5))
        return int(bit)

    def measure(self, q: int, u: float) -> int:
        return self.measure_pauli("Z", (q,), u)

    def reset(self, q: int, u: float) -> None:
        if self.measure(q, u):
            self.apply_pauli("X", (q,))

    def measure_x_product(self, qubits: tuple[int, ...], u: float) -> int:
        return self.measure_pauli("X" * len(qubits), qubits, u)


def run_shot_tableau(circuit: Circuit, params: NoiseParams, calibration: Optional[Frame], shot_seed: int,
                     injected: Optional[dict[int, str]] = None,
                     program: Optional[Program] = None) -> ShotRecord:
    """Same contract and randomness as the state-vector ``run_shot``; c must be 0."""
    if params.c != 0.0:
        raise ValueError("the tableau engine simulates Clifford circuits only and needs c = 0")
    if program is None:
        program = Program.compile(circuit, params)
    table, init = draw_table(shot_seed, program)
    tab = Tableau(circuit.n_registers)
    initialize_codestate(tab, circuit.layout, init)
    syn, fin = execute(tab, program, table, injected)
    return apply_frame(syn, fin, calibration, shot_seed)


def calibration_frame(circuit: Circuit) -> Frame:
    """Raw outcomes of a noise-free run, shared by both engines.

    Noise-free syndromes are deterministic; the final data bits are not, but
    only their check and logical parities matter, and those are fixed."""
    program = Program.compile(circuit, NoiseParams(0.0))
    table = np.full((program.n_ops, program.channel_mask.shape[1]), 0.5)
    tab = Tableau(circuit.n_registers)
    initialize_codestate(tab, circuit.layout, np.ones(len(circuit.layout.x_stabilizers)))
    syn, fin = execute(tab, program, table)
    return Frame(syn, fin)

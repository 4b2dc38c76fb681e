"""Shot records, seeding and the op-by-op driver shared by both engines.

Randomness for one shot is a table of uniforms indexed by op ``uid`` (the op's
position in the parallel circuit), one row per op and one column per draw
kind.  Both schedules and both engines read the same cell for the same
physical location, so runs are comparable shot by shot.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Protocol

import numpy as np

from .circuit import GENERATORS, ROTATIONS, Circuit, GateKind
from .layout import CodeLayout, destabilizer_supports
from .noise import (
    DRAW_MEASURE,
    N_DRAW_COLUMNS,
    NoiseParams,
    noise_locations,
    pauli_1q_from_uniform,
    pauli_2q_from_uniform,
)


class NumericHealthError(RuntimeError):
    """State norm drifted beyond tolerance; the shot is aborted."""


@dataclass
class ShotRecord:
    syndromes: np.ndarray  # (rounds, n_checks) uint8, columns in serial order
    final_data_bits: np.ndarray  # (n_data,) uint8
    shot_seed: int

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ShotRecord)
            and self.shot_seed == other.shot_seed
            and np.array_equal(self.syndromes, other.syndromes)
            and np.array_equal(self.final_data_bits, other.final_data_bits)
        )


@dataclass(frozen=True)
class Frame:
    """Raw outcomes of a noise-free run; XORed away from every noisy shot."""

    syndromes: np.ndarray
    final_data_bits: np.ndarray


def shot_seed(master_seed: int, shot_index: int) -> int:
    """64-bit seed of one shot, a pure function of (master_seed, shot_index)."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(shot_index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def shot_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed)))


class Backend(Protocol):
    def rotate(self, generator: str, qubits: tuple[int, ...], angle: float) -> None: ...
    def apply_pauli(self, paulis: str, qubits: tuple[int, ...]) -> None: ...
    def measure(self, q: int, u: float) -> int: ...
    def reset(self, q: int, u: float) -> None: ...
    def measure_x_product(self, qubits: tuple[int, ...], u: float) -> int: ...


_ROT, _MEAS, _RESET, _IDLE = 0, 1, 2, 3


@dataclass
class Program:
    """A circuit with its noise attached, flattened for fast execution."""

    circuit: Circuit
    params: NoiseParams
    codes: list = field(default_factory=list)
    uids: np.ndarray = None
    channel_mask: np.ndarray = None  # (n_ops, N_DRAW_COLUMNS) bool, indexed by uid
    slots: dict = field(default_factory=dict)  # position -> ("syn", r, col) | ("fin", q)
    pre_noise: set = field(default_factory=set)  # uids whose noise acts before the op

    @classmethod
    def compile(cls, circuit: Circuit, params: NoiseParams) -> "Program":
        prog = cls(circuit, params)
        annotated = noise_locations(circuit, params)
        n_ops = len(annotated)
        prog.uids = np.array([item.op.uid for item in annotated], dtype=np.int64)
        prog.channel_mask = np.zeros((n_ops, N_DRAW_COLUMNS), dtype=bool)
        n_data = circuit.n_data
        for pos, item in enumerate(annotated):
            op = item.op
            for ch in item.channels:
                prog.channel_mask[op.uid, ch.column] = True
                if ch.before:
                    prog.pre_noise.add(op.uid)
            chans = tuple((ch.kind, ch.qubits, ch.column, ch.before) for ch in item.channels)
            if op.gate in ROTATIONS:
                gen, sense = GENERATORS[op.gate]
                angle = sense * math.pi / 4 + item.coherent_angle
                prog.codes.append((_ROT, op.qubits, gen, angle, chans))
            elif op.gate is GateKind.MEASURE_Z:
                prog.codes.append((_MEAS, op.qubits, None, 0.0, chans))
                if op.round < circuit.rounds:
                    prog.slots[pos] = ("syn", op.round, op.origin)
                else:
                    prog.slots[pos] = ("fin", op.qubits[0] if op.qubits[0] < n_data else None)
            elif op.gate is GateKind.RESET:
                prog.codes.append((_RESET, op.qubits, None, 0.0, chans))
            else:
                prog.codes.append((_IDLE, op.qubits, None, 0.0, chans))
        return prog

    @property
    def n_ops(self) -> int:
        return len(self.codes)

    @property
    def n_checks(self) -> int:
        return len(self.circuit.layout.stabilizers)


def draw_table(seed: int, program: Program) -> tuple[np.ndarray, np.ndarray]:
    """Uniforms for the circuit ops (by uid) and for the initial projections."""
    rng = shot_rng(seed)
    table = rng.random((program.n_ops, N_DRAW_COLUMNS))
    init = rng.random(len(program.circuit.layout.x_stabilizers))
    return table, init


def initialize_codestate(backend: Backend, layout: CodeLayout, draws: np.ndarray) -> np.ndarray:
    """Project all-|0> data onto the code space with zero X-check outcomes.

    Each X check is measured noise-free; a -1 outcome is undone with a Z
    string that anticommutes with that check alone.  Returns the recorded raw
    outcomes (the forced frame is all zero afterwards).
    """
    fixes = destabilizer_supports(layout, "X")
    outcomes = np.zeros(len(layout.x_stabilizers), dtype=np.uint8)
    for k, s in enumerate(layout.x_stabilizers):
        qubits = tuple(q - 1 for q in s.support)
        outcomes[k] = backend.measure_x_product(qubits, float(draws[k]))
        if outcomes[k]:
            fix = tuple(q - 1 for q in fixes[k])
            backend.apply_pauli("Z" * len(fix), fix)
    return outcomes


def hit_locations(program: Program, table: np.ndarray) -> set[int]:
    """uids of ops where at least one stochastic channel fires this shot."""
    p = program.params.p
    if p <= 0.0:
        return set()
    return set(np.flatnonzero(((table < p) & program.channel_mask).any(axis=1)).tolist())


def run_op(backend: Backend, program: Program, pos: int, table: np.ndarray, hit: set[int],
           injected: dict[int, str], syn: np.ndarray, fin: np.ndarray) -> None:
    """Execute the op at ``pos`` followed by its noise."""
    code, qubits, gen, angle, chans = program.codes[pos]
    uid = int(program.uids[pos])
    pre = uid in program.pre_noise
    if pre and uid in injected:
        backend.apply_pauli(injected[uid], qubits)
    elif pre and uid in hit:
        apply_channels(backend, chans, table[uid], program.params.p, before=True)
    if code == _ROT:
        backend.rotate(gen, qubits, angle)
    elif code == _MEAS:
        bit = backend.measure(qubits[0], float(table[uid, DRAW_MEASURE]))
        slot = program.slots[pos]
        if slot[0] == "syn":
            syn[slot[1], slot[2]] = bit
        elif slot[1] is not None:
            fin[slot[1]] = bit
    elif code == _RESET:
        backend.reset(qubits[0], float(table[uid, DRAW_MEASURE]))
    if uid in injected:
        if not pre:
            backend.apply_pauli(injected[uid], qubits)
    elif uid in hit:
        apply_channels(backend, chans, table[uid], program.params.p)


def sampled_paulis(chans, draws: np.ndarray, p: float, before: bool = False) -> list[tuple[str, tuple[int, ...]]]:
    """Non-identity Paulis the channels of one op produce for this shot."""
    out = []
    for kind, cq, col, pre in chans:
        if pre != before:
            continue
        u = float(draws[col])
        if kind == "DEPOL1":
            pa = pauli_1q_from_uniform(u, p)
            if pa != "I":
                out.append((pa, cq))
        else:
            pa, pb = pauli_2q_from_uniform(u, p)
            label, qs = "", ()
            for ch, q in ((pa, cq[0]), (pb, cq[1])):
                if ch != "I":
                    label += ch
                    qs += (q,)
            if label:
                out.append((label, qs))
    return out


def apply_channels(backend: Backend, chans, draws: np.ndarray, p: float, before: bool = False) -> None:
    for label, qs in sampled_paulis(chans, draws, p, before):
        backend.apply_pauli(label, qs)


def new_outcome_arrays(program: Program) -> tuple[np.ndarray, np.ndarray]:
    circuit = program.circuit
    return (np.zeros((circuit.rounds, program.n_checks), dtype=np.uint8),
            np.zeros(circuit.n_data, dtype=np.uint8))


def execute(backend: Backend, program: Program, table: np.ndarray,
            injected: Optional[dict[int, str]] = None) -> tuple[np.ndarray, np.ndarray]:
    """Run the program op by op on ``backend``; returns raw (syndromes, final bits).

    ``injected`` maps an op uid to a Pauli string over that op's qubits which
    replaces the sampled noise at that location (and acts where that
    location's channel would act).
    """
    syn, fin = new_outcome_arrays(program)
    injected = injected or {}
    hit = hit_locations(program, table)
    for pos in range(program.n_ops):
        run_op(backend, program, pos, table, hit, injected, syn, fin)
    return syn, fin


def apply_frame(syn: np.ndarray, fin: np.ndarray, frame: Optional[Frame], seed: int) -> ShotRecord:
    if frame is not None:
        syn = syn ^ frame.syndromes
        fin = fin ^ frame.final_data_bits
    return ShotRecord(syn.astype(np.uint8), fin.astype(np.uint8), int(seed))


# ---------------------------------------------------------------------------
# persistence


def write_shot_records(path: Path | str, records: Iterable[ShotRecord]) -> None:
    """CSV rows ``shot_seed,round,stabilizer_index,bit`` for every syndrome bit
    followed by one ``shot_seed,final_bits,,<bitstring>`` row per shot.

    ``stabilizer_index`` is the check's serial order (X checks first)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["shot_seed", "round", "stabilizer_index", "bit"])
        for rec in records:
            for r in range(rec.syndromes.shape[0]):
                for k in range(rec.syndromes.shape[1]):
                    w.writerow([rec.shot_seed, r, k, int(rec.syndromes[r, k])])
            w.writerow([rec.shot_seed, "final_bits", "", "".join(str(int(b)) for b in rec.final_data_bits)])


def read_shot_records(path: Path | str, rounds: int, n_checks: int) -> list[ShotRecord]:
    records: dict[int, ShotRecord] = {}
    order: list[int] = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            seed = int(row["shot_seed"])
            if seed not in records:
                records[seed] = ShotRecord(np.zeros((rounds, n_checks), np.uint8), np.zeros(0, np.uint8), seed)
                order.append(seed)
            rec = records[seed]
            if row["round"] == "final_bits":
                rec.final_data_bits = np.array([int(ch) for ch in row["bit"]], dtype=np.uint8)
            else:
                rec.syndromes[int(row["round"]), int(row["stabilizer_index"])] = int(row["bit"])
    return [records[s] for s in order]

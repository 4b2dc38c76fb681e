"""Syndrome-extraction circuits in the cross-resonance gate set.

One round takes 11 steps.  X-type checks run first (steps 0-5) and Z-type
checks second (steps 6-10)::

    0      RX90DAG on X ancillas
    1-4    RZX90 between X ancillas and data, clockwise from bottom right
    5      RX90 on X ancillas, RX90 on data qubits touched by an odd number of X checks
    6-9    RZX90 between Z ancillas and data, clockwise from top right
    10     RZ90 on data qubits touched by an odd number of Z checks,
           MEASURE_Z then RESET on every ancilla

Noise attached to an op acts right after it, except on an ancilla MEASURE_Z
where the step's channel acts just before the measurement.

Every register holds exactly one op per step (WAIT when idle), so the step
noise can be attached to ops.  ``RZX90`` on ``(a, b)`` is exp(-i pi/4 X_a Z_b):
X-type checks put the data qubit first, Z-type checks put the ancilla first.

The serialized form executes each check's ancilla block one after the other
on a single reused register (index d^2) with the data-qubit ops interleaved
so that every register sees the same op sequence as in the parallel form.
"""

from __future__ import annotations

import enum
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .layout import WAIT, CodeLayout

STEPS_PER_ROUND = 11


class GateKind(str, enum.Enum):
    RX90 = "RX90"
    RX90DAG = "RX90DAG"
    RZ90 = "RZ90"
    RZX90 = "RZX90"
    RZX90DAG = "RZX90DAG"
    MEASURE_Z = "MEASURE_Z"
    RESET = "RESET"
    WAIT = "WAIT"


class NoiseTag(str, enum.Enum):
    ONE_QUBIT_STEP = "OneQubitStep"
    TWO_QUBIT_AFTER_CR = "TwoQubitAfterCR"
    COHERENT_ROTATION = "CoherentRotation"
    NONE = "None"


# Pauli generator (one letter per qubit) and rotation sense of each rotation gate.
GENERATORS: dict[GateKind, tuple[str, int]] = {
    GateKind.RX90: ("X", +1),
    GateKind.RX90DAG: ("X", -1),
    GateKind.RZ90: ("Z", +1),
    GateKind.RZX90: ("XZ", +1),
    GateKind.RZX90DAG: ("XZ", -1),
}

ROTATIONS = frozenset(GENERATORS)
TWO_QUBIT_GATES = frozenset({GateKind.RZX90, GateKind.RZX90DAG})


class ScheduleCollision(RuntimeError):
    """Two check blocks cannot be delayed past each other on a shared data qubit."""


@dataclass(frozen=True)
class CircuitOp:
    gate: GateKind
    qubits: tuple[int, ...]
    step: int
    round: int
    noise_tag: NoiseTag
    uid: int = -1  # position in the parallel circuit; shared by both schedules
    origin: int = -1  # serial order of the owning check, -1 for data-only ops

    def __post_init__(self):
        n = 2 if self.gate in TWO_QUBIT_GATES else 1
        if len(self.qubits) != n:
            raise ValueError(f"{self.gate.value} expects {n} qubit(s), got {self.qubits}")

    def dump(self) -> str:
        qs = " ".join(str(q) for q in self.qubits)
        return f"{self.round} {self.step} {self.gate.value} {qs} {self.noise_tag.value}"


@dataclass(frozen=True)
class Circuit:
    ops: tuple[CircuitOp, ...]
    n_registers: int
    steps_per_round: int
    schedule: str  # "parallel" or "serialized"
    rounds: int
    layout: CodeLayout = field(repr=False, compare=False)
    readout: bool = False

    @property
    def n_data(self) -> int:
        return self.layout.n_data

    def dump(self) -> str:
        """Line-oriented listing: ``round step gate q0 [q1] noise_tag``."""
        header = (
            f"# schedule={self.schedule} d={self.layout.distance} rounds={self.rounds} "
            f"registers={self.n_registers} steps_per_round={self.steps_per_round} "
            f"order=X-half-then-Z-half"
        )
        return "\n".join([header] + [op.dump() for op in self.ops]) + "\n"

    def ops_on(self, register: int) -> list[CircuitOp]:
        return [op for op in self.ops if register in op.qubits]

    def measurement_ops(self) -> list[CircuitOp]:
        return [op for op in self.ops if op.gate is GateKind.MEASURE_Z]


def _odd_touch(layout: CodeLayout, kind: str) -> set[int]:
    stabs = layout.x_stabilizers if kind == "X" else layout.z_stabilizers
    counts: dict[int, int] = defaultdict(int)
    for s in stabs:
        for q in s.support:
            counts[q] += 1
    return {q for q, k in counts.items() if k % 2 == 1}


def _round_ops(layout: CodeLayout, r: int) -> list[CircuitOp]:
    """Ops of parallel round ``r`` in step order (uid/origin filled later)."""
    n_data = layout.n_data
    x_anc = {s.ancilla_id: s for s in layout.x_stabilizers}
    z_anc = {s.ancilla_id: s for s in layout.z_stabilizers}
    odd_x = {q - 1 for q in _odd_touch(layout, "X")}
    odd_z = {q - 1 for q in _odd_touch(layout, "Z")}
    one, two, none = NoiseTag.ONE_QUBIT_STEP, NoiseTag.TWO_QUBIT_AFTER_CR, NoiseTag.NONE
    ops: list[CircuitOp] = []

    for step in range(STEPS_PER_ROUND):
        busy: set[int] = set()
        step_ops: list[CircuitOp] = []

        def add(gate, qubits, tag):
            step_ops.append(CircuitOp(gate, tuple(qubits), step, r, tag))
            busy.update(qubits)

        if step == 0:
            for a in x_anc:
                add(GateKind.RX90DAG, (a,), one)
        elif 1 <= step <= 4:
            for a, s in x_anc.items():
                q = s.data_supports[step - 1]
                if q is not WAIT:
                    add(GateKind.RZX90, (q - 1, a), two)
        elif step == 5:
            for q in sorted(odd_x):
                add(GateKind.RX90, (q,), one)
            for a in x_anc:
                add(GateKind.RX90, (a,), one)
        elif 6 <= step <= 9:
            for a, s in z_anc.items():
                q = s.data_supports[step - 6]
                if q is not WAIT:
                    add(GateKind.RZX90, (a, q - 1), two)
        else:
            for q in sorted(odd_z):
                add(GateKind.RZ90, (q,), one)
            for a in list(x_anc) + list(z_anc):
                # the step's idle channel acts as readout error just before the
                # measurement; a channel after the reset would leak into the
                # next check sharing the register in the serialized form
                step_ops.append(CircuitOp(GateKind.MEASURE_Z, (a,), step, r, one))
                step_ops.append(CircuitOp(GateKind.RESET, (a,), step, r, none))
                busy.add(a)

        for reg in range(n_data + layout.n_ancilla):
            if reg not in busy:
                step_ops.append(CircuitOp(GateKind.WAIT, (reg,), step, r, one))
        # data-only ops first, then each ancilla's ops; stable for MEASURE_Z/RESET
        step_ops.sort(key=lambda op: (1, max(op.qubits)) if max(op.qubits) >= n_data else (0, op.qubits[0]))
        ops.extend(step_ops)
    return ops


def _finalize(raw: Iterable[CircuitOp], layout: CodeLayout) -> tuple[CircuitOp, ...]:
    n_data = layout.n_data
    out = []
    for uid, op in enumerate(raw):
        anc = [q for q in op.qubits if q >= n_data]
        origin = anc[0] - n_data if anc else -1
        out.append(CircuitOp(op.gate, op.qubits, op.step, op.round, op.noise_tag, uid, origin))
    return tuple(out)


def build_parallel_circuit(layout: CodeLayout, rounds: int, readout: bool = True) -> Circuit:
    """``rounds`` simultaneous rounds, optionally followed by Z readout of all data."""
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    raw: list[CircuitOp] = []
    for r in range(rounds):
        raw.extend(_round_ops(layout, r))
    if readout:
        for q in range(layout.n_data):
            raw.append(CircuitOp(GateKind.MEASURE_Z, (q,), 0, rounds, NoiseTag.NONE))
    return Circuit(_finalize(raw, layout), layout.n_data + layout.n_ancilla, STEPS_PER_ROUND,
                   "parallel", rounds, layout, readout)


def build_parallel_round(layout: CodeLayout) -> Circuit:
    return build_parallel_circuit(layout, 1, readout=False)


def serialize(parallel: Circuit) -> Circuit:
    """Reorder a parallel circuit so the checks run one at a time on one ancilla.

    Check blocks are emitted in serial order; before a block op touches a data
    qubit, that qubit's earlier data-only ops are flushed.  If the next pending
    op on the qubit belongs to a block that has not run yet, the schedule has a
    collision and :class:`ScheduleCollision` names both checks.
    """
    if parallel.schedule != "parallel":
        raise ValueError("serialize expects a parallel circuit")
    layout = parallel.layout
    n_data = layout.n_data
    reuse = n_data
    labels = {s.serial_order: s.label for s in layout.stabilizers}
    by_round: dict[int, list[CircuitOp]] = defaultdict(list)
    for op in parallel.ops:
        by_round[op.round].append(op)

    def remap(op: CircuitOp) -> CircuitOp:
        qs = tuple(q if q < n_data else reuse for q in op.qubits)
        return CircuitOp(op.gate, qs, op.step, op.round, op.noise_tag, op.uid, op.origin)

    out: list[CircuitOp] = []
    for r in sorted(by_round):
        ops = by_round[r]
        queues: dict[int, deque] = {q: deque() for q in range(n_data)}
        blocks: dict[int, list[CircuitOp]] = defaultdict(list)
        for op in ops:
            for q in op.qubits:
                if q < n_data:
                    queues[q].append(op)
            if op.origin >= 0:
                blocks[op.origin].append(op)
        for origin in sorted(blocks):
            for op in blocks[origin]:
                for q in op.qubits:
                    if q >= n_data:
                        continue
                    queue = queues[q]
                    while queue[0] is not op:
                        head = queue[0]
                        if head.origin >= 0:
                            raise ScheduleCollision(
                                f"data qubit {q + 1}: check {labels[origin]} (step {op.step}) "
                                f"must wait for check {labels[head.origin]} (step {head.step})"
                            )
                        out.append(remap(queue.popleft()))
                    queue.popleft()
                out.append(remap(op))
        rest = sorted({op.uid: op for q in queues for op in queues[q]}.values(), key=lambda o: o.uid)
        out.extend(remap(op) for op in rest)
    return Circuit(tuple(out), n_data + 1, parallel.steps_per_round, "serialized",
                   parallel.rounds, layout, parallel.readout)


def build_serialized_circuit(layout: CodeLayout, rounds: int, readout: bool = True) -> Circuit:
    return serialize(build_parallel_circuit(layout, rounds, readout))


def build_serialized_round(layout: CodeLayout) -> Circuit:
    return serialize(build_parallel_round(layout))


@dataclass
class ScheduleReport:
    passed: bool
    violations: list[str]
    first_offending: Optional[tuple[CircuitOp, CircuitOp]] = None

    def __bool__(self) -> bool:
        return self.passed

    def __str__(self) -> str:
        if self.passed:
            return "schedule equivalence: pass"
        return "schedule equivalence: FAIL\n" + "\n".join(f"  {v}" for v in self.violations)


def _describe(op: CircuitOp, labels: dict[int, str]) -> str:
    who = labels.get(op.origin, "data")
    return f"[{who}] r{op.round} s{op.step} {op.gate.value} {op.qubits}"


def validate_schedules(parallel: Circuit, serialized: Circuit) -> ScheduleReport:
    """Check that ``serialized`` is a collision-free reordering of ``parallel``.

    (a) every data qubit sees the same op / noise-tag / partner sequence;
    (b) on every logical qubit (data and each parallel ancilla) the op order is
        unchanged, so only ops with disjoint support were swapped;
    (c) consecutive check blocks on the reused register are separated by
        MEASURE_Z followed by RESET.
    """
    layout = parallel.layout
    n_data = layout.n_data
    labels = {s.serial_order: s.label for s in layout.stabilizers}
    violations: list[str] = []
    first: Optional[tuple[CircuitOp, CircuitOp]] = None

    def flag(msg, pair=None):
        nonlocal first
        violations.append(msg)
        if pair is not None and first is None:
            first = pair

    by_uid = {op.uid: op for op in parallel.ops}
    ser_uids = [op.uid for op in serialized.ops]
    if sorted(ser_uids) != sorted(by_uid):
        flag("serialized circuit does not contain exactly the parallel ops")
        return ScheduleReport(False, violations, first)
    for op in serialized.ops:
        src = by_uid[op.uid]
        if (op.gate, op.noise_tag, op.step, op.round) != (src.gate, src.noise_tag, src.step, src.round):
            flag(f"op {op.uid} changed content: {_describe(src, labels)} -> {_describe(op, labels)}", (src, op))

    def logical_sequences(circuit: Circuit, serialized_form: bool) -> dict[int, list[CircuitOp]]:
        seqs: dict[int, list[CircuitOp]] = defaultdict(list)
        for op in circuit.ops:
            qs = by_uid[op.uid].qubits if serialized_form else op.qubits
            for q in qs:
                seqs[q].append(op)
        return seqs

    par_seq = logical_sequences(parallel, False)
    ser_seq = logical_sequences(serialized, True)

    # (a) data-qubit view
    for q in range(n_data):
        a = [(o.gate, o.noise_tag, o.origin) for o in par_seq[q]]
        b = [(o.gate, o.noise_tag, o.origin) for o in ser_seq[q]]
        if a != b:
            k = next(i for i, (x, y) in enumerate(zip(a + [None], b + [None])) if x != y)
            pa = par_seq[q][k] if k < len(par_seq[q]) else None
            sb = ser_seq[q][k] if k < len(ser_seq[q]) else None
            flag(f"data qubit {q + 1}: sequence differs at position {k}: "
                 f"{_describe(pa, labels) if pa else '-'} vs {_describe(sb, labels) if sb else '-'}",
                 (pa, sb) if pa and sb else None)

    # (b) per logical qubit order
    for q in sorted(par_seq):
        a = [o.uid for o in par_seq[q]]
        b = [o.uid for o in ser_seq[q]]
        if a != b:
            k = next(i for i, (x, y) in enumerate(zip(a, b)) if x != y)
            pa, sb = by_uid[a[k]], by_uid[b[k]]
            who = f"data qubit {q + 1}" if q < n_data else f"ancilla of {labels[q - n_data]}"
            flag(f"{who}: {_describe(sb, labels)} reordered before {_describe(pa, labels)}", (pa, sb))

    # (c) block boundaries on the reused register
    if serialized.schedule == "serialized":
        reg_ops = [op for op in serialized.ops if n_data in op.qubits]
        for idx in range(1, len(reg_ops)):
            prev, cur = reg_ops[idx - 1], reg_ops[idx]
            if cur.origin != prev.origin:
                tail = [o.gate for o in reg_ops[max(0, idx - 2):idx]]
                if tail != [GateKind.MEASURE_Z, GateKind.RESET]:
                    flag(f"block {labels[prev.origin]} -> {labels[cur.origin]} not separated by "
                         f"MEASURE_Z+RESET", (prev, cur))
    return ScheduleReport(not violations, violations, first)

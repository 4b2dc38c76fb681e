"""Dense state-vector engine.

Amplitudes are complex128 and basis index bit k is register k.  Every gate
in the circuit is exp(-i a P) for a Pauli string P, so a handful of in-place
pair kernels cover all rotations (and Pauli errors, which are rotations by
pi/2 up to a global phase).  Nothing ever builds a 2^n x 2^n matrix.

Two shortcuts keep a 26-register run affordable without changing results:

* The highest register is tracked as "clean" while it is known to be |0>.
  Ops on lower registers then only touch the first half of the vector.
* In a serialized circuit each check block (ancilla rotations, entangling
  gates sharing one ancilla Pauli, measurement, reset) acts on the data as a
  pair of Kraus operators that are diagonal after a local Hadamard on the
  X-coupled qubits.  The whole block then costs two half-vector passes.  A
  block falls back to op-by-op execution whenever a stochastic fault or an
  injected fault lands inside it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from .circuit import GENERATORS, ROTATIONS, Circuit, CircuitOp, GateKind
from .noise import DRAW_MEASURE, NoiseParams, pauli_matrix, rotation_matrix
from .shots import (
    _IDLE,
    _MEAS,
    _RESET,
    _ROT,
    Frame,
    NumericHealthError,
    Program,
    ShotRecord,
    sampled_paulis,
    apply_frame,
    draw_table,
    hit_locations,
    initialize_codestate,
    new_outcome_arrays,
    run_op,
)

MAX_REGISTERS = 26
NORM_ABORT_TOL = 1e-6
_CLAMP = 1e-12


# kernels -----------------------------------------------------------------


@numba.njit(cache=True, inline="always")
def _parity(v):
    v ^= v >> 32
    v ^= v >> 16
    v ^= v >> 8
    v ^= v >> 4
    v ^= v >> 2
    v ^= v >> 1
    return v & 1


@numba.njit(cache=True, inline="always")
def _insert_zero(j, bit):
    low = j & ((1 << bit) - 1)
    return ((j >> bit) << (bit + 1)) | low


@numba.njit(cache=True)
def _rot_x(psi, q, c, s):
    # exp(-i a X_q)
    b = 1 << q
    n = psi.shape[0]
    for h in range(0, n, b << 1):
        for m0 in range(h, h + b):
            m1 = m0 + b
            a0 = psi[m0]
            a1 = psi[m1]
            psi[m0] = complex(c * a0.real + s * a1.imag, c * a0.imag - s * a1.real)
            psi[m1] = complex(c * a1.real + s * a0.imag, c * a1.imag - s * a0.real)


@numba.njit(cache=True)
def _rot_z(psi, q, c, s):
    # exp(-i a Z_q)
    b = 1 << q
    f = psi.view(np.float64)
    for m in range(psi.shape[0]):
        sg = s if (m & b) else -s
        re = f[2 * m]
        im = f[2 * m + 1]
        f[2 * m] = c * re - sg * im
        f[2 * m + 1] = c * im + sg * re


@numba.njit(cache=True)
def _rot_xz(psi, qx, qz, c, s):
    # exp(-i a X_qx Z_qz), qx != qz
    bx = 1 << qx
    bz = 1 << qz
    lo = min(bx, bz)
    hi = max(bx, bz)
    n = psi.shape[0]
    for h in range(0, n, hi << 1):
        for mid in range(h, h + hi, lo << 1):
            for m in range(mid, mid + lo):
                m1 = m + bx
                a0 = psi[m]
                a1 = psi[m1]
                psi[m] = complex(c * a0.real + s * a1.imag, c * a0.imag - s * a1.real)
                psi[m1] = complex(c * a1.real + s * a0.imag, c * a1.imag - s * a0.real)
                m2 = m + bz
                m3 = m2 + bx
                a0 = psi[m2]
                a1 = psi[m3]
                psi[m2] = complex(c * a0.real - s * a1.imag, c * a0.imag + s * a1.real)
                psi[m3] = complex(c * a1.real - s * a0.imag, c * a1.imag + s * a0.real)


@numba.njit(cache=True)
def _rot_pauli(psi, xmask, zmask, omega, c, s):
    # exp(-i a P), P = omega X^x Z^z, P|k> = omega (-1)^{|k & z|} |k ^ x>
    n = psi.shape[0]
    f = -1j * s * omega
    if xmask == 0:
        for m in range(n):
            if _parity(m & zmask):
                psi[m] *= c - f
            else:
                psi[m] *= c + f
        return
    pivot = 0
    while (xmask >> (pivot + 1)) != 0:
        pivot += 1
    for j in range(n >> 1):
        m = _insert_zero(j, pivot)
        m2 = m ^ xmask
        a = psi[m]
        b = psi[m2]
        sb = -1.0 if _parity(m2 & zmask) else 1.0
        sa = -1.0 if _parity(m & zmask) else 1.0
        psi[m] = c * a + f * sb * b
        psi[m2] = c * b + f * sa * a


@numba.njit(cache=True)
def _norm_and_prob_one(psi, q):
    b = 1 << q
    n = psi.shape[0]
    zero = 0.0
    one = 0.0
    for h in range(0, n, b << 1):
        for m in range(h, h + b):
            a0 = psi[m]
            a1 = psi[m + b]
            zero += a0.real * a0.real + a0.imag * a0.imag
            one += a1.real * a1.real + a1.imag * a1.imag
    return zero + one, one


@numba.njit(cache=True)
def _collapse(psi, q, outcome, scale):
    b = 1 << q
    n = psi.shape[0]
    for h in range(0, n, b << 1):
        for m in range(h, h + b):
            if outcome:
                psi[m] = 0.0
                psi[m + b] *= scale
            else:
                psi[m] *= scale
                psi[m + b] = 0.0


@numba.njit(cache=True)
def _collapse_to_zero(psi, q, outcome, scale):
    # collapse onto `outcome`, then move that branch to |0> on q
    b = 1 << q
    n = psi.shape[0]
    for h in range(0, n, b << 1):
        for m in range(h, h + b):
            if outcome:
                psi[m] = psi[m + b] * scale
            else:
                psi[m] *= scale
            psi[m + b] = 0.0


@numba.njit(cache=True)
def _x_product_plus_weight(psi, xmask):
    # || (I + X_S)/2 psi ||^2
    pivot = 0
    while (xmask >> (pivot + 1)) != 0:
        pivot += 1
    acc = 0.0
    for j in range(psi.shape[0] >> 1):
        m = _insert_zero(j, pivot)
        v = psi[m] + psi[m ^ xmask]
        acc += 0.5 * (v.real * v.real + v.imag * v.imag)
    return acc


@numba.njit(cache=True)
def _x_product_project(psi, xmask, sign, scale):
    pivot = 0
    while (xmask >> (pivot + 1)) != 0:
        pivot += 1
    for j in range(psi.shape[0] >> 1):
        m = _insert_zero(j, pivot)
        m2 = m ^ xmask
        a = psi[m]
        b = psi[m2]
        psi[m] = 0.5 * scale * (a + sign * b)
        psi[m2] = 0.5 * scale * (b + sign * a)


@numba.njit(cache=True, inline="always")
def _block_base(outer, sorted_bits):
    base = outer
    for p in sorted_bits:
        base = _insert_zero(base, p)
    return base


@numba.njit(cache=True, inline="always")
def _local_wht(buf, had):
    size = buf.shape[0]
    for k in had:
        step = 1 << k
        for l in range(size):
            if not (l & step):
                a = buf[l]
                b = buf[l | step]
                buf[l] = a + b
                buf[l | step] = a - b


@numba.njit(cache=True)
def _block_weights(psi, sorted_bits, offs, had, weight1):
    """(||psi||^2, ||K_1 psi||^2) with K_1 diagonal after a local transform.

    ``weight1`` already carries |T_1|^2 and the transform normalisation."""
    size = offs.shape[0]
    buf = np.empty(size, dtype=np.complex128)
    tot = 0.0
    w1 = 0.0
    for outer in range(psi.shape[0] // size):
        base = _block_base(outer, sorted_bits)
        for l in range(size):
            v = psi[base + offs[l]]
            tot += v.real * v.real + v.imag * v.imag
            buf[l] = v
        _local_wht(buf, had)
        for l in range(size):
            v = buf[l]
            w1 += weight1[l] * (v.real * v.real + v.imag * v.imag)
    return tot, w1


@numba.njit(cache=True)
def _block_apply(psi, sorted_bits, offs, had, table):
    """psi <- H T H psi on every local block; ``table`` includes all scaling."""
    size = offs.shape[0]
    buf = np.empty(size, dtype=np.complex128)
    for outer in range(psi.shape[0] // size):
        base = _block_base(outer, sorted_bits)
        for l in range(size):
            buf[l] = psi[base + offs[l]]
        _local_wht(buf, had)
        for l in range(size):
            buf[l] *= table[l]
        _local_wht(buf, had)
        for l in range(size):
            psi[base + offs[l]] = buf[l]


_RUN = 256  # contiguous amplitudes handled together in the chunked block kernels


@numba.njit(cache=True)
def _block_weights_runs(psi, sorted_bits, offs, had, weight1):
    # same as _block_weights, iterating contiguous runs below the lowest block bit
    size = offs.shape[0]
    low = sorted_bits[0]
    run = min(1 << low, _RUN)
    buf = np.empty((size, run), dtype=np.complex128)
    tot = 0.0
    w1 = 0.0
    for outer in range(psi.shape[0] // (size << low)):
        base0 = _block_base(outer << low, sorted_bits)
        for t0 in range(0, 1 << low, run):
            base = base0 + t0
            for l in range(size):
                src = base + offs[l]
                for t in range(run):
                    v = psi[src + t]
                    tot += v.real * v.real + v.imag * v.imag
                    buf[l, t] = v
            for k in had:
                step = 1 << k
                for l in range(size):
                    if not (l & step):
                        for t in range(run):
                            a = buf[l, t]
                            b = buf[l | step, t]
                            buf[l, t] = a + b
                            buf[l | step, t] = a - b
            for l in range(size):
                wl = weight1[l]
                for t in range(run):
                    v = buf[l, t]
                    w1 += wl * (v.real * v.real + v.imag * v.imag)
    return tot, w1


@numba.njit(cache=True)
def _block_apply_runs(psi, sorted_bits, offs, had, table):
    size = offs.shape[0]
    low = sorted_bits[0]
    run = min(1 << low, _RUN)
    for outer in range(psi.shape[0] // (size << low)):
        base0 = _block_base(outer << low, sorted_bits)
        for t0 in range(0, 1 << low, run):
            base = base0 + t0
            for k in had:
                step = 1 << k
                for l in range(size):
                    if not (l & step):
                        s0 = base + offs[l]
                        s1 = base + offs[l | step]
                        for t in range(run):
                            a = psi[s0 + t]
                            b = psi[s1 + t]
                            psi[s0 + t] = a + b
                            psi[s1 + t] = a - b
            for l in range(size):
                s0 = base + offs[l]
                f = table[l]
                for t in range(run):
                    psi[s0 + t] *= f
            for k in had:
                step = 1 << k
                for l in range(size):
                    if not (l & step):
                        s0 = base + offs[l]
                        s1 = base + offs[l | step]
                        for t in range(run):
                            a = psi[s0 + t]
                            b = psi[s1 + t]
                            psi[s0 + t] = a + b
                            psi[s1 + t] = a - b


def _letters(generator: str, qubits: tuple[int, ...]) -> list[tuple[str, int]]:
    return [(ch, q) for ch, q in zip(generator, qubits) if ch != "I"]


def _masks(letters: list[tuple[str, int]]) -> tuple[int, int, complex]:
    xmask = zmask = 0
    ny = 0
    for ch, q in letters:
        if ch in "XY":
            xmask |= 1 << q
        if ch in "ZY":
            zmask |= 1 << q
        ny += ch == "Y"
    return xmask, zmask, 1j**ny


# fused check blocks --------------------------------------------------------

_A_ROT, _A_ENT, _A_MEAS, _A_WAIT = 0, 1, 2, 3


@dataclass
class CheckBlock:
    """A fusable ancilla block of a serialized program, positions inclusive."""

    start: int
    end: int  # position of the RESET
    measure_pos: int
    anc_items: list[tuple[int, int, int, object]]  # (pos, uid, kind, payload) in order
    entanglers: list[tuple[int, str, str, float]]  # (data qubit, ancilla letter, data letter, angle)
    hoist: list[int]  # data ops moved ahead of the block
    sink: list[int]  # data ops moved behind it
    guarded_uids: frozenset  # faults here need per-shot operators
    sorted_bits: np.ndarray
    offs: np.ndarray
    had: np.ndarray
    tables: tuple[np.ndarray, np.ndarray]  # K_0, K_1 diagonals incl. normalisation
    weight1: np.ndarray


def _block_tables(phi, r_post, anc_letter, entanglers, thetas):
    """Diagonals of the two Kraus operators in the locally transformed basis.

    With the ancilla Pauli Q = sum_j lambda_j |q_j><q_j| every entangler acts
    as exp(-i theta lambda_j P) inside the eigenspace, so the block equals
    K_b = a_b V + c_b V^dagger with V the product of exp(-i theta_k P_k)."""
    evals, evecs = np.linalg.eigh(pauli_matrix(anc_letter))
    plus = evecs[:, int(np.argmax(evals))]
    minus = evecs[:, int(np.argmin(evals))]
    size = 1 << len(entanglers)
    phase = np.zeros(size)
    for k, theta in enumerate(thetas):
        bits = (np.arange(size) >> k) & 1
        phase += theta * (1.0 - 2.0 * bits)
    n_had = sum(1 for e in entanglers if e[2] == "X")
    norm = 2.0 ** (-n_had)
    tables = []
    for b in (0, 1):
        a_b = (r_post[b] @ plus) * (plus.conj() @ phi)
        c_b = (r_post[b] @ minus) * (minus.conj() @ phi)
        tables.append(a_b * np.exp(-1j * phase) + c_b * np.exp(1j * phase))
    weight1 = (np.abs(tables[1]) ** 2 * norm).astype(np.float64)
    return (tables[0] * norm, tables[1] * norm), weight1


def _anc_rotations(items) -> tuple[np.ndarray, np.ndarray]:
    r_pre = np.eye(2, dtype=complex)
    r_post = np.eye(2, dtype=complex)
    seen_ent = False
    for _, _, kind, payload in items:
        if kind == _A_ENT:
            seen_ent = True
        elif kind == _A_ROT:
            m = rotation_matrix(*payload)
            if seen_ent:
                r_post = m @ r_post
            else:
                r_pre = m @ r_pre
    return r_pre, r_post


def _make_block(start, end, measure_pos, items, ent, hoist, sink) -> CheckBlock:
    r_pre, r_post = _anc_rotations(items)
    tables, weight1 = _block_tables(r_pre[:, 0], r_post, ent[0][1], ent, [e[3] for e in ent])
    offs = np.zeros(1 << len(ent), dtype=np.int64)
    for l in range(offs.shape[0]):
        for k, e in enumerate(ent):
            offs[l] |= ((l >> k) & 1) << e[0]
    had = np.array([k for k, e in enumerate(ent) if e[2] == "X"], dtype=np.int64)
    return CheckBlock(start, end, measure_pos, items, ent, hoist, sink,
                      frozenset(uid for _, uid, _, _ in items),
                      np.array(sorted(e[0] for e in ent), dtype=np.int64), offs, had, tables, weight1)


def plan_check_blocks(program: Program) -> dict[int, CheckBlock]:
    """Find fusable blocks on the reused ancilla of a serialized program."""
    circuit = program.circuit
    anc = circuit.n_registers - 1
    if circuit.n_registers != circuit.n_data + 1:
        return {}
    codes = program.codes
    plan: dict[int, CheckBlock] = {}
    pos = 0
    n = len(codes)
    while pos < n:
        if anc not in codes[pos][1] or codes[pos][0] == _IDLE:
            pos += 1
            continue
        block, nxt = _scan_block(program, pos, anc)
        if block is not None:
            plan[pos] = block
        pos = nxt
    return plan


def _scan_block(program: Program, start: int, anc: int):
    codes = program.codes
    items, ent = [], []
    hoist, sink = [], []
    entangled: set[int] = set()
    measure_pos = None
    post_seen = False
    ok = True
    pos = start
    while pos < len(codes):
        code, qubits, gen, angle, chans = codes[pos]
        uid = int(program.uids[pos])
        if anc in qubits:
            if code == _RESET:
                if measure_pos is None or not ent or not ok:
                    return None, pos + 1
                return _make_block(start, pos, measure_pos, items, ent, hoist, sink), pos + 1
            if measure_pos is not None:
                ok = False
            elif code == _ROT and len(qubits) == 1:
                items.append((pos, uid, _A_ROT, (gen, angle)))
                post_seen = post_seen or bool(ent)
            elif code == _ROT and len(qubits) == 2:
                k = qubits.index(anc)
                q = qubits[1 - k]
                a_letter, p_letter = gen[k], gen[1 - k]
                if post_seen or q in entangled or p_letter not in "XZ" or a_letter == "I":
                    ok = False
                elif ent and ent[0][1] != a_letter:
                    ok = False
                else:
                    items.append((pos, uid, _A_ENT, len(ent)))
                    ent.append((q, a_letter, p_letter, angle))
                    entangled.add(q)
            elif code == _MEAS:
                measure_pos = pos
                items.append((pos, uid, _A_MEAS, None))
            elif code == _IDLE:
                items.append((pos, uid, _A_WAIT, None))
            else:
                ok = False
        elif code in (_ROT, _IDLE):
            # data-only ops commute with everything in the block except the
            # entangler on their own qubit, so they move to its correct side
            (sink if entangled.intersection(qubits) else hoist).append(pos)
        else:
            ok = False
        pos += 1
    return None, pos


def _faulted_operators(block: CheckBlock, program: Program, faults: dict[int, list]):
    """Kraus tables of a block with Pauli faults inside it, plus the data
    Paulis (moved behind the block) that the faults leave on the data.

    An ancilla Pauli before the first post-rotation is moved to the front of
    the block; moving it across an entangler whose ancilla Pauli it
    anticommutes with flips the sign of that entangler's angle."""
    anc = program.circuit.n_registers - 1
    q_letter = block.entanglers[0][1]
    thetas = [e[3] for e in block.entanglers]
    r_pre = np.eye(2, dtype=complex)
    r_post = np.eye(2, dtype=complex)
    n_ent = 0
    post_started = False
    data_paulis: list[tuple[str, int]] = []

    def absorb(errs):
        nonlocal r_pre, r_post
        for label, qs in errs:
            for ch, q in zip(label, qs):
                if ch == "I":
                    continue
                if q != anc:
                    data_paulis.append((ch, q))
                elif post_started or n_ent == 0:
                    if post_started:
                        r_post = pauli_matrix(ch) @ r_post
                    else:
                        r_pre = pauli_matrix(ch) @ r_pre
                else:
                    if ch != q_letter:
                        for k in range(n_ent):
                            thetas[k] = -thetas[k]
                    r_pre = pauli_matrix(ch) @ r_pre

    for pos, uid, kind, payload in block.anc_items:
        before, after = faults.get(uid, ((), ()))
        absorb(before)
        if kind == _A_ROT:
            m = rotation_matrix(*payload)
            if n_ent:
                r_post = m @ r_post
                post_started = True
            else:
                r_pre = m @ r_pre
        elif kind == _A_ENT:
            n_ent += 1
        absorb(after)
    tables, weight1 = _block_tables(r_pre[:, 0], r_post, q_letter, block.entanglers, thetas)
    return tables, weight1, data_paulis


# engine ------------------------------------------------------------------


class StateVector:
    """Pure state of ``n_registers`` qubits, initialised to |0...0>."""

    def __init__(self, n_registers: int):
        if not 1 <= n_registers <= MAX_REGISTERS:
            raise ValueError(f"n_registers must be in [1, {MAX_REGISTERS}], got {n_registers}")
        self.n_registers = n_registers
        self.amplitudes = np.zeros(1 << n_registers, dtype=np.complex128)
        self.amplitudes[0] = 1.0
        self._top = n_registers - 1
        self._half = self.amplitudes[: 1 << self._top]
        # the top register is known to be |0>, so the upper half is zero
        self._clean = n_registers > 1
        # measured-but-not-yet-collapsed register, fused into a following reset
        self._pending: Optional[tuple[int, int, float, np.ndarray]] = None

    @classmethod
    def from_amplitudes(cls, amps: np.ndarray) -> "StateVector":
        n = int(round(math.log2(len(amps))))
        sv = cls(n)
        sv.amplitudes[:] = amps
        sv._clean = False
        return sv

    @property
    def nbytes(self) -> int:
        return self.amplitudes.nbytes

    @property
    def top_is_clean(self) -> bool:
        return self._clean and self._pending is None

    def _check(self, qubits) -> None:
        for q in qubits:
            if not 0 <= q < self.n_registers:
                raise IndexError(f"register {q} out of range for {self.n_registers} registers")

    def _flush(self) -> None:
        if self._pending is not None:
            q, outcome, scale, view = self._pending
            self._pending = None
            _collapse(view, q, outcome, scale)
            if q == self._top:
                self._clean = outcome == 0

    def _view(self, qubits) -> np.ndarray:
        if self._clean and self._top not in qubits:
            return self._half
        return self.amplitudes

    def state(self) -> np.ndarray:
        self._flush()
        return self.amplitudes

    def norm(self) -> float:
        self._flush()
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    # backend interface -------------------------------------------------

    def rotate(self, generator: str, qubits: tuple[int, ...], angle: float) -> None:
        """exp(-i angle G) with G the Pauli string ``generator`` on ``qubits``."""
        self._check(qubits)
        self._flush()
        letters = _letters(generator, qubits)
        if not letters:
            return
        psi = self._view(qubits)
        c, s = math.cos(angle), math.sin(angle)
        if len(letters) == 1 and letters[0][0] == "X":
            _rot_x(psi, letters[0][1], c, s)
        elif len(letters) == 1 and letters[0][0] == "Z":
            _rot_z(psi, letters[0][1], c, s)
        elif len(letters) == 2 and {letters[0][0], letters[1][0]} == {"X", "Z"}:
            (_, qx), (_, qz) = sorted(letters)
            _rot_xz(psi, qx, qz, c, s)
        else:
            xmask, zmask, omega = _masks(letters)
            _rot_pauli(psi, xmask, zmask, omega, c, s)
        if psi is self.amplitudes and self._clean:
            top_letter = next((ch for ch, q in letters if q == self._top), "Z")
            self._clean = top_letter == "Z"

    def apply_pauli(self, paulis: str, qubits: tuple[int, ...]) -> None:
        # exp(-i pi/2 P) = -i P; the global phase is irrelevant
        self.rotate(paulis, qubits, math.pi / 2)

    def prob_one(self, q: int) -> float:
        self._check((q,))
        self._flush()
        if self._clean and q == self._top:
            return 0.0
        tot, one = _norm_and_prob_one(self._view((q,)), q)
        return one / tot

    def _decide(self, tot: float, one: float, u: float) -> tuple[int, float]:
        if abs(tot - 1.0) > NORM_ABORT_TOL:
            raise NumericHealthError(f"state norm drifted to {tot!r}")
        p1 = one / tot
        if p1 < _CLAMP:
            p1 = 0.0
        elif p1 > 1.0 - _CLAMP:
            p1 = 1.0
        outcome = int(u < p1)
        branch = one if outcome else tot - one
        return outcome, 1.0 / math.sqrt(branch)

    def measure(self, q: int, u: float) -> int:
        """Z measurement; outcome 1 iff ``u`` < P(1).  The collapse is deferred
        so that a directly following reset can share its pass."""
        self._check((q,))
        self._flush()
        if self._clean and q == self._top:
            return 0
        view = self._view((q,))
        tot, one = _norm_and_prob_one(view, q)
        outcome, scale = self._decide(tot, one, u)
        self._pending = (q, outcome, scale, view)
        return outcome

    def reset(self, q: int, u: float) -> None:
        self._check((q,))
        if self._pending is not None and self._pending[0] == q:
            _, outcome, scale, view = self._pending
            self._pending = None
        else:
            self._flush()
            if self._clean and q == self._top:
                return
            outcome = self.measure(q, u)
            _, _, scale, view = self._pending
            self._pending = None
        _collapse_to_zero(view, q, outcome, scale)
        if q == self._top:
            self._clean = True

    def measure_x_product(self, qubits: tuple[int, ...], u: float) -> int:
        """Projective measurement of X on every qubit in ``qubits``."""
        self._check(qubits)
        self._flush()
        psi = self._view(qubits)
        xmask = 0
        for q in qubits:
            xmask |= 1 << q
        plus = _x_product_plus_weight(psi, xmask)
        tot = float(np.vdot(psi, psi).real)
        p1 = min(max((tot - plus) / tot, 0.0), 1.0)
        if p1 < _CLAMP:
            p1 = 0.0
        elif p1 > 1.0 - _CLAMP:
            p1 = 1.0
        outcome = int(u < p1)
        weight = (tot - plus) if outcome else plus
        _x_product_project(psi, xmask, -1.0 if outcome else 1.0, 1.0 / math.sqrt(weight))
        if psi is self.amplitudes and self._top in qubits:
            self._clean = False
        return outcome

    def run_check_block(self, block: CheckBlock, u: float, tables=None, weight1=None) -> int:
        """Ancilla block from its first op through MEASURE and RESET, with the
        ancilla starting and ending in |0>.  Returns the measured bit."""
        if not self.top_is_clean:
            raise RuntimeError("fused check block needs the reused ancilla in |0>")
        if tables is None:
            tables, weight1 = block.tables, block.weight1
        psi = self._half
        args = (psi, block.sorted_bits, block.offs, block.had)
        if block.sorted_bits[0] >= 3:
            tot, one = _block_weights_runs(*args, weight1)
            outcome, scale = self._decide(tot, one, u)
            _block_apply_runs(*args, tables[outcome] * scale)
        else:
            tot, one = _block_weights(*args, weight1)
            outcome, scale = self._decide(tot, one, u)
            _block_apply(*args, tables[outcome] * scale)
        return outcome


# functional interface ----------------------------------------------------


def apply_gate(state: StateVector, op: CircuitOp) -> StateVector:
    state._check(op.qubits)
    if op.gate in ROTATIONS:
        gen, sense = GENERATORS[op.gate]
        state.rotate(gen, op.qubits, sense * math.pi / 4)
    elif op.gate is GateKind.MEASURE_Z or op.gate is GateKind.RESET:
        raise ValueError(f"{op.gate.value} is not unitary; use measure_z / reset")
    return state


def measure_z(state: StateVector, register: int, rng: np.random.Generator) -> int:
    return state.measure(register, float(rng.random()))


def reset(state: StateVector, register: int, rng: np.random.Generator) -> StateVector:
    state.reset(register, float(rng.random()))
    return state


def _block_faults(block: CheckBlock, program: Program, table: np.ndarray, faulty: set[int],
                  injected: dict[int, str]) -> dict[int, tuple[list, list]]:
    p = program.params.p
    out = {}
    for pos, uid, _, _ in block.anc_items:
        if uid not in faulty:
            continue
        if uid in injected:
            fault = [(injected[uid], program.codes[pos][1])]
            out[uid] = (fault, []) if uid in program.pre_noise else ([], fault)
        else:
            chans = program.codes[pos][4]
            out[uid] = (sampled_paulis(chans, table[uid], p, True), sampled_paulis(chans, table[uid], p, False))
    return out


def execute_statevector(sv: StateVector, program: Program, table: np.ndarray,
                        injected: Optional[dict[int, str]] = None,
                        plan: Optional[dict[int, CheckBlock]] = None) -> tuple[np.ndarray, np.ndarray]:
    """Execute ``program`` with fused check blocks wherever the ancilla is clean."""
    syn, fin = new_outcome_arrays(program)
    injected = injected or {}
    hit = hit_locations(program, table)
    faulty = hit.union(injected)
    plan = plan or {}
    pos = 0
    n = program.n_ops
    while pos < n:
        block = plan.get(pos)
        if block is None or not sv.top_is_clean:
            run_op(sv, program, pos, table, hit, injected, syn, fin)
            pos += 1
            continue
        for h in block.hoist:
            run_op(sv, program, h, table, hit, injected, syn, fin)
        data_paulis = []
        tables, weight1 = block.tables, block.weight1
        if not faulty.isdisjoint(block.guarded_uids):
            faults = _block_faults(block, program, table, faulty, injected)
            tables, weight1, data_paulis = _faulted_operators(block, program, faults)
        uid_m = int(program.uids[block.measure_pos])
        bit = sv.run_check_block(block, float(table[uid_m, DRAW_MEASURE]), tables, weight1)
        _, r, col = program.slots[block.measure_pos]
        syn[r, col] = bit
        for ch, q in data_paulis:
            sv.apply_pauli(ch, (q,))
        for s in block.sink:
            run_op(sv, program, s, table, hit, injected, syn, fin)
        run_op(sv, program, block.end, table, hit, injected, syn, fin)
        pos = block.end + 1
    return syn, fin


def run_shot(circuit: Circuit, params: NoiseParams, calibration: Optional[Frame], shot_seed: int,
             injected: Optional[dict[int, str]] = None, program: Optional[Program] = None,
             plan: Optional[dict[int, CheckBlock]] = None, fuse: bool = True) -> ShotRecord:
    """Initialise the code state, run every op with sampled noise, and return
    the frame-corrected record.  Deterministic in ``shot_seed``."""
    if program is None:
        program = Program.compile(circuit, params)
    if plan is None and fuse:
        plan = plan_check_blocks(program)
    table, init = draw_table(shot_seed, program)
    sv = StateVector(circuit.n_registers)
    initialize_codestate(sv, circuit.layout, init)
    syn, fin = execute_statevector(sv, program, table, injected, plan if fuse else None)
    return apply_frame(syn, fin, calibration, shot_seed)

"""Rotated surface code geometry.

Data qubits sit on a d x d grid and are numbered row-major from 1 (top-left)
to d^2 (bottom-right).  A face (i, j) is the plaquette whose top-left corner
is data qubit (i, j); faces run over i, j in [-1, d-1] so that the weight-2
boundary checks are faces hanging off the grid.  Faces with i + j odd are
X-type and faces with i + j even are Z-type; boundary faces are kept only on
the top/bottom rows (X-type) and the left/right columns (Z-type).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

# Placeholder in a CNOT schedule slot with no data qubit behind it.
WAIT = None

# Slot order over the plaquette corners.
X_CORNER_ORDER = ("BR", "BL", "TL", "TR")  # clockwise from the bottom right
Z_CORNER_ORDER = ("TR", "BR", "BL", "TL")  # clockwise from the top right

_CORNER_OFFSETS = {"TL": (0, 0), "TR": (0, 1), "BL": (1, 0), "BR": (1, 1)}


class DistanceError(ValueError):
    """Raised for code distances that are not odd integers >= 3."""


def check_distance(d: int) -> int:
    if isinstance(d, bool) or not isinstance(d, (int, np.integer)):
        raise DistanceError(f"code distance must be an integer, got {d!r}")
    d = int(d)
    if d < 3 or d % 2 == 0:
        raise DistanceError(f"code distance must be odd and >= 3, got {d}")
    return d


@dataclass(frozen=True)
class Stabilizer:
    kind: str  # "X" or "Z"
    index: int  # 1-based row within its kind
    face: tuple[int, int]
    data_supports: tuple[Optional[int], ...]  # CNOT slots, WAIT where no qubit
    ancilla_id: int  # register of this ancilla in the parallel circuit
    serial_order: int  # position in the serialized measurement sequence

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(sorted(q for q in self.data_supports if q is not WAIT))

    @property
    def weight(self) -> int:
        return len(self.support)

    @property
    def label(self) -> str:
        return f"{self.kind}{self.index}"

    def product(self) -> str:
        """Pauli product string, e.g. ``X2X3X7X8``."""
        return "".join(f"{self.kind}{q}" for q in self.support)


@dataclass(frozen=True)
class CodeLayout:
    distance: int
    x_stabilizers: tuple[Stabilizer, ...]
    z_stabilizers: tuple[Stabilizer, ...]
    logical_z_support: tuple[int, ...]
    logical_x_support: tuple[int, ...]

    @property
    def n_data(self) -> int:
        return self.distance**2

    @property
    def n_ancilla(self) -> int:
        return self.distance**2 - 1

    @property
    def n_physical(self) -> int:
        return 2 * self.distance**2 - 1

    @property
    def stabilizers(self) -> tuple[Stabilizer, ...]:
        """All stabilizers in serial (measurement) order."""
        return tuple(sorted(self.x_stabilizers + self.z_stabilizers, key=lambda s: s.serial_order))

    def data_coords(self, q: int) -> tuple[int, int]:
        return divmod(q - 1, self.distance)

    def check_matrix(self, kind: str) -> np.ndarray:
        """Binary (stabilizer x data qubit) incidence matrix for one kind."""
        stabs = self.x_stabilizers if kind == "X" else self.z_stabilizers
        h = np.zeros((len(stabs), self.n_data), dtype=np.uint8)
        for row, s in enumerate(stabs):
            h[row, [q - 1 for q in s.support]] = 1
        return h

    def table(self) -> str:
        """Stabilizer listing in the three-column Index / X / Z format."""
        width = max(len("X-stabilizer"), *(len(s.product()) for s in self.x_stabilizers)) + 2
        lines = [f"{'Index':>5}  {'X-stabilizer':<{width}}Z-stabilizer"]
        for sx, sz in zip(self.x_stabilizers, self.z_stabilizers):
            lines.append(f"{sx.index:>5}  {sx.product():<{width}}{sz.product()}")
        return "\n".join(lines)


def _qubit(d: int, r: int, c: int) -> Optional[int]:
    if 0 <= r < d and 0 <= c < d:
        return r * d + c + 1
    return WAIT


def _face_present(d: int, i: int, j: int) -> bool:
    interior_i = 0 <= i <= d - 2
    interior_j = 0 <= j <= d - 2
    if interior_i and interior_j:
        return True
    x_type = (i + j) % 2 == 1
    if interior_j and i in (-1, d - 1):
        return x_type
    if interior_i and j in (-1, d - 1):
        return not x_type
    return False


def _slots(d: int, face: tuple[int, int], order: tuple[str, ...]) -> tuple[Optional[int], ...]:
    i, j = face
    return tuple(_qubit(d, i + _CORNER_OFFSETS[c][0], j + _CORNER_OFFSETS[c][1]) for c in order)


def build_layout(d: int) -> CodeLayout:
    """Generate the distance-``d`` rotated surface code.

    X-type stabilizers are numbered in row-major order of their faces and
    Z-type stabilizers column by column with rows descending, which is the
    numbering of the d=5 stabilizer table.  The serial order runs through all
    X-type checks and then all Z-type checks in that numbering; with the
    clockwise CNOT orders this lets every check be delayed without collision.
    """
    d = check_distance(d)
    faces = [(i, j) for i in range(-1, d) for j in range(-1, d) if _face_present(d, i, j)]
    x_faces = sorted((f for f in faces if sum(f) % 2 == 1), key=lambda f: (f[0], f[1]))
    z_faces = sorted((f for f in faces if sum(f) % 2 == 0), key=lambda f: (f[1], -f[0]))
    n_data = d * d

    x_stabs = []
    for k, face in enumerate(x_faces):
        x_stabs.append(Stabilizer("X", k + 1, face, _slots(d, face, X_CORNER_ORDER), n_data + k, k))
    z_stabs = []
    offset = len(x_faces)
    for k, face in enumerate(z_faces):
        order = offset + k
        z_stabs.append(Stabilizer("Z", k + 1, face, _slots(d, face, Z_CORNER_ORDER), n_data + order, order))

    z_support, x_support = _logical_supports(d)
    return CodeLayout(d, tuple(x_stabs), tuple(z_stabs), z_support, x_support)


def _logical_supports(d: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    # X-type boundaries are the top and bottom rows, so a Z string must run
    # along a row to commute with them; X strings run down a column.
    z_support = tuple(range(1, d + 1))
    x_support = tuple(1 + r * d for r in range(d))
    return z_support, x_support


def logical_operators(layout: CodeLayout) -> tuple[tuple[int, ...], tuple[int, ...]]:
    return layout.logical_z_support, layout.logical_x_support


def cnot_schedule(s: Stabilizer) -> tuple[Optional[int], ...]:
    """Four CNOT slots of a check; boundary checks keep WAIT in empty corners."""
    return s.data_supports


def gf2_rank(m: np.ndarray) -> int:
    m = (np.array(m, dtype=np.uint8) & 1).copy()
    rank = 0
    rows, cols = m.shape
    for col in range(cols):
        pivot = next((r for r in range(rank, rows) if m[r, col]), None)
        if pivot is None:
            continue
        m[[rank, pivot]] = m[[pivot, rank]]
        for r in range(rows):
            if r != rank and m[r, col]:
                m[r] ^= m[rank]
        rank += 1
        if rank == rows:
            break
    return rank


def gf2_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """One solution x of a @ x = b over GF(2); raises if inconsistent."""
    a = np.array(a, dtype=np.uint8) & 1
    b = np.array(b, dtype=np.uint8) & 1
    rows, cols = a.shape
    aug = np.concatenate([a, b[:, None]], axis=1)
    pivots = []
    rank = 0
    for col in range(cols):
        pivot = next((r for r in range(rank, rows) if aug[r, col]), None)
        if pivot is None:
            continue
        aug[[rank, pivot]] = aug[[pivot, rank]]
        for r in range(rows):
            if r != rank and aug[r, col]:
                aug[r] ^= aug[rank]
        pivots.append(col)
        rank += 1
    if aug[rank:, -1].any():
        raise ValueError("linear system over GF(2) has no solution")
    x = np.zeros(cols, dtype=np.uint8)
    for r, col in enumerate(pivots):
        x[col] = aug[r, -1]
    return x


def destabilizer_supports(layout: CodeLayout, kind: str) -> list[tuple[int, ...]]:
    """For each check of ``kind``, data qubits of an opposite-type Pauli string
    that anticommutes with that check alone."""
    h = layout.check_matrix(kind)
    out = []
    for row in range(h.shape[0]):
        e = np.zeros(h.shape[0], dtype=np.uint8)
        e[row] = 1
        x = gf2_solve(h, e)
        out.append(tuple(int(q) + 1 for q in np.flatnonzero(x)))
    return out

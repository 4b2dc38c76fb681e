"""Detection events, the space-time matching graph and logical readout.

The matching graph is derived from the circuit itself: every single fault of
the noise model is pushed through the ideal Clifford circuit, and a fault
that lights up one or two detection nodes of a kind contributes a unit-weight
edge (to the boundary for one node).  Each edge remembers the data-qubit X
flips its fault leaves behind, so a matching translates directly into a
correction.  Hook errors and space-time diagonals are included this way
without hand-written rules.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .circuit import Circuit, build_serialized_circuit
from .frames import FaultEffects, enumerate_faults, propagate
from .layout import CodeLayout, build_layout
from .matching import BOUNDARY, min_weight_matching
from .noise import NoiseParams
from .shots import Program, ShotRecord


@dataclass(frozen=True, order=True)
class DetectionEvent:
    round: int
    stabilizer_index: int  # 1-based index within its kind
    kind: str  # "X" or "Z"


def _z_columns(layout: CodeLayout) -> list[int]:
    return [s.serial_order for s in layout.z_stabilizers]


def _x_columns(layout: CodeLayout) -> list[int]:
    return [s.serial_order for s in layout.x_stabilizers]


def event_layers(syndromes: np.ndarray, final_bits: np.ndarray, layout: CodeLayout) -> tuple[np.ndarray, np.ndarray]:
    """Boolean event arrays: Z-type (rounds + 1, n_z), X-type (rounds, n_x).

    Works on a single record or on a leading batch axis."""
    syn = np.asarray(syndromes, dtype=bool)
    fin = np.asarray(final_bits, dtype=bool)
    n = layout.n_data
    if syn.shape[-1] != len(layout.stabilizers) or fin.shape[-1] != n:
        raise ValueError(
            f"record shape {syn.shape}/{fin.shape} does not match a distance-{layout.distance} layout"
        )
    zs = syn[..., _z_columns(layout)]
    xs = syn[..., _x_columns(layout)]
    hz = layout.check_matrix("Z").astype(bool)
    virtual = (fin.astype(np.uint8) @ hz.T.astype(np.uint8)) % 2
    zs_full = np.concatenate([zs, virtual[..., None, :].astype(bool)], axis=-2)
    z_events = zs_full.copy()
    z_events[..., 1:, :] ^= zs_full[..., :-1, :]
    x_events = xs.copy()
    x_events[..., 1:, :] ^= xs[..., :-1, :]
    return z_events, x_events


def detection_events(shot: ShotRecord, layout: CodeLayout) -> list[DetectionEvent]:
    """Events from adjacent-round XOR (round 0 against the zero frame) plus
    a final Z layer recomputed from the data readout."""
    z_ev, x_ev = event_layers(shot.syndromes, shot.final_data_bits, layout)
    events = [DetectionEvent(int(r), int(k) + 1, "Z") for r, k in zip(*np.nonzero(z_ev))]
    events += [DetectionEvent(int(r), int(k) + 1, "X") for r, k in zip(*np.nonzero(x_ev))]
    return sorted(events, key=lambda e: (e.kind != "Z", e.round, e.stabilizer_index))


@dataclass
class SpaceTimeGraph:
    """Circuit-derived graph for one check kind; node ``n_nodes`` is the boundary."""

    kind: str
    n_layers: int
    n_checks: int
    adjacency: list[dict[int, int]]  # neighbour -> data-flip bitmask of the edge
    hyperedge_faults: int = 0
    conflicting_edges: int = 0
    _dist: Optional[np.ndarray] = field(default=None, repr=False)
    _flip: Optional[list] = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.n_layers * self.n_checks

    @property
    def boundary(self) -> int:
        return self.n_nodes

    def node(self, ev: DetectionEvent) -> int:
        return ev.round * self.n_checks + ev.stabilizer_index - 1

    def edges(self) -> list[tuple[int, int]]:
        return sorted((u, v) for u in range(len(self.adjacency)) for v in self.adjacency[u] if u < v)

    def _solve(self) -> None:
        # BFS from every node; event-to-event paths may not pass through the
        # boundary, so it is only ever a path end point
        n = self.n_nodes + 1
        dist = np.full((n, n), -1, dtype=np.int64)
        flip = [[0] * n for _ in range(n)]
        for src in range(n):
            dist[src, src] = 0
            queue = deque([src])
            while queue:
                u = queue.popleft()
                if u == self.boundary and u != src:
                    continue
                for v in sorted(self.adjacency[u]):
                    if dist[src, v] < 0:
                        dist[src, v] = dist[src, u] + 1
                        flip[src][v] = flip[src][u] ^ self.adjacency[u][v]
                        queue.append(v)
        self._dist = dist
        self._flip = flip

    def distance(self, u: int, v: int) -> int:
        if self._dist is None:
            self._solve()
        return int(self._dist[u, v])

    def path_flips(self, u: int, v: int) -> int:
        """Data-qubit X flips (bitmask, bit q-1 for qubit q) along the chosen path."""
        if self._flip is None:
            self._solve()
        return self._flip[u][v]


def _graph_from_effects(kind: str, layer_events: np.ndarray, final_flips: np.ndarray,
                        logical_mask: int = 0) -> SpaceTimeGraph:
    # a repeated node pair keeps its first flip mask; only variants that
    # disagree on the logical parity count as conflicts
    n_f, n_layers, n_checks = layer_events.shape
    n_nodes = n_layers * n_checks
    adjacency: list[dict[int, int]] = [dict() for _ in range(n_nodes + 1)]
    flat = layer_events.reshape(n_f, n_nodes)
    weights = 1 << np.arange(final_flips.shape[1], dtype=object)
    hyper = conflicts = 0
    for f in range(n_f):
        nodes = np.flatnonzero(flat[f])
        if len(nodes) == 0:
            continue
        if len(nodes) > 2:
            hyper += 1
            continue
        u = int(nodes[0])
        v = int(nodes[1]) if len(nodes) == 2 else n_nodes
        mask = int(sum(weights[final_flips[f]])) if final_flips[f].any() else 0
        if v in adjacency[u]:
            conflicts += bin((adjacency[u][v] ^ mask) & logical_mask).count("1") % 2
            continue
        adjacency[u][v] = mask
        adjacency[v][u] = mask
    return SpaceTimeGraph(kind, n_layers, n_checks, adjacency, hyper, conflicts)


@dataclass
class DecodingGraphs:
    z: SpaceTimeGraph
    x: SpaceTimeGraph
    layout: CodeLayout


def build_decoding_graphs(circuit: Circuit) -> DecodingGraphs:
    """Fault-derived space-time graphs for both check kinds of ``circuit``."""
    program = Program.compile(circuit, NoiseParams(0.0))
    # channels are attached independently of p, so the c = 0 program carries them all
    effects: FaultEffects = propagate(program, enumerate_faults(program))
    z_ev, x_ev = event_layers(effects.syndrome_flips, effects.final_flips, circuit.layout)
    logical_mask = sum(1 << (q - 1) for q in circuit.layout.logical_z_support)
    z_graph = _graph_from_effects("Z", z_ev, effects.final_flips, logical_mask)
    no_flip = np.zeros_like(effects.final_flips)
    x_graph = _graph_from_effects("X", x_ev, no_flip)
    return DecodingGraphs(z_graph, x_graph, circuit.layout)


@dataclass
class MatchingGraph:
    """Complete graph over the events of one kind plus the boundary."""

    events: list[DetectionEvent]
    nodes: list[int]
    weights: list[list[int]]
    boundary_weights: list[int]
    space_time: SpaceTimeGraph

    def edges(self) -> list[tuple[int, int, int]]:
        k = len(self.events)
        out = [(i, j, self.weights[i][j]) for i in range(k) for j in range(i + 1, k)]
        out += [(i, BOUNDARY, self.boundary_weights[i]) for i in range(k)]
        return out


_UNREACHABLE = 10**9


@lru_cache(maxsize=8)
def decoding_graphs(d: int, rounds: int) -> DecodingGraphs:
    """Graphs for the serialized distance-``d`` circuit, cached per (d, rounds)."""
    return build_decoding_graphs(build_serialized_circuit(build_layout(d), rounds))


def build_matching_graph(events: Iterable[DetectionEvent], layout: CodeLayout, rounds: int,
                         kind: str = "Z", graphs: Optional[DecodingGraphs] = None) -> MatchingGraph:
    """Weights are hop counts in the space-time graph; an odd event count is
    absorbed by the boundary.  Events of the other kind are ignored."""
    if graphs is None:
        graphs = decoding_graphs(layout.distance, rounds)
    graph = graphs.z if kind == "Z" else graphs.x
    evs = sorted((e for e in events if e.kind == kind), key=lambda e: (e.round, e.stabilizer_index))
    nodes = [graph.node(e) for e in evs]

    def w(u, v):
        d = graph.distance(u, v)
        return d if d >= 0 else _UNREACHABLE

    weights = [[0 if i == j else w(u, v) for j, v in enumerate(nodes)] for i, u in enumerate(nodes)]
    boundary = [w(u, graph.boundary) for u in nodes]
    return MatchingGraph(evs, nodes, weights, boundary, graph)


def mwpm(mg: MatchingGraph, method: str = "auto") -> list[tuple[int, int]]:
    return min_weight_matching(mg.weights, mg.boundary_weights, method=method)


@dataclass(frozen=True)
class Correction:
    data_qubit_flips: frozenset  # 1-based data qubits to flip in the X frame


def correction_from_pairing(mg: MatchingGraph, pairing) -> Correction:
    g = mg.space_time
    mask = 0
    for i, j in pairing:
        v = g.boundary if j == BOUNDARY else mg.nodes[j]
        mask ^= g.path_flips(mg.nodes[i], v)
    return Correction(frozenset(q + 1 for q in range(mask.bit_length()) if (mask >> q) & 1))


def logical_outcome(shot: ShotRecord, correction: Correction, layout: CodeLayout) -> int:
    """Z_L parity of the corrected final data bits; 1 means a logical flip."""
    parity = 0
    for q in layout.logical_z_support:
        parity ^= int(shot.final_data_bits[q - 1]) ^ (q in correction.data_qubit_flips)
    return parity


@dataclass
class DecodeResult:
    logical: int
    z_events: int
    x_events: int
    correction: Correction
    x_pairing: list


def decode_shot(shot: ShotRecord, graphs: DecodingGraphs, method: str = "auto") -> DecodeResult:
    events = detection_events(shot, graphs.layout)
    rounds = graphs.z.n_layers - 1
    zg = build_matching_graph(events, graphs.layout, rounds, "Z", graphs)
    corr = correction_from_pairing(zg, mwpm(zg, method))
    xg = build_matching_graph(events, graphs.layout, rounds, "X", graphs)
    x_pairing = mwpm(xg, method)
    return DecodeResult(logical_outcome(shot, corr, graphs.layout), len(zg.events), len(xg.events), corr, x_pairing)


def write_events(path: Path | str, shots: Iterable[ShotRecord], layout: CodeLayout) -> None:
    """CSV rows ``shot, kind, round, stabilizer_index`` (shot = its seed)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["shot", "kind", "round", "stabilizer_index"])
        for shot in shots:
            for e in detection_events(shot, layout):
                w.writerow([shot.shot_seed, e.kind, e.round, e.stabilizer_index])

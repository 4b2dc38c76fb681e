"""Minimum-weight perfect matching with an optional boundary.

Nodes 0..k-1 are detection events; each may be matched to another event or
to the boundary.  Ties are broken toward the lexicographically smallest
mate sequence (mate of node 0 first, the boundary counting as index k).
"""

from __future__ import annotations

from functools import lru_cache
from typing import Optional, Sequence

import networkx as nx

BOUNDARY = -1
EXACT_LIMIT = 12


class MatchingError(ValueError):
    pass


def _check(weights: Sequence[Sequence[int]], boundary: Optional[Sequence[int]]) -> int:
    k = len(weights)
    if any(len(row) != k for row in weights):
        raise MatchingError("weight matrix must be square")
    for i in range(k):
        for j in range(k):
            if weights[i][j] != weights[j][i]:
                raise MatchingError(f"weights not symmetric at ({i}, {j})")
    if boundary is None:
        if k % 2:
            raise MatchingError(f"{k} nodes and no boundary: no perfect matching exists")
    elif len(boundary) != k:
        raise MatchingError("boundary weights must have one entry per node")
    return k


def _mate_key(pairs: list[tuple[int, int]], k: int) -> tuple[int, ...]:
    mate = [0] * k
    for i, j in pairs:
        if j == BOUNDARY:
            mate[i] = k
        else:
            mate[i], mate[j] = j, i
    return tuple(mate)


def _normalize(pairs) -> list[tuple[int, int]]:
    out = []
    for i, j in pairs:
        if j != BOUNDARY and j < i:
            i, j = j, i
        out.append((i, j))
    return sorted(out, key=lambda p: (p[0], p[1] if p[1] != BOUNDARY else float("inf")))


def _exact(weights, boundary) -> list[tuple[int, int]]:
    k = len(weights)
    inf = float("inf")

    @lru_cache(maxsize=None)
    def best(mask: int):
        # (cost, pairs) for the nodes in mask; the lowest node decides first and
        # tries mates in increasing order with the boundary last
        if mask == 0:
            return 0, ()
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        result = (inf, ())
        j_mask = rest
        while j_mask:
            j = (j_mask & -j_mask).bit_length() - 1
            j_mask &= j_mask - 1
            sub_cost, sub = best(rest & ~(1 << j))
            cost = weights[i][j] + sub_cost
            if cost < result[0]:
                result = (cost, ((i, j),) + sub)
        if boundary is not None:
            sub_cost, sub = best(rest)
            cost = boundary[i] + sub_cost
            if cost < result[0]:
                result = (cost, ((i, BOUNDARY),) + sub)
        return result

    cost, pairs = best((1 << k) - 1)
    if cost == inf:
        raise MatchingError("no perfect matching exists")
    return list(pairs)


def _blossom(weights, boundary) -> list[tuple[int, int]]:
    # Exact integer perturbation: total = cost * K + sum_i mate(i) * base^(k-1-i),
    # minimised by max_weight_matching on (big - total) with max cardinality.
    k = len(weights)
    base = k + 1
    scale = base ** (k + 1)
    place = [base ** (k - 1 - i) for i in range(k)]
    g = nx.Graph()
    pair_terms = []
    for i in range(k):
        for j in range(i + 1, k):
            pair_terms.append((i, j, weights[i][j] * scale + j * place[i] + i * place[j]))
    if boundary is not None:
        for i in range(k):
            pair_terms.append((i, ("b", i), boundary[i] * scale + k * place[i]))
        for i in range(k):
            for j in range(i + 1, k):
                pair_terms.append((("b", i), ("b", j), 0))
    big = max((t for _, _, t in pair_terms), default=0) + 1
    for u, v, t in pair_terms:
        g.add_edge(u, v, weight=big - t)
    matching = nx.max_weight_matching(g, maxcardinality=True)
    pairs = []
    for u, v in matching:
        if isinstance(u, tuple) and isinstance(v, tuple):
            continue
        if isinstance(u, tuple):
            u, v = v, u
        pairs.append((u, BOUNDARY) if isinstance(v, tuple) else (u, v))
    covered = {i for p in pairs for i in p if i != BOUNDARY}
    if len(covered) != k:
        raise MatchingError("no perfect matching exists")
    return pairs


def min_weight_matching(weights: Sequence[Sequence[int]], boundary: Optional[Sequence[int]] = None,
                        method: str = "auto") -> list[tuple[int, int]]:
    """Minimum-weight perfect matching; pairs ``(i, j)`` or ``(i, BOUNDARY)``.

    ``method`` is "exact" (subset dynamic programming), "blossom" (networkx
    Edmonds blossom with an exact tie-break perturbation) or "auto"."""
    k = _check(weights, boundary)
    if k == 0:
        return []
    if method == "auto":
        method = "exact" if k <= EXACT_LIMIT else "blossom"
    if method == "exact":
        pairs = _exact(weights, boundary)
    elif method == "blossom":
        pairs = _blossom(weights, boundary)
    else:
        raise ValueError(f"unknown matching method {method!r}")
    return _normalize(pairs)


def matching_cost(pairs, weights, boundary=None) -> int:
    return sum(boundary[i] if j == BOUNDARY else weights[i][j] for i, j in pairs)


def mate_sequence(pairs, k: int) -> tuple[int, ...]:
    """Mate of every node in order, the boundary written as ``k``."""
    return _mate_key(pairs, k)

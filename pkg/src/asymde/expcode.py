"""Expander-code parities and bit-flipping decoders.

Duplicate edges cancel in pairs: a check sees left vertex ``v`` only if ``v``
hits it an odd number of times. Flip counters count those surviving edges; the
flip threshold stays ``> d / 2`` of the nominal degree, so every flip removes
at least one unsatisfied check.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import BitString, as_bits
from .expander import BipartiteGraph

__all__ = [
    "encode_parities",
    "ParityState",
    "BPResult",
    "bp_decode_restricted",
    "bp_decode_budgeted",
    "unsatisfied_profile",
    "BUDGET_SOFT",
    "BUDGET_HARD",
]

# net flips allowed freely in S_i below BUDGET_SOFT * k_i; never above BUDGET_HARD * k_i
BUDGET_SOFT = 19
BUDGET_HARD = 20


def encode_parities(x, g: BipartiteGraph) -> BitString:
    bits = as_bits(x)
    if bits.size != g.n_left:
        raise ValueError(f"string has {bits.size} bits, graph has {g.n_left} left vertices")
    return BitString(_parities(bits, g))


def _parities(bits: np.ndarray, g: BipartiteGraph) -> np.ndarray:
    left, right = g.odd_edges
    return (np.bincount(right, weights=bits[left], minlength=g.m_right).astype(np.int64) & 1).astype(np.uint8)


class ParityState:
    """Working string plus incrementally maintained check and counter state."""

    def __init__(self, g: BipartiteGraph, z, y):
        self.g = g
        self.z = as_bits(z).copy()
        self.x = as_bits(y).copy()
        if self.z.size != g.m_right:
            raise ValueError(f"parity vector has {self.z.size} bits, graph has {g.m_right} checks")
        if self.x.size != g.n_left:
            raise ValueError(f"string has {self.x.size} bits, graph has {g.n_left} left vertices")
        self._c_ptr, self._c_idx = g.check_adjacency
        self._l_ptr, self._l_idx = g.left_adjacency
        self.recount()
        self.flips = 0

    def recount(self) -> None:
        self.unsat = _parities(self.x, self.g) ^ self.z
        left, right = self.g.odd_edges
        self.counters = np.bincount(left, weights=self.unsat[right], minlength=self.g.n_left).astype(np.int64)
        self.total_unsat = int(self.unsat.sum())

    def is_candidate(self, v: int) -> bool:
        return 2 * self.counters[v] > self.g.d

    def candidates_in(self, vertices: np.ndarray) -> np.ndarray:
        return vertices[2 * self.counters[vertices] > self.g.d]

    def flip(self, v: int) -> np.ndarray:
        """Invert bit ``v``; return the left vertices whose counters went up."""
        checks = self._l_idx[self._l_ptr[v] : self._l_ptr[v + 1]]
        before = self.total_unsat
        self.x[v] ^= 1
        self.unsat[checks] ^= 1
        now = self.unsat[checks]
        self.total_unsat += int(2 * now.sum()) - checks.size
        if self.total_unsat >= before:
            raise AssertionError(f"flip of {v} did not reduce unsatisfied checks ({before} -> {self.total_unsat})")
        starts, ends = self._c_ptr[checks], self._c_ptr[checks + 1]
        lens = ends - starts
        idx = np.concatenate([self._c_idx[a:b] for a, b in zip(starts.tolist(), ends.tolist())])
        delta = np.repeat(np.where(now == 1, 1, -1), lens)
        np.add.at(self.counters, idx, delta)
        self.flips += 1
        return idx[delta > 0]

    def assert_consistent(self) -> None:
        unsat = self.unsat.copy()
        counters = self.counters.copy()
        self.recount()
        if not (np.array_equal(unsat, self.unsat) and np.array_equal(counters, self.counters)):
            raise AssertionError("incremental parity state diverged from recount")


@dataclass
class BPResult:
    x: BitString
    flips: int
    converged: bool
    unsatisfied: int

    @property
    def satisfied(self) -> bool:
        return self.unsatisfied == 0


def unsatisfied_profile(state: ParityState) -> tuple[int, int]:
    return state.total_unsat, int(state.counters.max()) if state.counters.size else 0


def _as_index_array(vertices, n: int) -> np.ndarray:
    arr = np.unique(np.asarray(list(vertices) if not isinstance(vertices, np.ndarray) else vertices, dtype=np.int64))
    if arr.size and (arr[0] < 0 or arr[-1] >= n):
        raise IndexError("vertex index out of range")
    return arr


def bp_decode_restricted(
    y,
    z,
    g: BipartiteGraph,
    allowed,
    max_flips: Optional[int] = None,
    check_every: int = 0,
) -> BPResult:
    """Flip the lowest-index allowed vertex with a strict majority of unsatisfied checks, until none is left.

    ``converged`` is False when ``max_flips`` ran out first.
    """
    state = ParityState(g, z, y)
    allowed = _as_index_array(allowed, g.n_left)
    mask = np.zeros(g.n_left, dtype=bool)
    mask[allowed] = True
    if max_flips is None:
        max_flips = state.total_unsat
    heap = state.candidates_in(allowed).tolist()  # sorted, hence already a heap
    while heap:
        v = heapq.heappop(heap)
        if not state.is_candidate(v):
            continue
        if state.flips >= max_flips:
            heapq.heappush(heap, v)
            break
        raised = state.flip(v)
        for u in np.unique(raised[mask[raised]]).tolist():
            if state.is_candidate(u):
                heapq.heappush(heap, u)
        if check_every and state.flips % check_every == 0:
            state.assert_consistent()
    converged = not any(state.is_candidate(v) for v in heap)
    return BPResult(BitString(state.x), state.flips, converged, state.total_unsat)


def bp_decode_budgeted(
    y,
    z,
    g: BipartiteGraph,
    subsets: Sequence,
    bounds: Sequence[int],
    check_every: int = 0,
) -> BPResult:
    """Bit flipping with a per-subset flip budget.

    While fewer than ``19 k_i`` bits of ``S_i`` are net-flipped, all of ``S_i``
    may flip; after that only bits this run already flipped may flip (back).
    A bit flipped twice counts as not flipped.
    """
    state = ParityState(g, z, y)
    n = g.n_left
    owner = np.full(n, -1, dtype=np.int64)
    groups = []
    for i, S in enumerate(subsets):
        S = _as_index_array(S, n)
        if (owner[S] >= 0).any():
            raise ValueError("subsets must be disjoint")
        owner[S] = i
        groups.append(S)
    soft = [BUDGET_SOFT * int(k) for k in bounds]
    if len(soft) != len(groups):
        raise ValueError("one bound per subset")
    net = [0] * len(groups)
    flipped = np.zeros(n, dtype=bool)
    cap = state.total_unsat

    def allowed(v: int) -> bool:
        i = owner[v]
        return i >= 0 and (net[i] < soft[i] or flipped[v])

    heap = sorted(np.concatenate([state.candidates_in(S) for S in groups]).tolist()) if groups else []
    while heap and state.flips < cap:
        v = heapq.heappop(heap)
        if not state.is_candidate(v) or not allowed(v):
            continue
        i = int(owner[v])
        raised = state.flip(v)
        was_open = net[i] < soft[i]
        flipped[v] = not flipped[v]
        net[i] += 1 if flipped[v] else -1
        if net[i] > BUDGET_HARD * bounds[i]:
            raise AssertionError(f"net flips in subset {i} exceeded {BUDGET_HARD}k_i")
        if not was_open and net[i] < soft[i]:
            # the subset just reopened: everything in it is eligible again
            for u in state.candidates_in(groups[i]).tolist():
                heapq.heappush(heap, u)
        for u in np.unique(raised[owner[raised] >= 0]).tolist():
            if state.is_candidate(u):
                heapq.heappush(heap, u)
        if check_every and state.flips % check_every == 0:
            state.assert_consistent()
    converged = not any(state.is_candidate(v) and allowed(v) for v in heap)
    return BPResult(BitString(state.x), state.flips, converged, state.total_unsat)

"""Random left-regular bipartite multigraphs, size planning, and expansion checks."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np

from .seeding import rng_for

__all__ = [
    "BipartiteGraph",
    "ExpanderPlan",
    "random_bipartite",
    "graph_from_seed",
    "plan_one_set",
    "plan_special",
    "verify_expansion_exact",
    "verify_expansion_restricted",
    "EnumerationBudgetExceeded",
    "TUNED_C_D",
    "TUNED_C_M",
    "TUNED_C_S",
    "SPECIAL_DEGREE",
]

TUNED_C_D = 2.0
TUNED_C_M = 4.0
TUNED_C_S = 2.0
SPECIAL_DEGREE = 10
DEFAULT_DELTA = 0.1
ENUMERATION_BUDGET = 10**7


class EnumerationBudgetExceeded(ValueError):
    pass


class BipartiteGraph:
    """Left vertex ``v`` has ``d`` ordered right endpoints ``edges[v]`` (repeats allowed)."""

    def __init__(self, n_left: int, m_right: int, d: int, edges):
        edges = np.array(edges, dtype=np.int64).reshape(n_left, d)
        if edges.size and (edges.min() < 0 or edges.max() >= m_right):
            raise ValueError("edge endpoint out of range")
        edges.flags.writeable = False
        self.n_left = int(n_left)
        self.m_right = int(m_right)
        self.d = int(d)
        self.edges = edges

    def __eq__(self, other) -> bool:
        if not isinstance(other, BipartiteGraph):
            return NotImplemented
        return (self.n_left, self.m_right, self.d) == (other.n_left, other.m_right, other.d) and bool(
            np.array_equal(self.edges, other.edges)
        )

    def __repr__(self) -> str:
        return f"BipartiteGraph(n={self.n_left}, m={self.m_right}, d={self.d})"

    def neighborhood(self, left: Iterable[int]) -> set:
        """Distinct right neighbours of a set of left vertices."""
        idx = np.fromiter(left, dtype=np.int64)
        return set(np.unique(self.edges[idx]).tolist()) if idx.size else set()

    @cached_property
    def odd_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """(left, right) pairs of odd multiplicity, i.e. the edges that survive XOR.

        Sorted by left vertex; this is what parity and flip counting see.
        """
        srt = np.sort(self.edges, axis=1)
        left = np.repeat(np.arange(self.n_left, dtype=np.int64), self.d)
        right = srt.ravel()
        if self.d == 1:
            return left, right
        # run-length parity of each (left, right) pair inside a row
        key = left * self.m_right + right
        starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
        counts = np.diff(np.r_[starts, key.size])
        keep = starts[counts % 2 == 1]
        return left[keep], right[keep]

    @cached_property
    def check_adjacency(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR over right vertices: ``indices[indptr[c]:indptr[c+1]]`` are the odd-edge left neighbours of c."""
        left, right = self.odd_edges
        order = np.argsort(right, kind="stable")
        indptr = np.zeros(self.m_right + 1, dtype=np.int64)
        np.add.at(indptr, right + 1, 1)
        np.cumsum(indptr, out=indptr)
        return indptr, left[order]

    @cached_property
    def left_adjacency(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR over left vertices of odd edges."""
        left, right = self.odd_edges
        indptr = np.zeros(self.n_left + 1, dtype=np.int64)
        np.add.at(indptr, left + 1, 1)
        np.cumsum(indptr, out=indptr)
        return indptr, right

    def dumps(self) -> str:
        lines = [f"{self.n_left} {self.m_right} {self.d}"]
        lines.extend(" ".join(map(str, row)) for row in self.edges.tolist())
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "BipartiteGraph":
        rows = [ln.split() for ln in text.strip().splitlines()]
        n, m, d = map(int, rows[0])
        if len(rows) - 1 != n:
            raise ValueError(f"expected {n} vertex lines, got {len(rows) - 1}")
        return cls(n, m, d, [[int(v) for v in r] for r in rows[1:]])


def random_bipartite(n: int, m: int, d: int, rng: np.random.Generator) -> BipartiteGraph:
    """Every one of the ``n * d`` endpoints uniform over ``[m]``, left vertex 0 first."""
    if min(n, m, d) < 1:
        raise ValueError("n, m, d must be positive")
    return BipartiteGraph(n, m, d, rng.integers(0, m, size=(n, d), dtype=np.int64))


def graph_from_seed(n: int, m: int, d: int, seed: int, *context) -> BipartiteGraph:
    return random_bipartite(n, m, d, rng_for(seed, "graph", n, m, d, *context))


@dataclass(frozen=True)
class ExpanderPlan:
    d: int
    m: int
    delta: float
    mode: str


def _ceil(x: float) -> int:
    return math.ceil(x - 1e-9)


def plan_one_set(
    s: int,
    k: int,
    mode: str = "tuned",
    c_d: float = TUNED_C_D,
    c_m: float = TUNED_C_M,
    delta: float = DEFAULT_DELTA,
) -> ExpanderPlan:
    """Degree and check count for one set of size ``s`` holding at most ``k`` errors."""
    if not 1 <= k <= s:
        raise ValueError(f"need 1 <= k <= s, got k={k}, s={s}")
    ratio = math.log2(2 * s / k)
    if mode == "tuned":
        d = max(4, _ceil(c_d * ratio))
        return ExpanderPlan(d, _ceil(c_m * d * k), delta, mode)
    if mode == "conservative":
        d = max(_ceil(1 / delta), _ceil(ratio))
        return ExpanderPlan(d, _ceil(2 * d * k * 2 ** (1 / delta)), delta, mode)
    raise ValueError(f"unknown mode {mode!r}")


def plan_special(k: int, delta: float = DEFAULT_DELTA, c_s: float = TUNED_C_S, mode: str = "tuned") -> ExpanderPlan:
    """Constant degree, ``m = C_s * d * k`` checks. ``delta`` only matters in conservative mode."""
    if k < 1:
        raise ValueError("k must be positive")
    if mode == "tuned":
        return ExpanderPlan(SPECIAL_DEGREE, _ceil(c_s * SPECIAL_DEGREE * k), delta, mode)
    if mode == "conservative":
        d = max(SPECIAL_DEGREE, _ceil(1 / delta))
        return ExpanderPlan(d, _ceil(2 * d * k * 2 ** (1 / delta)), delta, mode)
    raise ValueError(f"unknown mode {mode!r}")


# -- expansion verification -------------------------------------------------------------


def _neighbour_masks(g: BipartiteGraph, vertices: Sequence[int]) -> list[int]:
    masks = []
    for v in vertices:
        mask = 0
        for c in set(g.edges[v].tolist()):
            mask |= 1 << c
        masks.append(mask)
    return masks


def _first_violation(masks: list[int], sizes: Iterable[int], alpha: float, groups=None, caps=None) -> Optional[tuple]:
    """Search subsets (smallest first) for one with |N(R)| <= alpha |R|."""
    for r in sizes:
        limit = alpha * r
        if groups is None:
            combos = itertools.combinations(range(len(masks)), r)
        else:
            combos = _capped_combinations(groups, caps, r)
        for combo in combos:
            acc = 0
            for i in combo:
                acc |= masks[i]
            if acc.bit_count() <= limit:
                return combo
    return None


def _capped_combinations(groups: list[list[int]], caps: list[int], r: int):
    """All r-subsets of the union of ``groups`` with at most caps[i] from group i."""

    def split(i, remaining):
        if i == len(groups):
            if remaining == 0:
                yield ()
            return
        hi = min(caps[i], len(groups[i]), remaining)
        rest_cap = sum(min(c, len(gr)) for c, gr in zip(caps[i + 1 :], groups[i + 1 :]))
        for take in range(max(0, remaining - rest_cap), hi + 1):
            for tail in split(i + 1, remaining - take):
                yield (take,) + tail

    for counts in split(0, r):
        parts = [itertools.combinations(gr, c) for gr, c in zip(groups, counts)]
        for pick in itertools.product(*parts):
            yield tuple(itertools.chain.from_iterable(pick))


def _capped_count(group_sizes: Sequence[int], caps: Sequence[int], r: int) -> int:
    # coefficient of z^r in prod_i sum_{j <= cap_i} C(s_i, j) z^j
    poly = [1]
    for s, c in zip(group_sizes, caps):
        term = [math.comb(s, j) for j in range(min(c, s) + 1)]
        poly = [sum(poly[a] * term[b - a] for a in range(max(0, b - len(term) + 1), min(b, len(poly) - 1) + 1)) for b in range(len(poly) + len(term) - 1)]
    return poly[r] if r < len(poly) else 0


def verify_expansion_exact(
    g: BipartiteGraph,
    S: Iterable[int],
    r_lo: int,
    r_hi: int,
    alpha: float,
    budget: Optional[int] = ENUMERATION_BUDGET,
) -> bool:
    """True iff every R in S with r_lo <= |R| <= r_hi has more than ``alpha * |R|`` distinct neighbours."""
    S = sorted(set(int(v) for v in S))
    r_lo = max(r_lo, 1)
    r_hi = min(r_hi, len(S))
    if budget is not None and r_hi >= r_lo and math.comb(len(S), r_hi) > budget:
        raise EnumerationBudgetExceeded(f"C({len(S)}, {r_hi}) exceeds {budget}")
    return _first_violation(_neighbour_masks(g, S), range(r_lo, r_hi + 1), alpha) is None


def verify_expansion_restricted(
    g: BipartiteGraph,
    subsets: Sequence[Iterable[int]],
    caps: Sequence[int],
    r_lo: int,
    r_hi: int,
    alpha: float,
    budget: Optional[int] = ENUMERATION_BUDGET,
) -> bool:
    """Like :func:`verify_expansion_exact` over R in the union with |R & S_i| <= caps[i]."""
    groups = [sorted(set(int(v) for v in S)) for S in subsets]
    if len(groups) != len(caps):
        raise ValueError("one cap per subset")
    flat = [v for gr in groups for v in gr]
    if len(flat) != len(set(flat)):
        raise ValueError("subsets must be disjoint")
    sizes = [len(gr) for gr in groups]
    r_lo = max(r_lo, 1)
    r_hi = min(r_hi, sum(min(c, s) for c, s in zip(caps, sizes)))
    if r_hi < r_lo:
        return True
    if budget is not None:
        total = sum(_capped_count(sizes, caps, r) for r in range(r_lo, r_hi + 1))
        if total > budget:
            raise EnumerationBudgetExceeded(f"{total} restricted subsets exceed {budget}")
    masks = _neighbour_masks(g, flat)
    pos = {v: i for i, v in enumerate(flat)}
    local_groups = [[pos[v] for v in gr] for gr in groups]
    return _first_violation(masks, range(r_lo, r_hi + 1), alpha, local_groups, list(caps)) is None

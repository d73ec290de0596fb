"""Bit strings, subset specifications, error patterns and the counting baselines.

Bit order everywhere: bit ``b`` of a :class:`BitString` lives in byte ``b // 8``
at position ``b % 8``, least-significant bit first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "BitString",
    "SubsetSpec",
    "ErrorPattern",
    "entropy_H",
    "entropy_H1",
    "chi",
    "chi_band",
    "hamming_distance",
    "apply_errors",
    "sample_spec_instance",
    "edit_distance_at_most",
]

EXACT_BINOMIAL_LIMIT = 1 << 20


class BitString:
    """Immutable fixed-length bit vector backed by a read-only ``uint8`` array of 0/1."""

    __slots__ = ("_bits",)

    def __init__(self, bits):
        if isinstance(bits, BitString):
            arr = bits._bits
        else:
            arr = np.asarray(bits)
            if arr.ndim != 1:
                raise ValueError("BitString needs a 1-d sequence of bits")
            if arr.size and (arr.min() < 0 or arr.max() > 1):
                raise ValueError("bits must be 0 or 1")
            arr = arr.astype(np.uint8, copy=True)
            arr.flags.writeable = False
        self._bits = arr

    @classmethod
    def zeros(cls, n: int) -> "BitString":
        return cls(np.zeros(n, dtype=np.uint8))

    @classmethod
    def from_str(cls, s: str) -> "BitString":
        """Parse ``"0101"``; index 0 is the leftmost character."""
        return cls(np.frombuffer(s.encode("ascii"), dtype=np.uint8) - ord("0"))

    @classmethod
    def from_bytes(cls, data: bytes, length: int) -> "BitString":
        if len(data) != (length + 7) // 8:
            raise ValueError(f"expected {(length + 7) // 8} bytes for {length} bits, got {len(data)}")
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")[:length]
        return cls(bits)

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "BitString":
        return cls(rng.integers(0, 2, size=n, dtype=np.uint8))

    @property
    def bits(self) -> np.ndarray:
        """Read-only view of the bits."""
        return self._bits

    def to_bytes(self) -> bytes:
        return np.packbits(self._bits, bitorder="little").tobytes()

    def popcount(self) -> int:
        return int(self._bits.sum())

    def __len__(self) -> int:
        return int(self._bits.size)

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return BitString(self._bits[idx])
        if not -len(self) <= idx < len(self):
            raise IndexError(idx)
        return int(self._bits[idx])

    def __iter__(self):
        return iter(self._bits.tolist())

    def __xor__(self, other: "BitString") -> "BitString":
        other = as_bits(other)
        if other.size != self._bits.size:
            raise ValueError("XOR of BitStrings of different length")
        return BitString(self._bits ^ other)

    def __add__(self, other: "BitString") -> "BitString":
        """Concatenation."""
        return BitString(np.concatenate([self._bits, as_bits(other)]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitString):
            return NotImplemented
        return self._bits.size == other._bits.size and bool(np.array_equal(self._bits, other._bits))

    def __hash__(self) -> int:
        return hash((len(self), self.to_bytes()))

    def __repr__(self) -> str:
        if len(self) <= 64:
            return f"BitString('{''.join(map(str, self._bits.tolist()))}')"
        return f"BitString(len={len(self)}, weight={self.popcount()})"


def as_bits(x) -> np.ndarray:
    """Return the 0/1 ``uint8`` array behind ``x`` (BitString, array or sequence)."""
    if isinstance(x, BitString):
        return x.bits
    return np.asarray(x, dtype=np.uint8)


@dataclass(frozen=True)
class ErrorPattern:
    """Set of bit positions to invert."""

    flips: tuple = ()

    def __post_init__(self):
        flips = tuple(sorted({int(i) for i in self.flips}))
        if flips and flips[0] < 0:
            raise ValueError("negative flip index")
        object.__setattr__(self, "flips", flips)

    def __len__(self) -> int:
        return len(self.flips)


@dataclass(frozen=True)
class SubsetSpec:
    """The ``(S, s, k, t)`` description of where the differences may lie.

    ``subsets`` is ``None`` on Alice's side; Bob holds the actual index sets.
    Bounds must be sorted non-increasing. Zero bounds are representable here;
    the protocols additionally require ``k_i >= 1`` and ``s_i >= 2 k_i``.
    """

    n: int
    sizes: tuple
    bounds: tuple
    subsets: Optional[tuple] = None
    valid: bool = field(init=False)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        bounds = tuple(int(k) for k in self.bounds)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "bounds", bounds)
        if len(sizes) == 0:
            raise ValueError("need at least one subset")
        if len(sizes) != len(bounds):
            raise ValueError("sizes and bounds differ in length")
        for s, k in zip(sizes, bounds):
            if not 0 <= k <= s <= self.n or s < 1:
                raise ValueError(f"need 0 <= k <= s <= n, got k={k}, s={s}, n={self.n}")
        if any(a < b for a, b in zip(bounds, bounds[1:])):
            raise ValueError("bounds must be sorted non-increasing")
        if sum(sizes) > self.n:
            raise ValueError("subset sizes exceed n")
        if self.subsets is not None:
            subsets = tuple(np.array(sorted(int(i) for i in S), dtype=np.int64) for S in self.subsets)
            if len(subsets) != len(sizes):
                raise ValueError("number of subsets differs from number of sizes")
            seen = np.zeros(self.n, dtype=bool)
            for S, s in zip(subsets, sizes):
                if S.size != s or (S.size and (S[0] < 0 or S[-1] >= self.n)):
                    raise ValueError("subset size or range mismatch")
                if S.size != np.unique(S).size or seen[S].any():
                    raise ValueError("subsets must be disjoint sets")
                seen[S] = True
            for S in subsets:
                S.flags.writeable = False
            object.__setattr__(self, "subsets", subsets)
        object.__setattr__(self, "valid", all(s >= 2 * k for s, k in zip(sizes, bounds)))

    @property
    def t(self) -> int:
        return len(self.sizes)

    def public(self) -> "SubsetSpec":
        """The same spec with the index sets stripped (what Alice knows)."""
        return SubsetSpec(self.n, self.sizes, self.bounds)

    def union(self) -> np.ndarray:
        if self.subsets is None:
            raise ValueError("spec carries no subsets")
        return np.sort(np.concatenate(self.subsets))


# -- counting baselines ---------------------------------------------------------------


def _log2_int(v: int) -> float:
    if v <= 0:
        raise ValueError("log of non-positive")
    shift = max(v.bit_length() - 64, 0)
    return math.log2(v >> shift) + shift


def _log2_binom_sum(s: int, k: int) -> float:
    """log2 of sum_{j<=k} C(s, j)."""
    if k >= s:
        return float(s)
    if s <= EXACT_BINOMIAL_LIMIT:
        total, term = 0, 1
        for j in range(k + 1):
            total += term
            term = term * (s - j) // (j + 1)
        return _log2_int(total)
    # log-sum-exp over lgamma terms; only the terms near j = k matter.
    ln = [math.lgamma(s + 1) - math.lgamma(j + 1) - math.lgamma(s - j + 1) for j in range(max(0, k - 2000), k + 1)]
    top = max(ln)
    return (top + math.log(sum(math.exp(v - top) for v in ln))) / math.log(2)


def entropy_H(sizes: Sequence[int], bounds: Sequence[int]) -> float:
    """Bits needed to name one error pattern: sum_i log2(sum_{j<=k_i} C(s_i, j))."""
    if len(sizes) != len(bounds):
        raise ValueError("sizes and bounds differ in length")
    total = 0.0
    for s, k in zip(sizes, bounds):
        s, k = int(s), int(k)
        if k < 0 or k > s:
            raise ValueError(f"need 0 <= k <= s, got k={k}, s={s}")
        total += _log2_binom_sum(s, k)
    return total


def entropy_H1(s: int, k: int) -> float:
    return entropy_H([s], [k])


def chi_band(ratio: float, base: int = 10) -> int:
    """Index j >= 1 of the band [2^(base^(j-1)), 2^(base^j)) holding ``ratio``."""
    if base < 2:
        raise ValueError("base must be >= 2")
    if ratio < 2:
        raise ValueError(f"ratio {ratio} is below 2")
    # ratio in band j  <=>  base^(j-1) <= log2(ratio) < base^j
    e = math.log2(ratio)
    j, hi = 1, base
    while e >= hi:
        j += 1
        hi *= base
    return j


def chi(sizes: Sequence[int], bounds: Sequence[int], base: int = 10) -> int:
    """Number of bands occupied by the ratios s_i / k_i."""
    if len(sizes) != len(bounds):
        raise ValueError("sizes and bounds differ in length")
    return len({chi_band(s / k, base) for s, k in zip(sizes, bounds)})


# -- distances and error application --------------------------------------------------


def hamming_distance(x, y) -> int:
    a, b = as_bits(x), as_bits(y)
    if a.size != b.size:
        raise ValueError("length mismatch")
    return int(np.count_nonzero(a != b))


def apply_errors(x, pattern: ErrorPattern | Iterable[int]) -> BitString:
    bits = as_bits(x).copy()
    flips = pattern.flips if isinstance(pattern, ErrorPattern) else tuple(pattern)
    if flips:
        idx = np.asarray(flips, dtype=np.int64)
        if idx.min() < 0 or idx.max() >= bits.size:
            raise IndexError("error index out of range")
        np.bitwise_xor.at(bits, idx, 1)
    return BitString(bits)


def sample_spec_instance(
    spec: SubsetSpec,
    layout: str,
    rng: np.random.Generator,
    uniform_count: bool = False,
) -> tuple[SubsetSpec, ErrorPattern]:
    """Place disjoint subsets of the requested sizes and flips inside them.

    ``layout`` is ``random`` (uniform disjoint sets), ``contiguous`` (consecutive
    runs from 0) or ``interleaved`` (round-robin over a random offset). Exactly
    ``k_i`` flips land in ``S_i`` unless ``uniform_count``, where the count is
    uniform in ``[0, k_i]``.
    """
    n = spec.n
    total = sum(spec.sizes)
    if total > n:
        raise ValueError("subset sizes exceed n")
    if layout == "random":
        pool = rng.permutation(n)[:total]
        cuts = np.cumsum((0,) + spec.sizes)
        subsets = [pool[cuts[i] : cuts[i + 1]] for i in range(spec.t)]
    elif layout == "contiguous":
        cuts = np.cumsum((0,) + spec.sizes)
        subsets = [np.arange(cuts[i], cuts[i + 1]) for i in range(spec.t)]
    elif layout == "interleaved":
        start = int(rng.integers(0, n))
        order = (start + np.arange(n)) % n
        owner = _round_robin_owner(spec.sizes)
        subsets = [order[: owner.size][owner == i] for i in range(spec.t)]
    else:
        raise ValueError(f"unknown layout {layout!r}")
    flips = []
    for S, k in zip(subsets, spec.bounds):
        count = int(rng.integers(0, k + 1)) if uniform_count else k
        flips.extend(rng.choice(S, size=count, replace=False).tolist())
    full = SubsetSpec(n, spec.sizes, spec.bounds, tuple(subsets))
    return full, ErrorPattern(flips)


def _round_robin_owner(sizes: Sequence[int]) -> np.ndarray:
    remaining = list(sizes)
    owner = []
    while any(remaining):
        for i, r in enumerate(remaining):
            if r:
                owner.append(i)
                remaining[i] -= 1
    return np.asarray(owner, dtype=np.int64)


def _common_prefix(a: np.ndarray, b: np.ndarray, i: int, j: int) -> int:
    """Length of the longest common prefix of a[i:] and b[j:]."""
    limit = min(a.size - i, b.size - j)
    done, chunk = 0, 32
    while done < limit:
        c = min(chunk, limit - done)
        diff = np.flatnonzero(a[i + done : i + done + c] != b[j + done : j + done + c])
        if diff.size:
            return done + int(diff[0])
        done += c
        chunk *= 4
    return limit


def _as_symbols(x) -> np.ndarray:
    if isinstance(x, str):
        return np.frombuffer(x.encode("utf-8"), dtype=np.uint8)
    return as_bits(x)


def edit_distance_at_most(x, y, k: int) -> Optional[int]:
    """Levenshtein distance restricted to the diagonal band |i - j| <= k.

    Furthest-reaching diagonal form: for e = 0, 1, ... track the deepest row
    reachable on every diagonal with e edits. Returns ``None`` when the
    distance exceeds ``k``.
    """
    a, b = _as_symbols(x), _as_symbols(y)
    n, m = a.size, b.size
    target = m - n
    if abs(target) > k:
        return None
    NEG = -(1 << 60)
    offset = k + 1
    prev = [NEG] * (2 * k + 3)
    for e in range(k + 1):
        cur = [NEG] * (2 * k + 3)
        for d in range(-min(e, k), min(e, k) + 1):
            if e == 0:
                row = 0
            else:
                row = max(
                    prev[d + offset] + 1,  # substitution
                    prev[d + 1 + offset] + 1,  # deletion from a: diagonal d+1 -> d
                    prev[d - 1 + offset],  # insertion into a: diagonal d-1 -> d
                )
            if row < 0:
                continue
            row = min(row, n, m - d)
            if row + d < 0:
                continue
            row += _common_prefix(a, b, row, row + d)
            cur[d + offset] = row
        if cur[target + offset] >= n:
            return e
        prev = cur
    return None

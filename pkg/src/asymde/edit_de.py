"""One-round document exchange under edit distance.

Alice hashes x at L levels of halving blocks. Level 1 hashes go raw; each later
level is sent as special-setting Hamming sketches over the c bit planes of the
hash vector; a final RS code covers the level-L blocks. Bob rebuilds x level by
level: he hashes his current guess, corrects the hash vector, marks the blocks
whose hash disagrees, and re-matches those blocks against y.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import BitString, as_bits, edit_distance_at_most
from .hamming_de import (
    DEFAULT_TUNING,
    ProtocolId,
    Recovery,
    Sketch,
    SpecialParams,
    Stage,
    Tag,
    Tuning,
    special_decode,
    special_encode,
    special_params,
)
from .seeding import derive_key
from .syndrome import bits_to_symbols, deserialize_redundancy, rs_correct, rs_syndrome, serialize_redundancy, symbols_to_bits

__all__ = [
    "SmallKRegimeError",
    "EditParams",
    "LevelParams",
    "level_schedule",
    "level_bound",
    "BlockHasher",
    "hash_block",
    "Matching",
    "dp_match",
    "FinalLayout",
    "final_layout",
    "EditSketch",
    "alice_edit_sketch",
    "bob_edit_recover",
    "edit_adversary",
    "BAD_BLOCK_FACTOR",
    "FINAL_BUDGET_FACTOR",
]

BAD_BLOCK_FACTOR = 6  # abort when more than 6k blocks of a level disagree
FINAL_BUDGET_FACTOR = 8  # z_final corrects 8k level-L blocks
MIN_LAST_BLOCK = 8


class SmallKRegimeError(ValueError):
    """k is too small for the leveled protocol; the known fallback is Haeupler's random protocol."""


@dataclass(frozen=True)
class EditParams:
    c: int = 8
    c_prime: float = 1.0
    tuning: Tuning = DEFAULT_TUNING
    allow_small_k: bool = False

    def __post_init__(self):
        if not 4 <= self.c <= 64:
            raise ValueError("hash width c must be in [4, 64]")
        if self.c_prime <= 0:
            raise ValueError("c' must be positive")


@dataclass(frozen=True)
class LevelParams:
    level: int
    block: int
    count: int
    c: int

    def span(self, j: int, n: int) -> tuple[int, int]:
        start = j * self.block
        return start, min(start + self.block, n)


def level_schedule(n: int, k: int, c: int = 8) -> list[LevelParams]:
    """Blocks halve from level to level; the last level's blocks are about log2(n/k) bits, at least 8."""
    if k < 1:
        raise ValueError("k must be positive")
    if n < 24 * k:
        raise ValueError(f"need n >= 24k, got n={n}, k={k}")
    target = max(MIN_LAST_BLOCK, math.ceil(math.log2(n / k)))
    L = max(1, int(math.floor(math.log2(n / (3 * k * target)))))
    while L > 1 and n // (3 * 2**L * k) < target:
        L -= 1
    b_last = n // (3 * 2**L * k)
    out = []
    for i in range(1, L + 1):
        b = b_last * 2 ** (L - i)
        out.append(LevelParams(i, b, -(-n // b), c))
    return out


def level_bound(k: int, n: int, level: int, origin: int, c_prime: float = 1.0) -> int:
    """Bad-block bound for level-``level`` blocks descending from level ``origin``."""
    decay = math.ceil(k / 2 ** (0.9 * c_prime * (level - origin)))
    floor = math.ceil(k / math.log2(n / k) ** 3)
    return max(decay, floor, 1)


def _check_regime(n: int, k: int, params: EditParams) -> None:
    if not params.allow_small_k and k < math.log2(n / k):
        raise SmallKRegimeError(
            f"k={k} is below log2(n/k)={math.log2(n / k):.1f}; use Haeupler's random protocol for this regime"
        )


# -- hashing ----------------------------------------------------------------------------


class BlockHasher:
    """Keyed PRF of (level, block index, payload), truncated to c bits."""

    def __init__(self, seed: int, c: int):
        self.c = c
        self._base = hashlib.blake2b(key=derive_key(seed, "edit-hash"), digest_size=8)
        self._mask = (1 << c) - 1

    def __call__(self, level: int, index: int, payload: np.ndarray, block: int) -> int:
        h = self._base.copy()
        h.update(struct.pack(">HII", level, index, block))
        padded = np.zeros(block, dtype=np.uint8)
        padded[: payload.size] = payload
        h.update(np.packbits(padded, bitorder="little").tobytes())
        return int.from_bytes(h.digest(), "little") & self._mask

    def level_hashes(self, lv: LevelParams, x: np.ndarray, n: int) -> np.ndarray:
        return np.array([self(lv.level, j, x[slice(*lv.span(j, n))], lv.block) for j in range(lv.count)], dtype=np.int64)


def hash_block(level: int, index: int, payload, seed: int, c: int = 8, block: Optional[int] = None) -> int:
    bits = as_bits(payload)
    return BlockHasher(seed, c)(level, index, bits, bits.size if block is None else block)


# -- DP matching ------------------------------------------------------------------------


@dataclass(frozen=True)
class Matching:
    blocks: tuple
    x_starts: tuple
    y_starts: tuple
    cost: int

    def __len__(self) -> int:
        return len(self.blocks)


def shift_cost(x_starts: Sequence[int], y_starts: Sequence[int]) -> int:
    cost, prev = 0, 0
    for u, v in zip(x_starts, y_starts):
        cost += abs((v - u) - prev)
        prev = v - u
    return cost


def dp_match(
    blocks: Sequence[int],
    targets: Sequence[int],
    y,
    k: int,
    block: int,
    n: int,
    hash_fn: Callable[[int, np.ndarray], int],
) -> Matching:
    """Longest monotone matching of x-blocks into y with shift cost at most k.

    Block ``j`` sits at ``j * block`` in x (the last one may be short); it can
    match y at ``u'`` when ``hash_fn(j, y[u':u'+len_j]) == targets``. Both the
    block order and the y-starts must strictly increase. Since the cost bounds
    every prefix shift, only starts within ``k`` of the x-position are tried.
    """
    ybits = as_bits(y)
    blocks = [int(b) for b in blocks]
    if len(targets) != len(blocks):
        raise ValueError("one target hash per block")
    if any(a >= b for a, b in zip(blocks, blocks[1:])):
        raise ValueError("blocks must be strictly increasing")
    rows, shifts, ystarts = [], [], []
    for r, (j, want) in enumerate(zip(blocks, targets)):
        u = j * block
        length = min(block, n - u)
        for delta in range(-k, k + 1):
            v = u + delta
            if v < 0 or v + length > ybits.size:
                continue
            if hash_fn(j, ybits[v : v + length]) == want:
                rows.append(r)
                shifts.append(delta)
                ystarts.append(v)
    C = len(rows)
    if C == 0:
        return Matching((), (), (), 0)
    R = np.array(rows)
    D = np.array(shifts)
    Y = np.array(ystarts)
    budget = np.arange(k + 1)
    F = np.full((C, k + 1), -1, dtype=np.int64)  # best length ending at q with cost <= c
    back = np.full((C, k + 1), -1, dtype=np.int64)
    for q in range(C):
        F[q] = np.where(budget >= abs(D[q]), 1, -1)
        P = np.flatnonzero((R[:q] < R[q]) & (Y[:q] < Y[q]))
        if P.size == 0:
            continue
        step = np.abs(D[q] - D[P])
        idx = budget[None, :] - step[:, None]
        vals = np.where(idx >= 0, F[P[:, None], np.clip(idx, 0, None)], -1)
        best = vals.argmax(axis=0)
        top = vals[best, budget]
        better = (top >= 1) & (top + 1 > F[q])
        F[q] = np.where(better, top + 1, F[q])
        back[q] = np.where(better, P[best], -1)
    longest = int(F[:, k].max())
    if longest < 1:
        return Matching((), (), (), 0)
    # among longest matchings prefer the cheapest one
    c = int(np.flatnonzero(F.max(axis=0) == longest)[0])
    end = int(F[:, c].argmax())
    chain = []
    q = end
    while q >= 0:
        chain.append(q)
        p = int(back[q, c])
        if p >= 0:
            c -= abs(int(D[q]) - int(D[p]))
        q = p
    chain.reverse()
    mb = tuple(blocks[R[q]] for q in chain)
    xs = tuple(b * block for b in mb)
    ys = tuple(int(Y[q]) for q in chain)
    cost = shift_cost(xs, ys)
    if cost > k or any(a >= b for a, b in zip(ys, ys[1:])):
        raise AssertionError("matching violates monotonicity or cost budget")
    return Matching(mb, xs, ys, cost)


# -- final RS layout --------------------------------------------------------------------


@dataclass(frozen=True)
class FinalLayout:
    w: int
    per_block: int  # symbols per level-L block
    e: int  # symbol error budget

    def symbols(self, x: np.ndarray, lv: LevelParams):
        padded = np.zeros(lv.count * lv.block, dtype=np.uint8)
        padded[: x.size] = x
        rows = padded.reshape(lv.count, lv.block)
        wide = np.zeros((lv.count, self.per_block * self.w), dtype=np.uint8)
        wide[:, : lv.block] = rows
        return bits_to_symbols(wide.ravel(), self.w)

    def unpack(self, block_syms, lv: LevelParams, n: int) -> np.ndarray:
        wide = symbols_to_bits(block_syms).bits.reshape(lv.count, self.per_block * self.w)
        return wide[:, : lv.block].ravel()[:n]


def final_layout(lv: LevelParams, k: int) -> FinalLayout:
    """Cheapest width for an RS code correcting 8k whole level-L blocks."""
    best = None
    for w in range(4, 17):
        spb = -(-lv.block // w)
        e = FINAL_BUDGET_FACTOR * k * spb
        if (1 << w) - 1 < spb * lv.count + 2 * e:
            continue
        if best is None or spb * w < best.per_block * best.w:
            best = FinalLayout(w, spb, e)
    if best is None:
        raise ValueError("final RS code does not fit in GF(2^16)")
    return best


# -- sketch -----------------------------------------------------------------------------


@dataclass
class EditSketch:
    n: int
    k: int
    levels: list
    v1: np.ndarray
    planes: dict = field(default_factory=dict)  # level -> list of (parity BitString, redundancy bytes)
    final: bytes = b""

    def to_sketch(self) -> Sketch:
        sk = Sketch(ProtocolId.EDIT, self.n, len(self.levels))
        c = self.levels[0].c
        sk.add(Tag.HASHVEC, 1, ((self.v1[:, None] >> np.arange(c)) & 1).astype(np.uint8).ravel())
        for level in sorted(self.planes):
            for z, red in self.planes[level]:
                sk.add(Tag.LEVELSKETCH, level, np.concatenate([z.bits, BitString.from_bytes(red, 8 * len(red)).bits]))
        sk.add(Tag.FINAL, len(self.levels), BitString.from_bytes(self.final, 8 * len(self.final)))
        return sk

    def to_bytes(self) -> bytes:
        return self.to_sketch().to_bytes()

    @property
    def payload_bits(self) -> int:
        return self.to_sketch().payload_bits

    def size(self) -> int:
        return self.to_sketch().size()

    @classmethod
    def from_sketch(cls, sk: Sketch, k: int, params: EditParams = EditParams()) -> "EditSketch":
        if sk.protocol != ProtocolId.EDIT:
            raise ValueError("not an edit sketch")
        levels = level_schedule(sk.n, k, params.c)
        if len(levels) != sk.t:
            raise ValueError("level count does not match k")
        c = params.c
        (hv,) = sk.find(Tag.HASHVEC, 1)
        if len(hv) != levels[0].count * c:
            raise ValueError("level-1 hash vector has the wrong length")
        v1 = hv.bits.bits.reshape(levels[0].count, c).astype(np.int64) @ (np.int64(1) << np.arange(c))
        planes = {}
        for lv in levels[1:]:
            p = _level_special(sk.n, k, lv, params)
            segs = sk.find(Tag.LEVELSKETCH, lv.level)
            if len(segs) != c:
                raise ValueError(f"level {lv.level} needs {c} plane sketches")
            planes[lv.level] = [
                (BitString(s.bits.bits[: p.plan.m]), BitString(s.bits.bits[p.plan.m :]).to_bytes()) for s in segs
            ]
        (fin,) = sk.find(Tag.FINAL, len(levels))
        return cls(sk.n, k, levels, v1, planes, fin.bits.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes, k: int, params: EditParams = EditParams()) -> "EditSketch":
        return cls.from_sketch(Sketch.from_bytes(data), k, params)


def _level_bounds(n: int, k: int, level: int, params: EditParams) -> list[int]:
    return [level_bound(k, n, level, o, params.c_prime) for o in range(1, level)]


def _level_special(n: int, k: int, lv: LevelParams, params: EditParams) -> SpecialParams:
    total = sum(_level_bounds(n, k, lv.level, params))
    return special_params(lv.count, total, lv.count, tuning=params.tuning)


def _planes(v: np.ndarray, c: int) -> list[np.ndarray]:
    return [((v >> b) & 1).astype(np.uint8) for b in range(c)]


def alice_edit_sketch(x, k: int, seed: int, params: EditParams = EditParams()) -> EditSketch:
    bits = as_bits(x)
    n = bits.size
    _check_regime(n, k, params)
    levels = level_schedule(n, k, params.c)
    hasher = BlockHasher(seed, params.c)
    v1 = hasher.level_hashes(levels[0], bits, n)
    planes = {}
    for lv in levels[1:]:
        v = hasher.level_hashes(lv, bits, n)
        p = _level_special(n, k, lv, params)
        planes[lv.level] = [special_encode(pl, p, seed, "edit", lv.level) for pl in _planes(v, params.c)]
    last = levels[-1]
    layout = final_layout(last, k)
    final = serialize_redundancy(rs_syndrome(layout.symbols(bits, last), layout.e))
    return EditSketch(n, k, levels, v1, planes, final)


def _refill(xt: np.ndarray, filled: np.ndarray, m: Matching, lv: LevelParams, y: np.ndarray, n: int) -> None:
    for j, v in zip(m.blocks, m.y_starts):
        a, b = lv.span(j, n)
        xt[a:b] = y[v : v + (b - a)]
        filled[a:b] = True


def bob_edit_recover(y, k: int, sketch, seed: int, params: EditParams = EditParams(), trace: Optional[list] = None) -> Recovery:
    """Rebuild x from y and the sketch.

    ``trace`` (if given) receives one dict per level; from level 2 on it holds
    the working string, origins and hashes as they were before decoding, and
    the bad/matched counts once the level completes.
    """
    if isinstance(sketch, (bytes, bytearray)):
        sketch = EditSketch.from_bytes(bytes(sketch), k, params)
    elif isinstance(sketch, Sketch):
        sketch = EditSketch.from_sketch(sketch, k, params)
    ybits = as_bits(y)
    n = sketch.n
    _check_regime(n, k, params)
    levels = level_schedule(n, k, params.c)
    hasher = BlockHasher(seed, params.c)
    xt = np.zeros(n, dtype=np.uint8)
    filled = np.zeros(n, dtype=bool)  # bookkeeping only: unfilled bits hash as 0

    def match(lv: LevelParams, T: np.ndarray, v: np.ndarray) -> Matching:
        fn = lambda j, payload: hasher(lv.level, j, payload, lv.block)  # noqa: E731
        m = dp_match(T.tolist(), v[T].tolist(), ybits, k, lv.block, n, fn)
        _refill(xt, filled, m, lv, ybits, n)
        return m

    first = levels[0]
    T = np.arange(first.count)
    m = match(first, T, sketch.v1)
    origin = np.ones(first.count, dtype=np.int64)
    if trace is not None:
        trace.append({"level": 1, "bad": int(T.size), "matched": len(m)})
    for lv in levels[1:]:
        origin = origin[np.arange(lv.count) // 2]
        current = hasher.level_hashes(lv, xt, n)
        entry = {"level": lv.level, "xt_in": xt.copy(), "origins_in": origin.copy(), "hashes_in": current}
        if trace is not None:
            trace.append(entry)
        subsets = [np.flatnonzero(origin == o) for o in range(1, lv.level)]
        if sum(s.size for s in subsets) != lv.count:
            raise AssertionError(f"descendant sets do not partition level {lv.level}")
        bounds = _level_bounds(n, k, lv.level, params)
        p = _level_special(n, k, lv, params)
        v = np.zeros(lv.count, dtype=np.int64)
        for b, (plane, (z, red)) in enumerate(zip(_planes(current, params.c), sketch.planes[lv.level])):
            rec = special_decode(plane, z, red, subsets, bounds, p, seed, "edit", lv.level)
            if not rec.ok:
                return Recovery.fail(rec.stage, level=lv.level, plane=b)
            v |= rec.x.bits.astype(np.int64) << b
        T = np.flatnonzero(v != current)
        if T.size > BAD_BLOCK_FACTOR * k:
            return Recovery.fail(Stage.BAD_BLOCKS, level=lv.level, bad=int(T.size))
        origin[T] = lv.level
        m = match(lv, T, v)
        entry.update(bad=int(T.size), matched=len(m), origins=origin.copy())
    last = levels[-1]
    layout = final_layout(last, k)
    red, _ = deserialize_redundancy(sketch.final)
    data = rs_correct(layout.symbols(xt, last), red, layout.e)
    if data is None:
        return Recovery.fail(Stage.RS_FAILURE, level="final")
    return Recovery(BitString(layout.unpack(data, last, n)), detail={"filled": int(filled.sum())})


# -- adversary --------------------------------------------------------------------------


def edit_adversary(x, k: int, style: str, rng: np.random.Generator, kinds: Sequence[str] = ("ins", "del", "sub")) -> BitString:
    """Apply exactly k insert/delete/substitute operations.

    ``random`` spreads them over the string, ``clustered`` keeps them in a
    window of about 4k positions, ``prefix`` puts them at the front.
    """
    seq = list(as_bits(x).tolist())
    if k > len(seq):
        raise ValueError("k exceeds |x|")
    if style == "random":
        lo, hi = 0, len(seq)
    elif style == "clustered":
        width = min(len(seq), 4 * k + 1)
        lo = int(rng.integers(0, len(seq) - width + 1))
        hi = lo + width
    elif style == "prefix":
        lo, hi = 0, min(len(seq), 2 * k + 1)
    else:
        raise ValueError(f"unknown style {style!r}")
    for _ in range(k):
        op = kinds[int(rng.integers(0, len(kinds)))]
        if op != "ins" and not seq:
            op = "ins"
        top = min(hi, len(seq) + (op == "ins"))
        pos = int(rng.integers(lo, max(lo + 1, top)))
        pos = min(pos, len(seq) - (op != "ins"))
        if op == "ins":
            seq.insert(pos, int(rng.integers(0, 2)))
        elif op == "del":
            del seq[pos]
        elif op == "sub":
            seq[pos] ^= 1
        else:
            raise ValueError(f"unknown edit kind {op!r}")
    y = BitString(np.array(seq, dtype=np.uint8))
    if edit_distance_at_most(x, y, k) is None:
        raise AssertionError("adversary exceeded its edit budget")
    return y

"""Systematic Reed-Solomon codes over GF(2^w), used as syndrome sketches.

Codeword layout is ``data || redundancy``; ``data[0]`` is the highest-degree
coefficient. The generator polynomial has roots ``alpha^0 .. alpha^(2e-1)``
where ``alpha`` is the class of ``x`` modulo the width's primitive polynomial.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .core import BitString, as_bits

__all__ = [
    "PRIMITIVE_POLYS",
    "SymbolBlock",
    "GF",
    "gf",
    "width_for",
    "width_for_bits",
    "rs_syndrome",
    "rs_correct",
    "bits_to_symbols",
    "symbols_to_bits",
    "serialize_redundancy",
    "deserialize_redundancy",
]

# one fixed primitive polynomial per width; changing any of these changes every sketch
PRIMITIVE_POLYS = {
    4: 0x13,
    5: 0x25,
    6: 0x43,
    7: 0x89,
    8: 0x11D,
    9: 0x211,
    10: 0x409,
    11: 0x805,
    12: 0x1053,
    13: 0x201B,
    14: 0x4443,
    15: 0x8003,
    16: 0x1100B,
}
MIN_WIDTH, MAX_WIDTH = 4, 16


class GF:
    """Log/antilog arithmetic in GF(2^w)."""

    def __init__(self, w: int):
        if w not in PRIMITIVE_POLYS:
            raise ValueError(f"unsupported width {w}")
        self.w = w
        self.order = (1 << w) - 1
        poly = PRIMITIVE_POLYS[w]
        exp = np.zeros(2 * self.order + 2, dtype=np.int64)
        log = np.zeros(1 << w, dtype=np.int64)
        v = 1
        for i in range(self.order):
            exp[i] = v
            log[v] = i
            v <<= 1
            if v >> w:
                v ^= poly
        if v != 1:
            raise ValueError(f"polynomial {poly:#x} is not primitive")
        exp[self.order : 2 * self.order] = exp[: self.order]
        self.exp = exp
        self.log = log

    def mul(self, a, b):
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        out = self.exp[self.log[a] + self.log[b]]
        return np.where((a == 0) | (b == 0), 0, out)

    def scale(self, vec: np.ndarray, c: int) -> np.ndarray:
        if c == 0:
            return np.zeros_like(vec)
        out = self.exp[self.log[vec] + self.log[c]]
        return np.where(vec == 0, 0, out)

    def inv(self, a: int) -> int:
        if a == 0:
            raise ZeroDivisionError("inverse of zero")
        return int(self.exp[self.order - self.log[a]])

    def pow_alpha(self, e) -> np.ndarray:
        return self.exp[np.mod(e, self.order)]

    def poly_eval(self, coeffs_low_first: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Evaluate sum coeffs[j] x^j at each point (Horner)."""
        acc = np.zeros(points.shape, dtype=np.int64)
        for c in coeffs_low_first[::-1].tolist():
            acc = self.mul(acc, points) ^ c
        return acc


@lru_cache(maxsize=None)
def gf(w: int) -> GF:
    return GF(w)


@dataclass(frozen=True)
class SymbolBlock:
    w: int
    symbols: np.ndarray

    def __post_init__(self):
        if not MIN_WIDTH <= self.w <= MAX_WIDTH:
            raise ValueError(f"width must be in [{MIN_WIDTH}, {MAX_WIDTH}]")
        arr = np.array(self.symbols, dtype=np.int64).ravel()
        if arr.size and (arr.min() < 0 or arr.max() >> self.w):
            raise ValueError(f"symbol outside GF(2^{self.w})")
        arr.flags.writeable = False
        object.__setattr__(self, "symbols", arr)

    def __len__(self) -> int:
        return int(self.symbols.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SymbolBlock):
            return NotImplemented
        return self.w == other.w and bool(np.array_equal(self.symbols, other.symbols))

    def __hash__(self) -> int:
        return hash((self.w, self.symbols.tobytes()))


def width_for(n_symbols: int, e: int) -> int:
    """Smallest width whose RS length bound fits ``n_symbols + 2e``."""
    for w in range(MIN_WIDTH, MAX_WIDTH + 1):
        if (1 << w) - 1 >= n_symbols + 2 * e:
            return w
    raise ValueError(f"{n_symbols} symbols plus {2 * e} redundancy exceed GF(2^{MAX_WIDTH})")


def width_for_bits(n_bits: int, e: int) -> int:
    """Smallest width w with 2^w - 1 >= ceil(n_bits / w) + 2e."""
    for w in range(MIN_WIDTH, MAX_WIDTH + 1):
        if (1 << w) - 1 >= -(-n_bits // w) + 2 * e:
            return w
    raise ValueError(f"{n_bits} bits with budget {e} exceed GF(2^{MAX_WIDTH})")


def bits_to_symbols(x, w: int) -> SymbolBlock:
    """Symbol j holds bits j*w .. j*w+w-1, least significant first; the tail is zero-padded."""
    bits = as_bits(x)
    count = -(-bits.size // w)
    padded = np.zeros(count * w, dtype=np.int64)
    padded[: bits.size] = bits
    weights = np.int64(1) << np.arange(w, dtype=np.int64)
    return SymbolBlock(w, padded.reshape(count, w) @ weights if count else np.zeros(0, dtype=np.int64))


def symbols_to_bits(block: SymbolBlock, length: Optional[int] = None) -> BitString:
    syms = block.symbols
    bits = ((syms[:, None] >> np.arange(block.w, dtype=np.int64)) & 1).astype(np.uint8).ravel()
    if length is not None:
        if length > bits.size:
            raise ValueError("length exceeds symbol capacity")
        bits = bits[:length]
    return BitString(bits)


@lru_cache(maxsize=256)
def _generator(w: int, n_parity: int) -> np.ndarray:
    """Monic generator, highest degree first: prod_{i < n_parity} (x - alpha^i)."""
    field = gf(w)
    g = np.array([1], dtype=np.int64)
    for i in range(n_parity):
        root = int(field.exp[i])
        nxt = np.zeros(g.size + 1, dtype=np.int64)
        nxt[:-1] = g
        nxt[1:] ^= field.scale(g, root)
        g = nxt
    g.flags.writeable = False
    return g


def _check_length(n_data: int, e: int, w: int) -> None:
    if e < 0:
        raise ValueError("error budget must be non-negative")
    if n_data + 2 * e > (1 << w) - 1:
        raise ValueError(f"{n_data} data + {2 * e} redundancy symbols exceed length bound {(1 << w) - 1}")


def rs_syndrome(data: SymbolBlock, e: int) -> SymbolBlock:
    """The 2e redundancy symbols of ``data`` (minimum distance 2e + 1)."""
    _check_length(len(data), e, data.w)
    n_par = 2 * e
    if n_par == 0:
        return SymbolBlock(data.w, np.zeros(0, dtype=np.int64))
    field = gf(data.w)
    gen = _generator(data.w, n_par)[1:]
    reg = np.zeros(n_par, dtype=np.int64)
    for d in data.symbols.tolist():
        fb = d ^ int(reg[0])
        reg[:-1] = reg[1:]
        reg[-1] = 0
        if fb:
            reg ^= field.scale(gen, fb)
    return SymbolBlock(data.w, reg)


def _syndromes(field: GF, codeword: np.ndarray, n_par: int) -> np.ndarray:
    # S_j = c(alpha^j), codeword[0] is the highest-degree coefficient
    points = field.exp[np.arange(n_par)]
    acc = np.zeros(n_par, dtype=np.int64)
    for c in codeword.tolist():
        acc = field.mul(acc, points) ^ c
    return acc


def _berlekamp_massey(field: GF, synd: np.ndarray) -> np.ndarray:
    """Error locator Lambda, lowest degree first."""
    n = synd.size
    lam = np.zeros(n + 1, dtype=np.int64)
    lam[0] = 1
    prev = lam.copy()
    L, shift, b = 0, 1, 1
    for r in range(n):
        disc = int(synd[r])
        if L:
            disc ^= int(np.bitwise_xor.reduce(field.mul(lam[1 : L + 1], synd[r - L : r][::-1])))
        if disc == 0:
            shift += 1
            continue
        coef = int(field.mul(disc, field.inv(b)))
        upd = lam.copy()
        upd[shift:] ^= field.scale(prev[: n + 1 - shift], coef)
        if 2 * L <= r:
            prev = lam
            L = r + 1 - L
            b = disc
            shift = 1
        else:
            shift += 1
        lam = upd
    return lam[: L + 1]


def rs_correct(corrupted: SymbolBlock, redundancy: SymbolBlock, e: int) -> Optional[SymbolBlock]:
    """Decode ``corrupted || redundancy``; return the data part, or None on decode failure.

    Any pattern of at most ``e`` symbol errors anywhere in the codeword is corrected.
    """
    w = corrupted.w
    if redundancy.w != w or len(redundancy) != 2 * e:
        raise ValueError("redundancy does not match width and budget")
    _check_length(len(corrupted), e, w)
    k = len(corrupted)
    if e == 0:
        return corrupted
    field = gf(w)
    code = np.concatenate([corrupted.symbols, redundancy.symbols])
    N = code.size
    synd = _syndromes(field, code, 2 * e)
    if not synd.any():
        return corrupted
    lam = _berlekamp_massey(field, synd)
    nerr = lam.size - 1
    if nerr > e:
        return None
    # position i carries x^(N-1-i); it is in error iff Lambda(alpha^-(N-1-i)) == 0
    degrees = N - 1 - np.arange(N)
    inv_points = field.pow_alpha(-degrees)
    where = np.flatnonzero(field.poly_eval(lam, inv_points) == 0)
    if where.size != nerr:
        return None
    omega = np.zeros(2 * e, dtype=np.int64)
    for j, c in enumerate(lam.tolist()):
        if c:
            omega[j:] ^= field.scale(synd[: 2 * e - j], c)
    # formal derivative in characteristic 2 keeps odd-degree terms
    dlam = lam[1::2]
    xinv = inv_points[where]
    xinv_sq = field.mul(xinv, xinv)
    num = field.mul(field.pow_alpha(degrees[where]), field.poly_eval(omega, xinv))
    den = field.poly_eval(dlam, xinv_sq)
    if (den == 0).any():
        return None
    mags = field.mul(num, field.exp[field.order - field.log[den]])
    fixed = code.copy()
    fixed[where] ^= mags
    if _syndromes(field, fixed, 2 * e).any():
        return None
    return SymbolBlock(w, fixed[:k])


def serialize_redundancy(block: SymbolBlock) -> bytes:
    """w (1 byte), symbol count (u32 big-endian), then the symbols packed w bits each."""
    return struct.pack(">BI", block.w, len(block)) + symbols_to_bits(block).to_bytes()


def deserialize_redundancy(data: bytes) -> tuple[SymbolBlock, int]:
    """Parse one redundancy record; also return the number of bytes consumed."""
    w, count = struct.unpack_from(">BI", data, 0)
    nbytes = math.ceil(count * w / 8)
    body = data[5 : 5 + nbytes]
    if len(body) != nbytes:
        raise ValueError("truncated redundancy record")
    bits = BitString.from_bytes(body, count * w)
    return bits_to_symbols(bits, w) if count else SymbolBlock(w, np.zeros(0, dtype=np.int64)), 5 + nbytes

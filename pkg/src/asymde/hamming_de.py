"""Document exchange for Hamming errors when only Bob knows where errors may be.

Alice sees the string ``x`` and the public sizes/bounds; Bob sees ``y`` and the
subsets themselves. Alice draws each expander from the shared seed and the
public parameters alone, so the same graph works for every subset family
with high probability over the seed.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import BitString, SubsetSpec, as_bits, chi, chi_band
from .expander import (
    TUNED_C_D,
    TUNED_C_M,
    TUNED_C_S,
    ExpanderPlan,
    graph_from_seed,
    plan_one_set,
    plan_special,
)
from .expcode import bp_decode_budgeted, bp_decode_restricted, encode_parities
from .syndrome import (
    bits_to_symbols,
    deserialize_redundancy,
    rs_correct,
    rs_syndrome,
    serialize_redundancy,
    symbols_to_bits,
    width_for_bits,
)

__all__ = [
    "C_GENERAL",
    "Tag",
    "ProtocolId",
    "Stage",
    "Segment",
    "Sketch",
    "Recovery",
    "Tuning",
    "IterationRecord",
    "ProtocolPlan",
    "plan_general",
    "alice_one_set",
    "bob_one_set",
    "alice_general",
    "bob_general",
    "group_by_chi",
    "alice_chi",
    "bob_chi",
    "special_k_prime",
    "alice_special",
    "bob_special",
    "EccPlan",
    "ecc_plan",
    "ecc_encode",
    "ecc_decode",
    "two_sided_wrap",
]

C_GENERAL = 10
MAGIC = b"ADE1"
VERSION = 1
_HEADER = struct.Struct(">4sHBQH")
_SEG_HEADER = struct.Struct(">BHI")


class Tag(enum.IntEnum):
    PARITY = 1
    SYNDROME = 2
    HASH = 3
    HASHVEC = 4
    LEVELSKETCH = 5
    FINAL = 6


class ProtocolId(enum.IntEnum):
    ONE_SET = 1
    GENERAL = 2
    CHI = 3
    SPECIAL = 4
    ECC = 5
    EDIT = 6


class Stage(str, enum.Enum):
    """Closed set of failure labels."""

    DECODE_INCOMPLETE = "decode-incomplete"
    PARITY_MISMATCH = "parity-mismatch"
    RS_FAILURE = "rs-failure"
    BAD_BLOCKS = "too-many-bad-blocks"
    WRONG_OUTPUT = "wrong-output"


@dataclass(frozen=True)
class Segment:
    tag: int
    iteration: int
    bits: BitString

    def __len__(self) -> int:
        return len(self.bits)


@dataclass
class Sketch:
    protocol: int
    n: int
    t: int
    segments: list = field(default_factory=list)
    version: int = VERSION

    def add(self, tag: int, iteration: int, bits) -> None:
        self.segments.append(Segment(int(tag), int(iteration), bits if isinstance(bits, BitString) else BitString(bits)))

    @property
    def payload_bits(self) -> int:
        return sum(len(s) for s in self.segments)

    @property
    def header_bits(self) -> int:
        return 8 * (_HEADER.size + _SEG_HEADER.size * len(self.segments))

    def size(self) -> int:
        """Bits on the wire: payload plus framing."""
        return self.payload_bits + self.header_bits

    def find(self, tag: int, iteration: Optional[int] = None) -> list:
        return [s for s in self.segments if s.tag == tag and (iteration is None or s.iteration == iteration)]

    def to_bytes(self) -> bytes:
        out = bytearray(_HEADER.pack(MAGIC, self.version, self.protocol, self.n, self.t))
        for s in self.segments:
            out += _SEG_HEADER.pack(s.tag, s.iteration, len(s.bits))
            out += s.bits.to_bytes()
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Sketch":
        if len(data) < _HEADER.size:
            raise ValueError("truncated sketch header")
        magic, version, protocol, n, t = _HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        if version != VERSION:
            raise ValueError(f"unsupported sketch version {version}")
        sk = cls(protocol, n, t, version=version)
        pos = _HEADER.size
        while pos < len(data):
            if pos + _SEG_HEADER.size > len(data):
                raise ValueError("truncated segment header")
            tag, it, nbits = _SEG_HEADER.unpack_from(data, pos)
            pos += _SEG_HEADER.size
            nbytes = -(-nbits // 8)
            if pos + nbytes > len(data):
                raise ValueError("truncated segment payload")
            sk.add(tag, it, BitString.from_bytes(data[pos : pos + nbytes], nbits))
            pos += nbytes
        return sk


@dataclass
class Recovery:
    """Bob's output: the recovered string, or the stage that failed."""

    x: Optional[BitString]
    stage: Optional[Stage] = None
    detail: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.x is not None

    @classmethod
    def fail(cls, stage: Stage, **detail) -> "Recovery":
        return cls(None, stage, detail)


@dataclass(frozen=True)
class Tuning:
    c_d: float = TUNED_C_D
    c_m: float = TUNED_C_M
    c_s: float = TUNED_C_S
    mode: str = "tuned"

    def one_set(self, s: int, k: int) -> ExpanderPlan:
        return plan_one_set(s, k, mode=self.mode, c_d=self.c_d, c_m=self.c_m)

    def special(self, k: int) -> ExpanderPlan:
        return plan_special(k, c_s=self.c_s, mode=self.mode)


DEFAULT_TUNING = Tuning()


# -- planning ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IterationRecord:
    active: int  # prefix length i: subsets 1..i are decoded at this step
    k_prev: int  # k' before the step
    k_target: int  # k'' after the step
    s_active: int
    k_plan: int
    plan: ExpanderPlan


@dataclass(frozen=True)
class ProtocolPlan:
    n: int
    iterations: tuple
    final_s: int
    final_k: int
    final: ExpanderPlan

    @property
    def sketch_bits(self) -> int:
        return sum(r.plan.m for r in self.iterations) + self.final.m


def _check_public(sizes: Sequence[int], bounds: Sequence[int], n: Optional[int] = None) -> tuple[tuple, tuple]:
    sizes = tuple(int(s) for s in sizes)
    bounds = tuple(int(k) for k in bounds)
    if not sizes or len(sizes) != len(bounds):
        raise ValueError("need equal-length, non-empty sizes and bounds")
    if any(k < 1 for k in bounds):
        raise ValueError("every bound must be at least 1")
    if any(s < 2 * k for s, k in zip(sizes, bounds)):
        raise ValueError("every subset needs s_i >= 2 k_i")
    if any(a < b for a, b in zip(bounds, bounds[1:])):
        raise ValueError("bounds must be sorted non-increasing")
    if n is not None and sum(sizes) > n:
        raise ValueError("subset sizes exceed n")
    return sizes, bounds


def plan_general(sizes: Sequence[int], bounds: Sequence[int], n: int, tuning: Tuning = DEFAULT_TUNING) -> ProtocolPlan:
    """Replay Alice's iteration schedule; depends only on public values."""
    sizes, bounds = _check_public(sizes, bounds, n)
    t = len(sizes)
    iterations = []
    done, k_prev = 0, 0  # i' and k'
    while done <= t - 2:
        hit = None
        for i in range(done + 1, t):  # 1-based prefix end, never the last subset
            pref = k_prev + sum(bounds[done:i])
            k_target = C_GENERAL * sum(bounds[i:])
            if pref > k_target:
                hit = (i, pref, k_target)
                break
        if hit is None:
            break
        i, pref, k_target = hit
        s_active = sum(sizes[:i])
        k_plan = min(pref, s_active)
        iterations.append(IterationRecord(i, k_prev, k_target, s_active, k_plan, tuning.one_set(s_active, k_plan)))
        done, k_prev = i, k_target
    s_final = sum(sizes)
    k_final = min(k_prev + sum(bounds[done:]), s_final)
    return ProtocolPlan(n, tuple(iterations), s_final, k_final, tuning.one_set(s_final, k_final))


# -- one-set and general protocols ------------------------------------------------------


def _stage_graph(n: int, plan: ExpanderPlan, seed: int, stage: int):
    return graph_from_seed(n, plan.m, plan.d, seed, "hamming", stage)


def _final_stage_id(plan: ProtocolPlan) -> int:
    return len(plan.iterations) + 1


def _general_segments(sk: Sketch, x: np.ndarray, plan: ProtocolPlan, seed: int) -> None:
    for idx, rec in enumerate(plan.iterations, start=1):
        sk.add(Tag.PARITY, idx, encode_parities(x, _stage_graph(x.size, rec.plan, seed, idx)))
    last = _final_stage_id(plan)
    sk.add(Tag.PARITY, last, encode_parities(x, _stage_graph(x.size, plan.final, seed, last)))


def alice_general(x, sizes, bounds, seed: int, tuning: Tuning = DEFAULT_TUNING, protocol: Optional[int] = None) -> Sketch:
    """One parity segment per planned iteration plus the final stage."""
    bits = as_bits(x)
    plan = plan_general(sizes, bounds, bits.size, tuning)
    if protocol is None:
        protocol = ProtocolId.ONE_SET if len(plan.iterations) == 0 and len(tuple(sizes)) == 1 else ProtocolId.GENERAL
    sk = Sketch(int(protocol), bits.size, len(tuple(sizes)))
    _general_segments(sk, bits, plan, seed)
    return sk


def alice_one_set(x, s: int, k: int, seed: int, tuning: Tuning = DEFAULT_TUNING) -> Sketch:
    return alice_general(x, (s,), (k,), seed, tuning)


def _segment_bits(sketch: Sketch, tag: int, iteration: int, expected: int) -> BitString:
    found = sketch.find(tag, iteration)
    if len(found) != 1 or len(found[0]) != expected:
        raise ValueError(f"sketch has no {expected}-bit segment for tag {tag}, iteration {iteration}")
    return found[0].bits


def bob_general(y, spec: SubsetSpec, sketch: Sketch, seed: int, tuning: Tuning = DEFAULT_TUNING) -> Recovery:
    """Decode each planned prefix to a fixpoint, then the final one-set stage over all subsets."""
    if spec.subsets is None:
        raise ValueError("Bob needs the subsets")
    work = as_bits(y)
    if work.size != sketch.n or spec.t != sketch.t:
        raise ValueError("sketch does not match the instance")
    plan = plan_general(spec.sizes, spec.bounds, work.size, tuning)
    flips = 0
    for idx, rec in enumerate(plan.iterations, start=1):
        g = _stage_graph(work.size, rec.plan, seed, idx)
        z = _segment_bits(sketch, Tag.PARITY, idx, rec.plan.m)
        allowed = np.concatenate(spec.subsets[: rec.active])
        res = bp_decode_restricted(work, z, g, allowed)
        flips += res.flips
        if not res.converged:
            return Recovery.fail(Stage.DECODE_INCOMPLETE, iteration=idx)
        work = res.x.bits
    last = _final_stage_id(plan)
    g = _stage_graph(work.size, plan.final, seed, last)
    z = _segment_bits(sketch, Tag.PARITY, last, plan.final.m)
    res = bp_decode_restricted(work, z, g, spec.union())
    flips += res.flips
    if not res.converged:
        return Recovery.fail(Stage.DECODE_INCOMPLETE, iteration=last)
    if not res.satisfied:
        return Recovery.fail(Stage.PARITY_MISMATCH, iteration=last, unsatisfied=res.unsatisfied)
    return Recovery(res.x, detail={"flips": flips})


def bob_one_set(y, S, k: int, sketch: Sketch, seed: int, tuning: Tuning = DEFAULT_TUNING) -> Recovery:
    S = np.asarray(S, dtype=np.int64)
    spec = SubsetSpec(len(as_bits(y)), (S.size,), (k,), (S,))
    return bob_general(y, spec, sketch, seed, tuning)


# -- chi grouping -----------------------------------------------------------------------


def group_by_chi(sizes, bounds, base: int = 10) -> tuple[tuple, tuple, tuple]:
    """Merge subsets whose ratios share a band.

    Returns (group sizes, group bounds, group of each input subset). Groups are
    ordered by bound, largest first, ties by band, so the result feeds the
    general protocol directly.
    """
    sizes = tuple(int(s) for s in sizes)
    bounds = tuple(int(k) for k in bounds)
    if len(sizes) != len(bounds) or not sizes:
        raise ValueError("need equal-length, non-empty sizes and bounds")
    if any(k < 1 for k in bounds):
        raise ValueError("every bound must be at least 1")
    bands = [chi_band(s / k, base) for s, k in zip(sizes, bounds)]
    distinct = sorted(set(bands))
    agg = {b: [0, 0] for b in distinct}
    for s, k, b in zip(sizes, bounds, bands):
        agg[b][0] += s
        agg[b][1] += k
    order = sorted(distinct, key=lambda b: (-agg[b][1], b))
    rank = {b: r for r, b in enumerate(order)}
    return (
        tuple(agg[b][0] for b in order),
        tuple(agg[b][1] for b in order),
        tuple(rank[b] for b in bands),
    )


def _merge_subsets(spec: SubsetSpec, base: int) -> SubsetSpec:
    gs, gk, gmap = group_by_chi(spec.sizes, spec.bounds, base)
    merged = None
    if spec.subsets is not None:
        merged = tuple(
            np.sort(np.concatenate([S for S, g in zip(spec.subsets, gmap) if g == j])) for j in range(len(gs))
        )
    return SubsetSpec(spec.n, gs, gk, merged)


def alice_chi(x, sizes, bounds, seed: int, base: int = 10, tuning: Tuning = DEFAULT_TUNING) -> Sketch:
    gs, gk, _ = group_by_chi(sizes, bounds, base)
    if len(gs) != chi(sizes, bounds, base):
        raise AssertionError("group count disagrees with chi")
    return alice_general(x, gs, gk, seed, tuning, protocol=ProtocolId.CHI)


def bob_chi(y, spec: SubsetSpec, sketch: Sketch, seed: int, base: int = 10, tuning: Tuning = DEFAULT_TUNING) -> Recovery:
    return bob_general(y, _merge_subsets(spec, base), sketch, seed, tuning)


# -- special setting --------------------------------------------------------------------


def special_k_prime(k: int, n_hat: int) -> int:
    """k' = ceil(k / log2(n_hat / k)); the log is floored at 1."""
    return max(1, math.ceil(k / max(1.0, math.log2(n_hat / k))))


@dataclass(frozen=True)
class SpecialParams:
    n: int
    k: int
    k_prime: int
    plan: ExpanderPlan
    w: int

    @property
    def rs_budget(self) -> int:
        return 2 * self.k_prime


def special_params(n: int, k: int, n_hat: int, k_prime: Optional[int] = None, tuning: Tuning = DEFAULT_TUNING) -> SpecialParams:
    if k < 1:
        raise ValueError("k must be positive")
    kp = special_k_prime(k, n_hat) if k_prime is None else int(k_prime)
    return SpecialParams(n, k, kp, tuning.special(k), width_for_bits(n, 2 * kp))


def _special_graph(p: SpecialParams, seed: int, *context):
    return graph_from_seed(p.n, p.plan.m, p.plan.d, seed, "special", *context)


def special_encode(x: np.ndarray, p: SpecialParams, seed: int, *context) -> tuple[BitString, bytes]:
    """(parities, serialized RS redundancy) of one string."""
    z = encode_parities(x, _special_graph(p, seed, *context))
    red = rs_syndrome(bits_to_symbols(x, p.w), p.rs_budget)
    return z, serialize_redundancy(red)


def special_decode(y: np.ndarray, z, red_bytes: bytes, subsets, bounds, p: SpecialParams, seed: int, *context) -> Recovery:
    """Budgeted bit flipping, then RS over the whole string."""
    g = _special_graph(p, seed, *context)
    res = bp_decode_budgeted(y, z, g, subsets, bounds)
    red, _ = deserialize_redundancy(red_bytes)
    if red.w != p.w or len(red) != 2 * p.rs_budget:
        raise ValueError("redundancy record does not match the plan")
    data = rs_correct(bits_to_symbols(res.x, p.w), red, p.rs_budget)
    if data is None:
        # the stage-one output lets a harness with the truth measure the residual
        return Recovery.fail(Stage.RS_FAILURE, flips=res.flips, stage1_output=res.x)
    out = symbols_to_bits(data, len(res.x))
    if encode_parities(out, g) != (z if isinstance(z, BitString) else BitString(z)):
        return Recovery.fail(Stage.PARITY_MISMATCH, flips=res.flips)
    residual = int(np.count_nonzero(out.bits != res.x.bits))
    return Recovery(out, detail={"flips": res.flips, "stage1_residual": residual})


def alice_special(
    x, sizes, bounds, seed: int, k: Optional[int] = None, k_prime: Optional[int] = None, tuning: Tuning = DEFAULT_TUNING
) -> Sketch:
    """Parities from one constant-degree graph plus RS redundancy of x with budget 2k'."""
    bits = as_bits(x)
    sizes = tuple(int(s) for s in sizes)
    bounds = tuple(int(b) for b in bounds)
    if sum(sizes) > bits.size:
        raise ValueError("subset sizes exceed n")
    p = special_params(bits.size, sum(bounds) if k is None else k, sum(sizes), k_prime, tuning)
    z, red = special_encode(bits, p, seed)
    sk = Sketch(ProtocolId.SPECIAL, bits.size, len(sizes))
    sk.add(Tag.PARITY, 1, z)
    sk.add(Tag.SYNDROME, 2, BitString.from_bytes(red, 8 * len(red)))
    return sk


def bob_special(
    y, spec: SubsetSpec, sketch: Sketch, seed: int, k: Optional[int] = None, k_prime: Optional[int] = None, tuning: Tuning = DEFAULT_TUNING
) -> Recovery:
    if spec.subsets is None:
        raise ValueError("Bob needs the subsets")
    bits = as_bits(y)
    p = special_params(bits.size, sum(spec.bounds) if k is None else k, sum(spec.sizes), k_prime, tuning)
    z = _segment_bits(sketch, Tag.PARITY, 1, p.plan.m)
    (red,) = sketch.find(Tag.SYNDROME, 2)
    return special_decode(bits, z, red.bits.to_bytes(), spec.subsets, spec.bounds, p, seed)


# -- stochastic error-correcting code ---------------------------------------------------


@dataclass(frozen=True)
class EccPlan:
    n: int
    msg_len: int
    sketch_len: int
    w: int
    e: int
    groups: tuple

    @property
    def r(self) -> int:
        return self.n - self.msg_len


def ecc_plan(n: int, sizes, bounds, base: int = 10, tuning: Tuning = DEFAULT_TUNING) -> EccPlan:
    """Redundancy layout for codeword length ``n``: sketch of an n-bit string, RS-protected against k symbol errors."""
    gs, gk, _ = group_by_chi(sizes, bounds, base)
    sketch_len = plan_general(gs, gk, n, tuning).sketch_bits
    e = sum(int(b) for b in bounds)
    w = width_for_bits(sketch_len, e)
    tail = (-(-sketch_len // w) + 2 * e) * w
    if tail >= n:
        raise ValueError(f"redundancy of {tail} bits leaves no room in {n}")
    return EccPlan(n, n - tail, sketch_len, w, e, (gs, gk))


def ecc_encode(msg, sizes, bounds, seed: int, n: Optional[int] = None, base: int = 10, tuning: Tuning = DEFAULT_TUNING) -> BitString:
    """codeword = msg || sketch(msg || 0^r) || RS redundancy of that sketch."""
    m = as_bits(msg)
    if n is None:
        raise ValueError("codeword length n is required")
    plan = ecc_plan(n, sizes, bounds, base, tuning)
    if m.size != plan.msg_len:
        raise ValueError(f"message must have {plan.msg_len} bits, got {m.size}")
    padded = np.concatenate([m, np.zeros(plan.r, dtype=np.uint8)])
    sk = alice_general(padded, *plan.groups, seed, tuning, protocol=ProtocolId.ECC)
    sbits = np.concatenate([s.bits.bits for s in sk.segments])
    data = bits_to_symbols(sbits, plan.w)
    red = rs_syndrome(data, plan.e)
    tail = np.concatenate([symbols_to_bits(data).bits, symbols_to_bits(red).bits])
    return BitString(np.concatenate([m, tail]))


def ecc_decode(received, spec: SubsetSpec, seed: int, base: int = 10, tuning: Tuning = DEFAULT_TUNING) -> Recovery:
    bits = as_bits(received)
    if spec.subsets is None:
        raise ValueError("decoder needs the subsets")
    plan = ecc_plan(bits.size, spec.sizes, spec.bounds, base, tuning)
    tail = bits[plan.msg_len :]
    n_data = -(-plan.sketch_len // plan.w)
    syms = bits_to_symbols(tail, plan.w)
    data = rs_correct(
        type(syms)(plan.w, syms.symbols[:n_data]), type(syms)(plan.w, syms.symbols[n_data:]), plan.e
    )
    if data is None:
        return Recovery.fail(Stage.RS_FAILURE, part="tail")
    sbits = symbols_to_bits(data, plan.sketch_len).bits
    gs, gk = plan.groups
    gplan = plan_general(gs, gk, bits.size, tuning)
    sk = Sketch(ProtocolId.ECC, bits.size, len(gs))
    stages = [(i, r.plan.m) for i, r in enumerate(gplan.iterations, start=1)]
    stages.append((_final_stage_id(gplan), gplan.final.m))
    pos = 0
    for it, m in stages:
        sk.add(Tag.PARITY, it, sbits[pos : pos + m])
        pos += m
    padded = np.concatenate([bits[: plan.msg_len], np.zeros(plan.r, dtype=np.uint8)])
    rec = bob_chi(padded, spec, sk, seed, base, tuning)
    if not rec.ok:
        return rec
    return Recovery(BitString(rec.x.bits[: plan.msg_len]), detail=rec.detail)


# -- two-sided reduction ----------------------------------------------------------------


def two_sided_wrap(spec_b: SubsetSpec, k_a: int, n: Optional[int] = None) -> SubsetSpec:
    """Add Alice's side as one more subset, the complement of Bob's, with bound ``k_a``."""
    n = spec_b.n if n is None else n
    if n != spec_b.n:
        raise ValueError("n disagrees with the spec")
    if k_a == 0:
        return spec_b
    s_a = n - sum(spec_b.sizes)
    if s_a < 1:
        raise ValueError("Bob's subsets leave no room for Alice's side")
    entries = list(zip(spec_b.sizes, spec_b.bounds, range(spec_b.t)))
    entries.append((s_a, int(k_a), spec_b.t))
    entries.sort(key=lambda e: -e[1])
    subsets = None
    if spec_b.subsets is not None:
        rest = np.setdiff1d(np.arange(n, dtype=np.int64), spec_b.union(), assume_unique=True)
        pool = list(spec_b.subsets) + [rest]
        subsets = tuple(pool[j] for _, _, j in entries)
    return SubsetSpec(n, tuple(e[0] for e in entries), tuple(e[1] for e in entries), subsets)

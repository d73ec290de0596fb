import math

import numpy as np
import pytest

from asymde.core import BitString, ErrorPattern, SubsetSpec, apply_errors, chi, entropy_H, sample_spec_instance
from asymde.hamming_de import (
    C_GENERAL,
    ProtocolId,
    Sketch,
    Stage,
    Tag,
    alice_chi,
    alice_general,
    alice_one_set,
    alice_special,
    bob_chi,
    bob_general,
    bob_one_set,
    bob_special,
    ecc_decode,
    ecc_encode,
    ecc_plan,
    group_by_chi,
    plan_general,
    special_k_prime,
    two_sided_wrap,
)
from asymde.seeding import rng_for


def ref_schedule(sizes, bounds):
    """Step-by-step replay of the iteration rule with 1-based indices."""
    t = len(bounds)
    k = [None] + list(bounds)
    ip, kp = 0, 0
    steps = []
    while ip < t - 1:
        chosen = None
        i = ip + 1
        while i <= t - 1:
            prefix = kp + sum(k[ip + 1 : i + 1])
            target = C_GENERAL * sum(k[i + 1 : t + 1])
            if prefix > target:
                chosen = (i, kp, target, prefix)
                break
            i += 1
        if chosen is None:
            break
        steps.append(chosen)
        ip, kp = chosen[0], chosen[2]
    final_k = min(kp + sum(k[ip + 1 :]), sum(sizes))
    return steps, final_k


def instance(sizes, bounds, n, seed, layout="random"):
    rng = rng_for(seed, "test-instance")
    spec, pat = sample_spec_instance(SubsetSpec(n, sizes, bounds), layout, rng)
    x = BitString.random(n, rng)
    return x, apply_errors(x, pat), spec


# -- planning ---------------------------------------------------------------------------


def test_plan_t1_is_one_set():
    p = plan_general([64], [4], 256)
    assert p.iterations == ()
    assert p.final == plan_general([64], [4], 1000).final
    assert (p.final_s, p.final_k) == (64, 4)


def test_plan_t2_triggers_at_first_subset():
    p = plan_general([64, 64], [16, 1], 256)
    assert len(p.iterations) == 1
    rec = p.iterations[0]
    assert (rec.active, rec.k_prev, rec.k_target, rec.k_plan, rec.s_active) == (1, 0, 10, 16, 64)
    assert p.final_k == 11


def test_plan_t3_flat_bounds_has_no_iterations():
    p = plan_general([16, 16, 16], [4, 4, 4], 64)
    assert p.iterations == ()
    assert p.final_k == 12


def test_plan_matches_reference_interpreter():
    rng = np.random.default_rng(0)
    for _ in range(2000):
        t = int(rng.integers(1, 7))
        bounds = sorted((int(2 ** rng.uniform(0, 10)) for _ in range(t)), reverse=True)
        sizes = [b * int(rng.integers(2, 50)) for b in bounds]
        p = plan_general(sizes, bounds, sum(sizes))
        steps, final_k = ref_schedule(sizes, bounds)
        assert [(r.active, r.k_prev, r.k_target) for r in p.iterations] == [s[:3] for s in steps]
        assert [r.k_plan for r in p.iterations] == [min(s[3], sum(sizes[: s[0]])) for s in steps]
        assert p.final_k == final_k
        targets = [r.k_target for r in p.iterations]
        assert all(a > b for a, b in zip(targets, targets[1:]))
        if targets:
            assert targets[-1] >= bounds[-1]


def test_plan_rejects_invalid():
    with pytest.raises(ValueError):
        plan_general([8], [0], 8)
    with pytest.raises(ValueError):
        plan_general([8, 8], [1, 2], 16)
    with pytest.raises(ValueError):
        plan_general([3], [2], 8)


# -- sketch wire format -----------------------------------------------------------------


def test_wire_header_layout():
    x = BitString.random(100, np.random.default_rng(1))
    sk = alice_general(x, [40, 40], [8, 1], 7)
    raw = sk.to_bytes()
    assert raw[:4] == b"ADE1"
    assert int.from_bytes(raw[4:6], "big") == 1
    assert raw[6] == ProtocolId.GENERAL
    assert int.from_bytes(raw[7:15], "big") == 100
    assert int.from_bytes(raw[15:17], "big") == 2
    seg0 = sk.segments[0]
    assert raw[17] == Tag.PARITY
    assert int.from_bytes(raw[18:20], "big") == seg0.iteration
    assert int.from_bytes(raw[20:24], "big") == len(seg0)
    assert raw[24 : 24 + -(-len(seg0) // 8)] == seg0.bits.to_bytes()


def test_wire_round_trip_byte_identical():
    rng = np.random.default_rng(2)
    for seed in range(20):
        x = BitString.random(300, rng)
        for sk in (
            alice_general(x, [100, 100], [10, 2], seed),
            alice_special(x, [32, 64, 128], [8, 4, 2], seed),
        ):
            raw = sk.to_bytes()
            back = Sketch.from_bytes(raw)
            assert back.to_bytes() == raw
            assert back.size() == sk.size() == 8 * len(raw) - sum((-len(s)) % 8 for s in sk.segments)


def test_wire_rejects_garbage():
    with pytest.raises(ValueError):
        Sketch.from_bytes(b"ADE2" + bytes(13))
    x = BitString.random(64, np.random.default_rng(3))
    raw = alice_one_set(x, 32, 4, 1).to_bytes()
    with pytest.raises(ValueError):
        Sketch.from_bytes(raw[:-1])


# -- one-set and general ----------------------------------------------------------------


def test_one_set_zero_input_zero_payload():
    sk = alice_one_set(BitString.zeros(128), 64, 4, 9)
    assert all(s.bits.popcount() == 0 for s in sk.segments)
    assert sk.payload_bits == plan_general([64], [4], 128).final.m


def test_one_set_no_errors_no_flips():
    x, _, spec = instance((64,), (4,), 256, 1)
    sk = alice_one_set(x, 64, 4, 1)
    rec = bob_one_set(x, spec.subsets[0], 4, sk, 1)
    assert rec.ok and rec.x == x and rec.detail["flips"] == 0


def test_one_set_recovers():
    ok = 0
    for seed in range(40):
        x, y, spec = instance((256,), (8,), 1024, seed)
        rec = bob_one_set(y, spec.subsets[0], 8, alice_one_set(x, 256, 8, seed), seed)
        if rec.ok:
            assert rec.x == x
            ok += 1
    assert ok >= 38


def test_one_set_size_constant():
    for s, k in ((256, 4), (512, 16), (1024, 64)):
        sk = alice_one_set(BitString.zeros(4 * s), s, k, 0)
        assert sk.payload_bits <= 8 * k * math.log2(2 * s / k)


def test_one_set_errors_outside_subset_not_silent():
    x, _, spec = instance((64,), (2,), 512, 3)
    outside = np.setdiff1d(np.arange(512), spec.subsets[0])[:20]
    y = apply_errors(x, ErrorPattern(outside))
    rec = bob_one_set(y, spec.subsets[0], 2, alice_one_set(x, 64, 2, 3), 3)
    # bit flipping cannot reach these positions, so the final parities stay unsatisfied
    assert not rec.ok and rec.stage == Stage.PARITY_MISMATCH


def test_t1_general_byte_identical_to_one_set():
    x = BitString.random(200, np.random.default_rng(4))
    assert alice_general(x, [100], [5], 11).to_bytes() == alice_one_set(x, 100, 5, 11).to_bytes()


def test_general_recovers_multi_set():
    sizes, bounds, n = (64, 512, 4096), (16, 8, 2), 8192
    ok = 0
    for seed in range(10):
        x, y, spec = instance(sizes, bounds, n, seed)
        rec = bob_general(y, spec, alice_general(x, sizes, bounds, seed), seed)
        if rec.ok:
            assert rec.x == x
            ok += 1
    assert ok >= 9


def test_sketch_length_oblivious_to_x():
    rng = np.random.default_rng(5)
    sizes, bounds = (100, 300), (10, 2)
    ref = None
    for _ in range(100):
        sk = alice_general(BitString.random(500, rng), sizes, bounds, 42)
        shape = [(s.tag, s.iteration, len(s)) for s in sk.segments]
        ref = ref or shape
        assert shape == ref and len(sk.to_bytes()) == len(alice_general(BitString.zeros(500), sizes, bounds, 42).to_bytes())


def test_seed_separation():
    x = BitString.random(500, np.random.default_rng(6))
    sizes, bounds = (100, 300), (10, 2)
    a = alice_general(x, sizes, bounds, 1)
    b = alice_general(x, sizes, bounds, 2)
    assert a.to_bytes() != b.to_bytes() and len(a.to_bytes()) == len(b.to_bytes())
    # different adversary streams give different subsets and errors; Alice never sees them
    for adv in range(5):
        spec, _ = sample_spec_instance(SubsetSpec(500, sizes, bounds), "random", rng_for(adv, "adversary"))
        assert spec.subsets is not None
        assert alice_general(x, spec.sizes, spec.bounds, 1).to_bytes() == a.to_bytes()


# -- chi grouping -----------------------------------------------------------------------


def test_group_single_band():
    gs, gk, gmap = group_by_chi([40, 80], [4, 8])
    assert (gs, gk, gmap) == ((120,), (12,), (0, 0))


def test_group_straddling_bands_base_two():
    sizes, bounds = [1024, 512, 32], [512, 64, 1]
    gs, gk, gmap = group_by_chi(sizes, bounds, base=2)
    assert len(gs) == chi(sizes, bounds, base=2) == 3
    assert sorted(gk, reverse=True) == list(gk)


def test_grouped_entropy_close():
    rng = np.random.default_rng(7)
    for _ in range(300):
        t = int(rng.integers(1, 6))
        bounds = sorted((int(rng.integers(1, 200)) for _ in range(t)), reverse=True)
        sizes = [b * int(2 ** rng.uniform(1, 12)) for b in bounds]
        gs, gk, _ = group_by_chi(sizes, bounds)
        assert entropy_H(gs, gk) <= 4 * entropy_H(sizes, bounds) + 8


def test_chi_protocol_recovers():
    sizes, bounds, n = (64, 512, 4096), (16, 8, 2), 8192
    for seed in range(5):
        x, y, spec = instance(sizes, bounds, n, seed)
        sk = alice_chi(x, sizes, bounds, seed)
        assert sk.protocol == ProtocolId.CHI
        rec = bob_chi(y, spec, sk, seed)
        assert rec.ok and rec.x == x


# -- special setting --------------------------------------------------------------------


def test_k_prime_formula():
    assert special_k_prime(64, 64 * 1024) == math.ceil(64 / 10)
    assert special_k_prime(8, 8) == 8


def test_special_zero_errors_identity():
    sizes, bounds, n = (64, 128, 256), (8, 4, 2), 1024
    x, _, spec = instance(sizes, bounds, n, 1)
    sk = alice_special(x, sizes, bounds, 1)
    assert [s.tag for s in sk.segments] == [Tag.PARITY, Tag.SYNDROME]
    rec = bob_special(x, spec, sk, 1)
    assert rec.ok and rec.x == x


def test_special_deterministic_size():
    sizes, bounds = (64, 128, 256), (8, 4, 2)
    a = alice_special(BitString.zeros(1024), sizes, bounds, 5)
    b = alice_special(BitString.random(1024, np.random.default_rng(0)), sizes, bounds, 6)
    assert a.size() == b.size()


def test_special_recovers_with_generous_checks():
    from asymde.hamming_de import Tuning

    tuning = Tuning(c_s=8.0)
    sizes, bounds, n = (64, 128, 256, 512), (16, 8, 4, 2), 2048
    for seed in range(5):
        x, y, spec = instance(sizes, bounds, n, seed)
        rec = bob_special(y, spec, alice_special(x, sizes, bounds, seed, tuning=tuning), seed, tuning=tuning)
        assert rec.ok and rec.x == x


def test_special_rs_failure_reported():
    sizes, bounds, n = (512,), (64,), 1024
    x, _, spec = instance(sizes, bounds, n, 2)
    # errors outside the subset are out of reach for bit flipping and swamp the RS budget
    y = apply_errors(x, ErrorPattern(np.setdiff1d(np.arange(n), spec.subsets[0])))
    rec = bob_special(y, spec, alice_special(x, sizes, bounds, 2), 2)
    assert not rec.ok and rec.stage in (Stage.RS_FAILURE, Stage.PARITY_MISMATCH)


# -- stochastic ECC ---------------------------------------------------------------------


def test_ecc_zero_errors_round_trip():
    sizes, bounds, n = (512, 2048), (8, 2), 8192
    plan = ecc_plan(n, sizes, bounds)
    msg = BitString.random(plan.msg_len, np.random.default_rng(8))
    code = ecc_encode(msg, sizes, bounds, 3, n=n)
    assert len(code) == n and code.bits[: plan.msg_len].tolist() == msg.bits.tolist()
    spec, _ = sample_spec_instance(SubsetSpec(n, sizes, bounds), "random", np.random.default_rng(1))
    rec = ecc_decode(code, spec, 3)
    assert rec.ok and rec.x == msg


def test_ecc_errors_on_tail_recovered():
    sizes, bounds, n = (512, 2048), (8, 2), 8192
    plan = ecc_plan(n, sizes, bounds)
    rng = np.random.default_rng(9)
    msg = BitString.random(plan.msg_len, rng)
    code = ecc_encode(msg, sizes, bounds, 4, n=n)
    tail = np.arange(plan.msg_len, n)
    big = tail[: sizes[0]]
    small = np.concatenate([tail[sizes[0] :], np.arange(sizes[1] - (tail.size - sizes[0]))])
    spec = SubsetSpec(n, sizes, bounds, (big, small))
    flips = list(big[:8]) + list(tail[sizes[0] : sizes[0] + 2])
    rec = ecc_decode(apply_errors(code, ErrorPattern(flips)), spec, 4)
    assert rec.ok and rec.x == msg


def test_ecc_rejects_wrong_length():
    with pytest.raises(ValueError):
        ecc_encode(BitString.zeros(10), (512,), (8,), 0, n=8192)


# -- two-sided --------------------------------------------------------------------------


def test_two_sided_zero_returns_input():
    spec = SubsetSpec(100, (20,), (2,))
    assert two_sided_wrap(spec, 0) is spec


def test_two_sided_complement_disjoint():
    spec, _ = sample_spec_instance(SubsetSpec(200, (30, 50), (4, 2)), "random", np.random.default_rng(10))
    out = two_sided_wrap(spec, 3)
    assert out.t == 3 and sum(out.sizes) == 200
    assert list(out.bounds) == sorted(out.bounds, reverse=True)
    assert np.array_equal(np.sort(out.union()), np.arange(200))


def test_two_sided_end_to_end():
    n = 4096
    for seed in range(5):
        rng = rng_for(seed, "two-sided")
        spec_b, pat_b = sample_spec_instance(SubsetSpec(n, (256,), (8,)), "random", rng)
        x = BitString.random(n, rng)
        full = two_sided_wrap(spec_b, 2)
        rest = [S for S, s in zip(full.subsets, full.sizes) if s == n - 256][0]
        flips = list(pat_b.flips) + rng.choice(rest, size=2, replace=False).tolist()
        y = apply_errors(x, ErrorPattern(flips))
        rec = bob_general(y, full, alice_general(x, full.sizes, full.bounds, seed), seed)
        assert rec.ok and rec.x == x

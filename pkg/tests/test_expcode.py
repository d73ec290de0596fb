import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asymde.core import BitString, ErrorPattern, apply_errors
from asymde.expander import BipartiteGraph, graph_from_seed, verify_expansion_exact
from asymde.expcode import (
    BUDGET_HARD,
    ParityState,
    bp_decode_budgeted,
    bp_decode_restricted,
    encode_parities,
    unsatisfied_profile,
)


def naive_parities(x, g):
    z = np.zeros(g.m_right, dtype=np.uint8)
    for v in range(g.n_left):
        for r in g.edges[v]:
            z[r] ^= x[v]
    return z


def naive_counters(x, z, g):
    # a check hit an even number of times by v does not react to v, so only odd-multiplicity edges count
    unsat = naive_parities(x, g) ^ z
    counters = []
    for v in range(g.n_left):
        ends = g.edges[v].tolist()
        counters.append(sum(int(unsat[r]) for r in set(ends) if ends.count(r) % 2))
    return unsat, np.array(counters)


def distinct_graph(n, d):
    return BipartiteGraph(n, n * d, d, [[v * d + j for j in range(d)] for v in range(n)])


def find_expander(n, m, d, k, tag):
    for seed in range(1000):
        g = graph_from_seed(n, m, d, seed, tag)
        if verify_expansion_exact(g, range(n), 1, 2 * k, 0.9 * d):
            return g
    raise AssertionError("no expander found")


# -- encoding ---------------------------------------------------------------------------


def test_encode_examples():
    g = BipartiteGraph(2, 1, 1, [[0], [0]])
    assert encode_parities(BitString.from_str("10"), g) == BitString.from_str("1")
    assert encode_parities(BitString.from_str("11"), g) == BitString.from_str("0")
    g = graph_from_seed(30, 20, 4, 0)
    assert encode_parities(BitString.zeros(30), g).popcount() == 0
    with pytest.raises(ValueError):
        encode_parities(BitString.zeros(29), g)


def test_encode_linear_and_matches_naive():
    rng = np.random.default_rng(0)
    for seed in range(30):
        g = graph_from_seed(50, 25, 5, seed)
        x, x2 = BitString.random(50, rng), BitString.random(50, rng)
        assert encode_parities(x ^ x2, g) == encode_parities(x, g) ^ encode_parities(x2, g)
        assert encode_parities(x, g).bits.tolist() == naive_parities(x.bits, g).tolist()


def test_duplicate_edge_cancels():
    g = BipartiteGraph(1, 2, 3, [[0, 0, 1]])
    assert encode_parities(BitString.from_str("1"), g) == BitString.from_str("01")


# -- parity state -----------------------------------------------------------------------


def test_state_matches_naive_recount():
    rng = np.random.default_rng(1)
    for seed in range(20):
        g = graph_from_seed(40, 30, 5, seed)
        x, y = BitString.random(40, rng), BitString.random(40, rng)
        z = encode_parities(x, g)
        st_ = ParityState(g, z, y)
        unsat, counters = naive_counters(y.bits, z.bits, g)
        assert st_.unsat.tolist() == unsat.tolist()
        assert st_.counters.tolist() == counters.tolist()
        assert unsatisfied_profile(st_) == (int(unsat.sum()), int(counters.max()))


def test_profile_examples():
    g = distinct_graph(8, 5)
    x = BitString.random(8, np.random.default_rng(2))
    z = encode_parities(x, g)
    assert unsatisfied_profile(ParityState(g, z, x)) == (0, 0)
    y = apply_errors(x, ErrorPattern((3,)))
    assert unsatisfied_profile(ParityState(g, z, y)) == (5, 5)


def test_flip_must_decrease():
    g = distinct_graph(4, 3)
    x = BitString.zeros(4)
    state = ParityState(g, encode_parities(x, g), x)
    with pytest.raises(AssertionError):
        state.flip(0)


# -- restricted decoder -----------------------------------------------------------------


def test_restricted_satisfied_unchanged():
    g = graph_from_seed(30, 40, 5, 3)
    x = BitString.random(30, np.random.default_rng(3))
    res = bp_decode_restricted(x, encode_parities(x, g), g, range(30))
    assert res.x == x and res.flips == 0 and res.converged and res.satisfied


def test_restricted_single_error_one_flip():
    g = distinct_graph(10, 4)
    x = BitString.random(10, np.random.default_rng(4))
    y = apply_errors(x, ErrorPattern((7,)))
    res = bp_decode_restricted(y, encode_parities(x, g), g, range(10))
    assert res.x == x and res.flips == 1


def test_restricted_recovers_on_verified_expander():
    k = 2
    g = find_expander(16, 400, 6, k, "bp16")
    rng = np.random.default_rng(5)
    for _ in range(200):
        x = BitString.random(16, rng)
        p = ErrorPattern(rng.choice(16, size=int(rng.integers(0, k + 1)), replace=False))
        res = bp_decode_restricted(apply_errors(x, p), encode_parities(x, g), g, range(16), check_every=1)
        assert res.x == x


def test_restricted_never_touches_outside():
    rng = np.random.default_rng(6)
    for seed in range(100):
        g = graph_from_seed(64, 40, 5, seed, "mask")
        x = BitString.random(64, rng)
        y = BitString.random(64, rng)
        allowed = rng.choice(64, size=20, replace=False)
        res = bp_decode_restricted(y, encode_parities(x, g), g, allowed, check_every=1)
        outside = np.setdiff1d(np.arange(64), allowed)
        assert np.array_equal(res.x.bits[outside], y.bits[outside])


def test_restricted_max_flips_reports_incomplete():
    g = distinct_graph(10, 4)
    x = BitString.zeros(10)
    y = apply_errors(x, ErrorPattern((1, 2, 3)))
    res = bp_decode_restricted(y, encode_parities(x, g), g, range(10), max_flips=1)
    assert res.flips == 1 and not res.converged


def test_incremental_counters_recount_every_64():
    rng = np.random.default_rng(7)
    for seed in range(10):
        g = graph_from_seed(2000, 1200, 8, seed, "recount")
        x = BitString.random(2000, rng)
        p = ErrorPattern(rng.choice(2000, size=150, replace=False))
        res = bp_decode_restricted(apply_errors(x, p), encode_parities(x, g), g, range(2000), check_every=64)
        assert res.flips > 0


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_every_flip_strictly_decreases(seed):
    # flip() raises on a non-decreasing step, so completing the run proves the property
    rng = np.random.default_rng(seed)
    g = graph_from_seed(60, 40, 5, seed)
    x, y = BitString.random(60, rng), BitString.random(60, rng)
    z = encode_parities(x, g)
    before = ParityState(g, z, y).total_unsat
    res = bp_decode_restricted(y, z, g, range(60), check_every=1)
    assert res.flips <= before
    assert res.unsatisfied <= before - res.flips


# -- budgeted decoder -------------------------------------------------------------------


def test_budgeted_zero_errors_identity():
    g = graph_from_seed(40, 60, 5, 8)
    x = BitString.random(40, np.random.default_rng(8))
    res = bp_decode_budgeted(x, encode_parities(x, g), g, [range(20), range(20, 40)], [1, 1])
    assert res.x == x and res.flips == 0


def test_budgeted_t1_large_budget_equals_restricted():
    rng = np.random.default_rng(9)
    for seed in range(100):
        g = graph_from_seed(80, 50, 6, seed, "t1")
        x, y = BitString.random(80, rng), BitString.random(80, rng)
        z = encode_parities(x, g)
        S = rng.choice(80, size=60, replace=False)
        a = bp_decode_restricted(y, z, g, S)
        b = bp_decode_budgeted(y, z, g, [S], [80])
        assert a.x == b.x and a.flips == b.flips


def test_budgeted_respects_hard_cap():
    # errors within bounds: net flips per subset stay at most 20 k_i (asserted inside)
    rng = np.random.default_rng(10)
    for seed in range(50):
        g = graph_from_seed(300, 40, 10, seed, "cap")
        x = BitString.random(300, rng)
        subsets = [np.arange(0, 100), np.arange(100, 300)]
        flips = list(rng.choice(100, size=1, replace=False)) + list(100 + rng.choice(200, size=1, replace=False))
        y = apply_errors(x, ErrorPattern(flips))
        res = bp_decode_budgeted(y, encode_parities(x, g), g, subsets, [1, 1], check_every=8)
        diff = (res.x.bits ^ y.bits).astype(bool)
        for S in subsets:
            assert diff[S].sum() <= BUDGET_HARD


def test_budgeted_rejects_overlap():
    g = graph_from_seed(10, 10, 3, 0)
    x = BitString.zeros(10)
    with pytest.raises(ValueError):
        bp_decode_budgeted(x, encode_parities(x, g), g, [range(5), range(4, 10)], [1, 1])

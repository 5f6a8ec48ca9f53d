import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pbitsparse import rng

u64 = st.integers(0, 2**64 - 1)
u32 = st.integers(0, 2**32 - 1)


def test_philox_known_answers(rng_vectors):
    assert rng_vectors["algorithm"] == rng.ALGORITHM
    for v in rng_vectors["philox_known_answers"]:
        out = rng.philox4x32(v["counter"], v["key"])
        assert ["%08x" % w for w in out] == v["output"]


def test_jit_block_matches_known_answers(rng_vectors):
    for v in rng_vectors["philox_known_answers"]:
        out = rng.philox_block(*v["counter"], *v["key"])
        assert ["%08x" % int(w) for w in out] == v["output"]


def test_recorded_uniforms(rng_vectors):
    for v in rng_vectors["uniform"]:
        assert rng.uniform_ref(v["seed"], v["step"], v["node"], v["purpose"]) == v["value"]
        got = rng.uniform_grid(v["seed"], [v["step"]], [v["node"]], v["purpose"])[0, 0]
        assert got == v["value"]


def test_recorded_derived_seeds(rng_vectors):
    for v in rng_vectors["derive_seed"]:
        assert rng.derive_seed(v["seed"], *v["labels"]) == v["value"]


@given(u64, u64, u32, st.integers(0, 3))
def test_jit_and_reference_agree(seed, step, node, purpose):
    k0, k1 = rng.split_key(seed)
    got = rng.uniform(k0, k1, np.uint64(step), np.uint32(node), np.uint32(purpose))
    assert got == rng.uniform_ref(seed, step, node, purpose)


@given(u64, st.lists(u64, min_size=1, max_size=8), st.lists(u32, min_size=1, max_size=8))
def test_pairs_match_grid(seed, steps, nodes):
    m = min(len(steps), len(nodes))
    steps, nodes = steps[:m], nodes[:m]
    pairs = rng.uniform_pairs(seed, steps, nodes, rng.UPDATE)
    for a in range(m):
        assert pairs[a] == rng.uniform_grid(seed, [steps[a]], [nodes[a]], rng.UPDATE)[0, 0]


def test_uniform_range_and_mean():
    u = rng.uniform_grid(3, np.arange(2000), np.arange(50), rng.UPDATE)
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.005
    # purposes are independent streams
    v = rng.uniform_grid(3, np.arange(2000), np.arange(50), rng.INIT)
    assert abs(np.corrcoef(u.ravel(), v.ravel())[0, 1]) < 0.01


def test_derive_seed_distinct_and_bounded():
    seeds = {rng.derive_seed(1, a, b) for a in range(30) for b in range(30)}
    assert len(seeds) == 900
    assert all(0 <= s < 2**64 for s in seeds)
    with pytest.raises(ValueError):
        rng.derive_seed(1, 1, 2, 3, 4)


def test_streams_child_and_spins():
    s = rng.Streams(9)
    a = s.random_spins(64)
    assert set(np.unique(a)) <= {-1, 1}
    assert np.array_equal(a, rng.Streams(9).random_spins(64))
    assert not np.array_equal(a, s.child(1).random_spins(64))
    assert rng.Streams(-1).seed == 2**64 - 1

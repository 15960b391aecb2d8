import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from convforest import oracles
from convforest.errors import ArityError, CapacityError


def test_two_coins_with_sum():
    m = oracles.JointModel()
    m.add_variable("a", [0, 1])
    m.add_variable("b", [0, 1])
    m.add_variable("s", [0, 1, 2])
    m.add_table(("a",), (0,), [0.5, 0.5])
    m.add_table(("b",), (0,), [0.5, 0.5])
    m.add_constraint(("a", "b", "s"), lambda a, b, s: float(a + b == s))
    out = oracles.enumerate_marginals(m)
    assert out["s"] == pytest.approx({0: 0.25, 1: 0.5, 2: 0.25})
    assert out["a"] == pytest.approx({0: 0.5, 1: 0.5})
    m.add_table(("s",), (1,), [1.0])
    out = oracles.enumerate_marginals(m, math.inf)
    assert out["s"] == pytest.approx({0: 0.0, 1: 1.0, 2: 0.0})
    assert out["a"] == pytest.approx({0: 0.5, 1: 0.5})


def test_table_outside_support_is_zero():
    m = oracles.JointModel()
    m.add_variable("x", [0, 1, 2])
    m.add_table(("x",), (1,), [2.0])
    assert oracles.enumerate_marginals(m)["x"] == {0: 0.0, 1: 1.0, 2: 0.0}


def test_capacity_guard():
    m = oracles.JointModel()
    for i in range(8):
        m.add_variable(f"v{i}", range(10))
    with pytest.raises(CapacityError):
        oracles.enumerate_marginals(m)


def test_subset_examples():
    assert oracles.brute_subset_sum([1, 2, 4], 5) == (True, list(range(8)))
    ok, sums = oracles.brute_subset_sum([2, 4], 3)
    assert not ok and sums == [0, 2, 4, 6]
    with pytest.raises(ArityError):
        oracles.brute_subset_sum([], 0)
    best, wit = oracles.brute_knapsack([1, 2, 3], [1.0, 5.0, 2.0], 3)
    assert best == 6.0 and wit == [[1, 1, 0]]
    assert oracles.brute_knapsack([2, 2], [1.0, 1.0], 3) == (None, [])
    best, wit = oracles.brute_knapsack([1, 1], [1.0, 1.0], 1)
    assert best == 1.0 and len(wit) == 2


def random_hmm(r, k=2, s=3):
    pi = r.random(k) + 0.05
    A = r.random((k, k)) + 0.05
    B = r.random((k, s)) + 0.05
    return pi / pi.sum(), A / A.sum(1, keepdims=True), B / B.sum(1, keepdims=True)


@settings(max_examples=40)
@given(st.integers(0, 10 ** 6), st.integers(1, 7))
def test_hmm_dps_match_path_enumeration(seed, n):
    r = np.random.default_rng(seed)
    pi, A, B = random_hmm(r)
    obs = r.integers(0, 3, n).tolist()
    paths = oracles.enumerate_paths(pi, A, B, obs)
    probs = np.array([w for _, w in paths])
    best = paths[int(np.argmax(probs))][0]
    vit = oracles.viterbi(pi, A, B, obs)
    assert oracles.path_probability(pi, A, B, obs, vit) == pytest.approx(
        oracles.path_probability(pi, A, B, obs, best), rel=1e-12)
    post = oracles.forward_backward(pi, A, B, obs)
    np.testing.assert_allclose(post.sum(1), 1.0, atol=1e-12)
    for t in range(n):
        ref = np.zeros(2)
        for path, w in paths:
            ref[path[t]] += w
        np.testing.assert_allclose(post[t], ref / ref.sum(), atol=1e-12)

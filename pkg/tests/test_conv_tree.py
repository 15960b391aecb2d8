import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from convforest import oracles
from convforest import pmf as P
from convforest.conv_tree import ConvTree, build
from convforest.errors import ArityError, ContradictionError, NotReadyError, ShapeError
from convforest.pmf import LabeledPmf, SupportBox


def vec(origin, values):
    return LabeledPmf(("x",), [origin], np.asarray(values, float))


def dense(m, lo, hi):
    return m.dense_over(SupportBox([lo], [hi]))


def test_shapes():
    t = build(4)
    assert len(t.nodes) == 7 and t.depth == 2
    one = build(1)
    assert len(one.nodes) == 1 and one.root.is_leaf
    assert build(5).depth == 3
    with pytest.raises(ArityError):
        build(0)


def test_single_leaf_tree():
    t = build(1)
    t.receive_prior(0, vec(0, [0.2, 0.3, 0.5]))
    t.receive_sum_likelihood(vec(1, [1.0, 1.0]))
    np.testing.assert_allclose(dense(t.leaf_posterior(0), 0, 2), [0, 0.375, 0.625])
    np.testing.assert_allclose(dense(t.sum_posterior(), 0, 2), [0, 0.375, 0.625])


def test_two_coins_sum_one():
    t = build(2)
    for i in range(2):
        t.receive_prior(i, vec(0, [0.5, 0.5]))
    t.receive_sum_likelihood(LabeledPmf.delta("y", [1]))
    np.testing.assert_allclose(dense(t.leaf_posterior(0), 0, 1), [0.5, 0.5])


def test_forced_value():
    t = build(2)
    t.receive_prior(0, vec(0, [0.5, 0.5]))
    t.receive_prior(1, LabeledPmf.delta("x", [0]))
    t.receive_sum_likelihood(LabeledPmf.delta("y", [1]))
    post = t.leaf_posterior(0)
    assert post.origin.tolist() == [1] and post.table.tolist() == [1.0]


def fig2_tree():
    t = build(4)
    for i, (o, k) in enumerate([(0, 3), (0, 2), (1, 2), (1, 3)]):
        t.receive_prior(i, vec(o, np.ones(k)))
    t.receive_sum_likelihood(vec(1, np.ones(3)))
    return t


def test_support_passes_worked_example():
    t = fig2_tree()
    root = t.support_forward_pass()
    assert root == SupportBox([2], [8])
    boxes = t.support_backward_pass()
    assert boxes[3].hi.tolist() == [2]
    assert t.trimmed_box() == SupportBox([2], [3])
    post = t.leaf_posterior(3)
    assert post.support().max() == 2


def test_all_delta_boxes():
    t = build(3)
    for i in range(3):
        t.receive_prior(i, LabeledPmf.delta("x", [0]))
    t.receive_sum_likelihood(LabeledPmf.delta("y", [0]))
    t.support_forward_pass()
    t.support_backward_pass()
    for node in t.nodes:
        assert node.trimmed == SupportBox([0], [0])


def test_not_ready_and_contradiction():
    t = build(3)
    t.receive_prior(0, vec(0, [1, 1]))
    with pytest.raises(NotReadyError):
        t.request_sum_prior()
    t.receive_prior(1, vec(0, [1, 1]))
    t.receive_prior(2, vec(0, [1, 1]))
    with pytest.raises(NotReadyError):
        t.request_leaf_likelihood(0)
    t.receive_sum_likelihood(LabeledPmf.delta("y", [9]))
    with pytest.raises(ContradictionError):
        t.request_leaf_likelihood(0)
    with pytest.raises(IndexError):
        t.receive_prior(3, vec(0, [1]))
    with pytest.raises(ShapeError):
        t.receive_prior(0, LabeledPmf(("a", "b"), [0, 0], np.ones((1, 1))))


def test_lazy_dirtying_counters():
    n = 64
    t = build(n)
    for i in range(n):
        t.receive_prior(i, vec(0, [0.5, 0.5]))
    t.receive_sum_likelihood(vec(0, np.ones(n + 1)))
    t.request_sum_prior()
    t.reset_counters()
    t.receive_prior(5, vec(0, [0.4, 0.6]))
    first = t.nodes_touched
    assert first == t.depth + 1
    t.reset_counters()
    t.receive_prior(4, vec(0, [0.3, 0.7]))
    assert t.nodes_touched <= 2
    t.reset_counters()
    t.receive_prior(4, vec(0, [0.2, 0.8]))
    assert t.nodes_touched <= 2


def test_first_request_touches_linear_nodes():
    n = 512
    t = build(n)
    for i in range(n):
        t.receive_prior(i, vec(0, [0.5, 0.5]))
    t.receive_sum_likelihood(vec(0, np.ones(n + 1)))
    t.reset_counters()
    t.request_sum_prior()
    assert n <= t.nodes_touched <= 4 * n


def test_cache_reuse_gives_same_answer(rng):
    n = 9
    priors = [vec(int(rng.integers(0, 3)), rng.random(3) + 0.1) for _ in range(n)]
    t = build(n)
    for i, m in enumerate(priors):
        t.receive_prior(i, m)
    t.receive_sum_likelihood(vec(8, rng.random(6) + 0.1))
    first = [t.leaf_posterior(i) for i in range(n)]
    t.receive_prior(3, priors[3])
    again = [t.leaf_posterior(i) for i in range(n)]
    for a, b in zip(first, again):
        np.testing.assert_allclose(a.table, b.table, atol=1e-14)


def enumerate_tree(priors, lik, p):
    jm = oracles.JointModel()
    labels = [f"x{i}" for i in range(len(priors))]
    for lab, m in zip(labels, priors):
        jm.add_variable(lab, m.support().tolist())
        jm.add_table([lab], m.origin, m.table)
    lo = sum(int(m.origin[0]) for m in priors)
    hi = sum(int(m.support().max()) for m in priors)
    jm.add_variable("y", range(lo, hi + 1))
    jm.add_table(["y"], lik.origin, lik.table)
    jm.add_constraint(["y"] + labels, lambda y, *xs: float(y == sum(xs)))
    return jm, labels


def random_instance(seed, n_max=6, k_max=4):
    r = np.random.default_rng(seed)
    n = int(r.integers(1, n_max + 1))
    priors = [vec(int(r.integers(0, 3)), r.random(int(r.integers(1, k_max + 1))) + 0.05)
              for _ in range(n)]
    lo = sum(int(m.origin[0]) for m in priors)
    hi = sum(int(m.support().max()) for m in priors)
    a = int(r.integers(lo, hi + 1))
    b = int(r.integers(a, hi + 1))
    lik = vec(a, r.random(b - a + 1) + 0.05)
    return priors, lik


@settings(max_examples=40)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([1.0, math.inf]))
def test_exact_against_enumeration(seed, p):
    priors, lik = random_instance(seed)
    t = ConvTree(len(priors), p)
    for i, m in enumerate(priors):
        t.receive_prior(i, m)
    t.receive_sum_likelihood(lik)
    jm, labels = enumerate_tree(priors, lik, p)
    ref = oracles.enumerate_marginals(jm, p)
    tol = 1e-9 if p == 1 else 1e-6
    for i, lab in enumerate(labels):
        post = t.leaf_posterior(i)
        for v, w in ref[lab].items():
            assert abs(post.value_at([v]) - w) <= tol


@settings(max_examples=30)
@given(st.integers(0, 2 ** 32 - 1))
def test_trimming_does_not_change_posteriors(seed):
    priors, lik = random_instance(seed, n_max=10, k_max=6)
    out = []
    for trim in (True, False):
        t = ConvTree(len(priors), 1.0, trim=trim)
        for i, m in enumerate(priors):
            t.receive_prior(i, m)
        t.receive_sum_likelihood(lik)
        out.append([t.leaf_posterior(i) for i in range(len(priors))])
    for a, b in zip(*out):
        lo, hi = min(a.origin[0], b.origin[0]), max(a.support().max(), b.support().max())
        np.testing.assert_allclose(dense(a, lo, hi), dense(b, lo, hi), atol=1e-9)


@settings(max_examples=30)
@given(st.integers(0, 2 ** 32 - 1))
def test_cached_boxes_stay_inside_trimmed(seed):
    priors, lik = random_instance(seed, n_max=8)
    t = ConvTree(len(priors), 1.0)
    for i, m in enumerate(priors):
        t.receive_prior(i, m)
    t.receive_sum_likelihood(lik)
    for i in range(len(priors)):
        t.leaf_posterior(i)
    for node in t.nodes:
        if node.trimmed is None:
            continue
        assert node.prior_box.contains(node.trimmed)
        if node.lik_box is not None:
            assert node.lik_box.contains(node.trimmed)
        if node.prior_pmf is not None and not node.prior_dirty:
            assert node.trimmed.contains(node.prior_pmf.box)


def test_binary_trimmed_boxes_small():
    n = 100
    t = build(n)
    for i in range(n):
        t.receive_prior(i, vec(0, [0.3, 0.7]))
    t.receive_sum_likelihood(vec(0, [0.5, 0.5]))
    for i in range(n):
        t.leaf_posterior(i)
    assert max(nd.trimmed.shape[0] for nd in t.nodes) <= 2


def test_two_dimensional_tree(rng):
    n = 3
    priors = [LabeledPmf(("a", "b"), [0, 0], rng.random((2, 3)) + 0.1) for _ in range(n)]
    lik = LabeledPmf(("s", "t"), [1, 2], rng.random((3, 4)) + 0.1)
    t = ConvTree(n, 1.0, dim=2)
    for i, m in enumerate(priors):
        t.receive_prior(i, m)
    t.receive_sum_likelihood(lik)
    # brute force over 6**3 joint states
    post = np.zeros((2, 3))
    cells = list(np.ndindex(2, 3))
    for idx in itertools.product(cells, repeat=n):
        s = np.sum(idx, axis=0)
        w = np.prod([priors[k].table[idx[k]] for k in range(n)])
        w *= lik.value_at([s[0], s[1]])
        post[idx[0]] += w
    post /= post.sum()
    got = t.leaf_posterior(0).dense_over(SupportBox([0, 0], [1, 2]))
    np.testing.assert_allclose(got, post, atol=1e-12)

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from convforest import pmf as P
from convforest.errors import (ContradictionError, DegenerateMessageError, DomainError,
                               LabelError, ParseError)
from convforest.pmf import LabeledPmf, SupportBox


def pmf(label, origin, values):
    return LabeledPmf((label,) if isinstance(label, str) else label, np.atleast_1d(origin),
                      np.asarray(values, float))


def test_construction_rejects_bad_tables():
    with pytest.raises(DegenerateMessageError):
        pmf("x", 0, [0.0, 0.0])
    with pytest.raises(LabelError):
        LabeledPmf(("x", "x"), [0, 0], np.ones((2, 2)))


def test_normalize_examples():
    np.testing.assert_allclose(P.normalize(pmf("x", 0, [2, 2])).table, [0.5, 0.5])
    m = pmf("x", 3, [0.25, 0.75])
    np.testing.assert_array_equal(P.normalize(m).table, m.table)
    out = P.normalize(pmf(("x", "y"), [0, 0], [[1, 3], [0, 0]]))
    np.testing.assert_allclose(out.table, [[0.25, 0.75], [0, 0]])


def test_narrow_examples():
    m = P.narrow_support(pmf("x", 0, [0, 0, 1, 2, 0]))
    assert m.origin.tolist() == [2]
    np.testing.assert_array_equal(m.table, [1, 2])
    full = pmf("x", 0, [1, 2])
    assert P.narrow_support(full) is full
    t = np.zeros((5, 4))
    t[1:4, 1:3] = [[1, 0], [0, 2], [3, 0]]
    m = P.narrow_support(pmf(("x", "y"), [10, -2], t))
    assert m.origin.tolist() == [11, -1] and m.shape == (3, 2)


def test_multiply_examples():
    out = P.multiply(pmf("x", 0, [0.5, 0.5]), pmf("x", 1, [0.3, 0.7]))
    assert out.origin.tolist() == [1]
    np.testing.assert_allclose(out.table, [1.0])
    m = pmf("x", 2, [0.2, 0.3, 0.5])
    np.testing.assert_allclose(P.multiply(m, LabeledPmf.uniform("x", 2, 4)).table, m.table)
    j = P.multiply(pmf("x", 0, [0.5, 0.5]), pmf("y", 0, [1.0]))
    assert j.labels == ("x", "y") and j.shape == (2, 1)
    np.testing.assert_allclose(j.table, [[0.5], [0.5]])
    with pytest.raises(ContradictionError):
        P.multiply(pmf("x", 0, [1, 1]), pmf("x", 5, [1]))


def test_marginalize_examples():
    m = pmf(("a", "b"), [0, 0], [[0.1, 0.2], [0.3, 0.4]])
    np.testing.assert_allclose(P.marginalize(m, ["b"], 1).table, [0.4, 0.6])
    np.testing.assert_allclose(P.marginalize(m, ["b"], math.inf).table, [3 / 7, 4 / 7])
    np.testing.assert_allclose(P.marginalize(m, ["a", "b"]).table, m.table)
    swapped = P.marginalize(m, ["b", "a"])
    np.testing.assert_allclose(swapped.table, m.table.T)
    with pytest.raises(LabelError):
        P.marginalize(m, ["c"])


def test_negate_examples():
    n = P.negate_axes(pmf("x", 1, [0.2, 0.8]))
    assert n.origin.tolist() == [-2]
    np.testing.assert_allclose(n.table, [0.8, 0.2])
    assert P.negate_axes(pmf("x", 0, [0.5, 0.5])).origin.tolist() == [-1]


def test_add_examples():
    coin = pmf("x", 0, [0.5, 0.5])
    s = P.add_pmfs(coin, coin, 1)
    assert s.origin.tolist() == [0]
    np.testing.assert_allclose(s.table, [0.25, 0.5, 0.25])
    np.testing.assert_allclose(P.add_pmfs(coin, coin, math.inf).table, [1 / 3] * 3)
    m = pmf("x", 2, [0.1, 0.6, 0.3])
    shifted = P.add_pmfs(m, LabeledPmf.delta("x", [5]))
    assert shifted.origin.tolist() == [7]
    np.testing.assert_allclose(shifted.table, m.table)


def test_scale_examples():
    m = pmf("k", 0, [0.2, 0.3, 0.5])
    s = P.scale_support(m, [7])
    np.testing.assert_allclose(s.dense_over(SupportBox([0], [14])).take([0, 7, 14]), m.table)
    assert s.table[s.table > 0].size == 3
    half = P.scale_support(pmf("k", 0, [0.4, 0.6]), [1.5])
    np.testing.assert_allclose(half.table, [0.4, 0.3, 0.3])
    assert half.origin.tolist() == [0]
    assert P.scale_support(m, [1.0]).table.tolist() == m.table.tolist()
    with pytest.raises(DomainError):
        P.scale_support(m, [0.0])


def test_scale_dithers_by_fraction():
    s = P.scale_support(LabeledPmf.delta("k", [1]), [128.1723])
    assert s.origin.tolist() == [128]
    np.testing.assert_allclose(s.table, [1 - 0.1723, 0.1723], atol=1e-9)


def test_scale_interpolate_fills_gaps():
    s = P.scale_support(pmf("k", 0, [1.0, 0.0, 1.0]), [2.0], interpolate=True)
    np.testing.assert_allclose(s.table, [1.0, 0.5, 0.0, 0.5, 1.0])


def test_serialization_round_trip(rng):
    m = pmf(("a", "b"), [-3, 4], rng.random((3, 5)))
    back = LabeledPmf.from_json(m.to_json())
    assert back.labels == m.labels and back.origin.tolist() == m.origin.tolist()
    assert back.table.tobytes() == m.table.tobytes()
    with pytest.raises(ParseError):
        LabeledPmf.from_dict({"labels": ["a"], "origin": [0], "shape": [3], "values": [1, 2]})


def test_crop_and_boxes():
    m = pmf("x", 0, [0.1, 0.2, 0.3, 0.4])
    c = P.crop(m, SupportBox([1], [2]))
    assert c.origin.tolist() == [1] and c.shape == (2,)
    with pytest.raises(ContradictionError):
        P.crop(m, SupportBox([9], [10]))
    a, b = SupportBox([0, 1], [2, 3]), SupportBox([1, 1], [1, 1])
    assert (a + b) == SupportBox([1, 2], [3, 4])
    assert (a - b) == SupportBox([-1, 0], [1, 2])
    assert a.contains(b) and not b.contains(a)


# -- properties

def random_pmf(label, seed, max_len=6, lo=-4, hi=4):
    r = np.random.default_rng(seed)
    t = r.random(int(r.integers(1, max_len + 1))) * (r.random() + 0.1)
    t[r.integers(0, t.size)] += 0.5
    return P.narrow_support(pmf(label, int(r.integers(lo, hi + 1)), t))


seeds = st.integers(0, 2 ** 32 - 1)


@given(seeds, seeds, seeds)
def test_multiply_commutative_associative(s1, s2, s3):
    a, b, c = (random_pmf("x", s, lo=0, hi=1, max_len=8) for s in (s1, s2, s3))
    try:
        ab = P.multiply(a, b)
    except ContradictionError:
        return
    ba = P.multiply(b, a)
    np.testing.assert_allclose(ab.table, ba.table, atol=1e-12)
    try:
        left = P.multiply(ab, c)
    except ContradictionError:
        return
    right = P.multiply(a, P.multiply(b, c))
    assert left.origin.tolist() == right.origin.tolist()
    np.testing.assert_allclose(left.table, right.table, atol=1e-12)


@given(seeds, seeds)
def test_add_conserves_mass_and_support(s1, s2):
    a, b = P.normalize(random_pmf("x", s1)), P.normalize(random_pmf("x", s2))
    from convforest.convolution import convolve_naive
    raw = convolve_naive(a.table, b.table)
    assert abs(raw.sum() - 1.0) <= 1e-12
    s = P.add_pmfs(a, b, 1)
    assert s.origin[0] == a.origin[0] + b.origin[0]
    assert s.shape[0] == a.shape[0] + b.shape[0] - 1


@given(seeds, seeds, st.sampled_from([1.0, 2.0, math.inf]))
def test_negation_and_subtraction(s1, s2, p):
    a, b = random_pmf("x", s1), random_pmf("x", s2)
    nn = P.negate_axes(P.negate_axes(a))
    assert nn.origin.tolist() == a.origin.tolist()
    np.testing.assert_array_equal(nn.table, a.table)
    back = P.subtract_pmfs(P.add_pmfs(a, b, p), b, p)
    assert SupportBox.of(back).contains(SupportBox.of(a))


@given(seeds, st.integers(1, 9))
def test_integer_scaling_preserves_masses(s, k):
    a = random_pmf("x", s)
    out = P.scale_support(a, [k])
    box = SupportBox([a.origin[0] * k], [(a.origin[0] + a.shape[0] - 1) * k])
    dense = out.dense_over(box)
    np.testing.assert_array_equal(dense[::k], a.table)


@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=3, max_side=4),
                  elements=st.floats(0, 1)),
       st.sampled_from([1.0, 3.0, math.inf]))
def test_marginal_of_joint_matches_numpy(t, p):
    if not (t > 0).any():
        return
    labels = tuple("abc"[:t.ndim])
    m = LabeledPmf(labels, np.zeros(t.ndim, int), t)
    got = P.marginalize(m, ("a",), p)
    axes = tuple(range(1, t.ndim))
    t = t / t.max()  # keep t ** p clear of underflow
    ref = t.max(axis=axes) if math.isinf(p) else (t ** p).sum(axis=axes) ** (1 / p)
    ref = ref / ref.sum()
    dense = got.dense_over(SupportBox([0], [t.shape[0] - 1]))
    np.testing.assert_allclose(dense, ref, atol=1e-12)

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from convforest.convolution import (NAIVE_THRESHOLD, check_p, convolve, convolve_fft,
                                    convolve_naive, max_convolve_naive, out_shape, p_convolve,
                                    stability_probe, support_mask)
from convforest.errors import DomainError, ShapeError


def brute_conv(x, y, op):
    """Double loop over all index pairs (1D or 2D)."""
    x, y = np.atleast_1d(x), np.atleast_1d(y)
    out = np.zeros(tuple(a + b - 1 for a, b in zip(x.shape, y.shape)))
    for i in np.ndindex(x.shape):
        for j in np.ndindex(y.shape):
            k = tuple(a + b for a, b in zip(i, j))
            v = x[i] * y[j]
            out[k] = out[k] + v if op == "sum" else max(out[k], v)
    return out


def test_naive_examples():
    np.testing.assert_array_equal(convolve_naive([1.0, 2], [1.0, 1]), [1, 3, 2])
    x = np.array([0.3, 0.0, 2.5, 1.0])
    np.testing.assert_array_equal(convolve_naive(x, [1.0]), x)
    np.testing.assert_array_equal(convolve_naive(np.ones((2, 2)), np.ones((2, 2))),
                                  [[1, 2, 1], [2, 4, 2], [1, 2, 1]])


def test_max_naive_examples():
    np.testing.assert_array_equal(max_convolve_naive([1.0, 2], [1.0, 1]), [1, 2, 2])
    x = np.array([0.3, 0.0, 2.5, 1.0])
    np.testing.assert_array_equal(max_convolve_naive(x, [1.0]), x)


def test_axis_mismatch():
    with pytest.raises(ShapeError):
        convolve_naive(np.ones(3), np.ones((2, 2)))


def test_fft_small_example():
    np.testing.assert_allclose(convolve_fft([1.0, 2], [1.0, 1]), [1, 3, 2], atol=1e-12)


def test_fft_matches_naive_2d(rng):
    x, y = rng.random((8, 8)), rng.random((8, 8))
    ref = convolve_naive(x, y)
    assert np.max(np.abs(convolve_fft(x, y) - ref)) <= 1e-9 * ref.max()


def test_fft_3d(rng):
    x, y = rng.random((3, 5, 4)), rng.random((2, 3, 7))
    np.testing.assert_allclose(convolve_fft(x, y), brute_conv(x, y, "sum"), atol=1e-10)


small = hnp.arrays(np.float64, st.integers(1, 12), elements=st.floats(0, 1))


@given(small, small)
def test_naive_matches_brute(x, y):
    np.testing.assert_allclose(convolve_naive(x, y), brute_conv(x, y, "sum"), atol=1e-12)
    np.testing.assert_allclose(max_convolve_naive(x, y), brute_conv(x, y, "max"), atol=0)


@given(small, small)
def test_max_bounded_by_peaks(x, y):
    assert (max_convolve_naive(x, y) <= x.max() * y.max() + 1e-300).all()


def test_support_mask_and_dispatch(rng):
    x = np.zeros(400)
    x[[0, 399]] = 1
    y = np.zeros(300)
    y[5] = 1
    m = support_mask(x, y)
    assert m.sum() == 2 and m[5] and m[404]
    out = convolve(x, y)
    assert out.shape == out_shape(x.shape, y.shape)
    assert (out[~m] == 0).all()
    np.testing.assert_allclose(out[m], [1, 1])


def test_p_validation():
    assert math.isinf(check_p("inf"))
    with pytest.raises(DomainError):
        check_p(0.5)
    with pytest.raises(DomainError):
        p_convolve([0.5, 1.2], [1.0], 2)


def test_p_small_exact_paths():
    np.testing.assert_array_equal(p_convolve([1.0, 0.5], [0.5, 0.5], math.inf),
                                  max_convolve_naive([1.0, 0.5], [0.5, 0.5]))
    np.testing.assert_array_equal(p_convolve([1.0, 1.0], [1.0, 1.0], math.inf), [1, 1, 1])


def test_p1_matches_naive_large(rng):
    x, y = rng.random(1500), rng.random(900)
    ref = convolve_naive(x, y)
    assert np.max(np.abs(p_convolve(x, y, 1) - ref) / ref) <= 1e-9


@pytest.mark.parametrize("p", [2.0, 7.5, 32.0])
def test_finite_p_large_close(rng, p):
    x, y = rng.uniform(1e-3, 1, 2000), rng.uniform(1e-3, 1, 2000)
    ref = p_convolve(x, y, p, exact=True)
    rel = np.abs(p_convolve(x, y, p) - ref) / ref
    assert rel.max() <= 0.1 and np.mean(rel <= 0.01) >= 0.95


def test_inf_large_close_sparse(rng):
    x = rng.uniform(1e-3, 1, 3000) * (rng.random(3000) < 0.3)
    y = rng.uniform(1e-3, 1, 2000) * (rng.random(2000) < 0.3)
    ref = max_convolve_naive(x, y)
    out = p_convolve(x, y, math.inf)
    nz = ref > 0
    assert ((out > 0) == nz).all()
    rel = np.abs(out[nz] - ref[nz]) / ref[nz]
    assert rel.max() <= 0.1 and np.mean(rel <= 0.01) >= 0.95


def test_inf_large_2d(rng):
    x, y = rng.uniform(1e-3, 1, (30, 30)), rng.uniform(1e-3, 1, (20, 25))
    ref = max_convolve_naive(x, y)
    rel = np.abs(p_convolve(x, y, math.inf) - ref) / ref
    assert rel.max() <= 0.1 and np.mean(rel <= 0.01) >= 0.95


def test_stability_probe_examples(rng):
    assert stability_probe(np.ones(16), 64)
    assert not stability_probe(np.array([1.0, 1e-300, 0.5]), 2)
    assert stability_probe(rng.uniform(0.5, 1, 1024), 8)
    mask = stability_probe(np.ones(8), 16, np.ones(8))
    assert mask.all() and mask.shape == (15,)


pmf_vec = hnp.arrays(np.float64, st.integers(1, 10), elements=st.floats(0, 1))


@given(pmf_vec, pmf_vec, st.sampled_from([1.0, 1.5, 2.0, 8.0, math.inf]))
def test_p_convolve_symmetric(x, y, p):
    np.testing.assert_allclose(p_convolve(x, y, p), p_convolve(y, x, p), rtol=1e-12, atol=0)


@given(pmf_vec, pmf_vec)
def test_p_convolve_monotone_in_p(x, y):
    prev = p_convolve(x, y, 1.0)
    for p in (1.5, 2.0, 4.0, 16.0, math.inf):
        cur = p_convolve(x, y, p)
        assert (cur <= prev * (1 + 1e-12) + 1e-300).all()
        prev = cur


def test_large_input_rejected_outside_unit(rng):
    assert NAIVE_THRESHOLD < 4000
    with pytest.raises(DomainError):
        p_convolve(rng.random(3000) * 2, rng.random(3000), math.inf)

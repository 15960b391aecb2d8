"""Radix-2 FFTs: decimation in time and in frequency, real FFT, nd FFT.

Conventions: the forward transform uses ``exp(-2j*pi*k*n/N)``; the inverse
uses the conjugate kernel and divides by ``N``.  A DIF transform takes
natural-order input and, without shuffling, leaves its output in
bit-reversed order.  A DIT transform without shuffling expects bit-reversed
input and produces natural order.  Convolution exploits this pairing to skip
both permutations.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit

from .errors import CapacityError, LengthError, ShapeError
from .tensor import is_pow2, rotate_axes_flat, rotate_suffix

#: Default maximum log2 length of a 1D transform.
MAX_LOG_N = 32

#: Recurrence steps between exact trigonometric refreshes of a twiddle table.
TWIDDLE_REFRESH = 1 << 12

# Butterfly stages whose span is at most this many points are run block by
# block so that each block stays in cache.
_BLOCK = 1 << 16

DIT = "DIT"
DIF = "DIF"
FORWARD = "forward"
INVERSE = "inverse"


@dataclass(frozen=True)
class FftOptions:
    variant: str = DIF
    do_shuffle: bool = True
    undo_transposes: bool = True
    direction: str = FORWARD

    def __post_init__(self):
        if self.variant not in (DIT, DIF):
            raise ValueError(f"variant must be DIT or DIF, got {self.variant!r}")
        if self.direction not in (FORWARD, INVERSE):
            raise ValueError(f"direction must be forward or inverse, got {self.direction!r}")

    @property
    def inverse(self):
        return self.direction == INVERSE


def check_max_log_n(max_log_n):
    if not 1 <= int(max_log_n) <= 63:
        raise ValueError(f"max_log_n must be in [1, 63], got {max_log_n}")
    return int(max_log_n)


def _check_length(n, max_log_n=MAX_LOG_N):
    max_log_n = check_max_log_n(max_log_n)
    if not is_pow2(n):
        raise LengthError(f"length {n} is not a power of two")
    if n > (1 << max_log_n):
        raise CapacityError(f"length {n} exceeds 2**{max_log_n}")


# ---------------------------------------------------------------- kernels

@njit(cache=True)
def twiddle_advance(current, delta_minus_one):
    """Next unit-circle sample: ``current * exp(-j*theta)`` written as
    ``current + current * (exp(-j*theta) - 1)``."""
    return current + current * delta_minus_one


@njit(cache=True)
def _delta_minus_one(theta):
    # cos(theta) - 1 == -2 sin^2(theta/2), exact near theta == 0.
    s = math.sin(0.5 * theta)
    return complex(-2.0 * s * s, math.sin(theta))


@njit(cache=True)
def _twiddle_table(n, sign):
    """``w[k] = exp(sign * 2j*pi*k/n)`` for ``k < n/2`` via the stable recurrence."""
    half = n // 2
    w = np.empty(max(half, 1), np.complex128)
    theta = sign * 2.0 * math.pi / n
    delta = _delta_minus_one(theta)
    cur = complex(1.0, 0.0)
    for k in range(half):
        if k % TWIDDLE_REFRESH == 0:
            cur = complex(math.cos(theta * k), math.sin(theta * k))
        w[k] = cur
        cur = twiddle_advance(cur, delta)
    return w


@njit(cache=True)
def _bitrev_simple(a):
    n = a.shape[0]
    j = 0
    for i in range(n - 1):
        if i < j:
            t = a[i]
            a[i] = a[j]
            a[j] = t
        m = n >> 1
        while j & m:
            j ^= m
            m >>= 1
        j |= m


@njit(cache=True)
def _reverse_bits(v, bits):
    r = 0
    for _ in range(bits):
        r = (r << 1) | (v & 1)
        v >>= 1
    return r


_TILE_BITS = 5


@njit(cache=True)
def _bitrev_inplace(a):
    """Swap ``a[i]`` and ``a[rev(i)]``; tiles of 32x32 keep accesses contiguous."""
    n = a.shape[0]
    k = 0
    while (1 << k) < n:
        k += 1
    q = _TILE_BITS
    if k < 2 * q + 1:
        _bitrev_simple(a)
        return
    qn = 1 << q
    mid = k - 2 * q
    rq = np.empty(qn, np.int64)
    for i in range(qn):
        rq[i] = _reverse_bits(i, q)
    t1 = np.empty((qn, qn), a.dtype)
    t2 = np.empty((qn, qn), a.dtype)
    hi = k - q
    for b in range(1 << mid):
        rb = _reverse_bits(b, mid)
        if rb < b:
            continue
        for x in range(qn):
            base1 = (x << hi) | (b << q)
            base2 = (x << hi) | (rb << q)
            for c in range(qn):
                t1[x, c] = a[base1 | c]
                t2[x, c] = a[base2 | c]
        # (x, b, c) -> (rev c, rev b, rev x)
        for x2 in range(qn):
            base1 = (x2 << hi) | (rb << q)
            base2 = (x2 << hi) | (b << q)
            cx = rq[x2]
            for c2 in range(qn):
                a[base1 | c2] = t1[rq[c2], cx]
                a[base2 | c2] = t2[rq[c2], cx]


@njit(cache=True)
def _bitrev_rows(a):
    """Bit-reverse every row of ``a`` with one shared swap list."""
    rows, n = a.shape
    k = 0
    while (1 << k) < n:
        k += 1
    pairs = np.empty((n, 2), np.int64)
    m = 0
    for i in range(n):
        j = _reverse_bits(i, k)
        if i < j:
            pairs[m, 0] = i
            pairs[m, 1] = j
            m += 1
    for r in range(rows):
        for q in range(m):
            i = pairs[q, 0]
            j = pairs[q, 1]
            t = a[r, i]
            a[r, i] = a[r, j]
            a[r, j] = t


@njit(cache=True)
def _bitrev_copy(src, dst, scale):
    """``dst[rev(i)] = src[i] * scale``; one pass that also copies and scales."""
    n = src.shape[0]
    k = 0
    while (1 << k) < n:
        k += 1
    q = _TILE_BITS
    if k < 2 * q + 1:
        for i in range(n):
            dst[_reverse_bits(i, k)] = src[i] * scale
        return
    qn = 1 << q
    mid = k - 2 * q
    hi = k - q
    rq = np.empty(qn, np.int64)
    for i in range(qn):
        rq[i] = _reverse_bits(i, q)
    t = np.empty((qn, qn), src.dtype)
    for b in range(1 << mid):
        rb = _reverse_bits(b, mid)
        for x in range(qn):
            base = (x << hi) | (b << q)
            for c in range(qn):
                t[x, c] = src[base | c]
        for x2 in range(qn):
            base = (x2 << hi) | (rb << q)
            cx = rq[x2]
            for c2 in range(qn):
                dst[base | c2] = t[rq[c2], cx] * scale


@njit(cache=True, fastmath=True)
def _dif_stage(a, tw, stride, start, stop, span):
    half = span >> 1
    for s in range(start, stop, span):
        for j in range(half):
            w = tw[j * stride]
            u = a[s + j]
            v = a[s + j + half]
            a[s + j] = u + v
            a[s + j + half] = (u - v) * w


@njit(cache=True, fastmath=True)
def _dit_stage(a, tw, stride, start, stop, span):
    half = span >> 1
    for s in range(start, stop, span):
        for j in range(half):
            w = tw[j * stride]
            u = a[s + j]
            v = a[s + j + half] * w
            a[s + j] = u + v
            a[s + j + half] = u - v


@njit(cache=True, fastmath=True)
def _dif_stage2(a, tw_hi, stride_hi, tw_lo, stride_lo, start, stop, span):
    # two DIF stages (spans ``span`` and ``span/2``) fused into one pass
    q = span >> 2
    # tw_hi at j + q is tw_hi at j times +-i
    sg = 1.0 if tw_hi[q * stride_hi].imag > 0 else -1.0
    for s in range(start, stop, span):
        for j in range(q):
            w1 = tw_hi[j * stride_hi]
            w3 = tw_lo[j * stride_lo]
            i0 = s + j
            x0 = a[i0]
            x1 = a[i0 + q]
            x2 = a[i0 + 2 * q]
            x3 = a[i0 + 3 * q]
            y0 = x0 + x2
            y2 = (x0 - x2) * w1
            y1 = x1 + x3
            t = (x1 - x3) * w1
            y3 = complex(-sg * t.imag, sg * t.real)
            a[i0] = y0 + y1
            a[i0 + q] = (y0 - y1) * w3
            a[i0 + 2 * q] = y2 + y3
            a[i0 + 3 * q] = (y2 - y3) * w3


@njit(cache=True, fastmath=True)
def _dit_stage2(a, tw_hi, stride_hi, tw_lo, stride_lo, start, stop, span):
    # two DIT stages (spans ``span/2`` and ``span``) fused into one pass
    q = span >> 2
    # tw_hi at j + q is tw_hi at j times +-i
    sg = 1.0 if tw_hi[q * stride_hi].imag > 0 else -1.0
    for s in range(start, stop, span):
        for j in range(q):
            w1 = tw_hi[j * stride_hi]
            w3 = tw_lo[j * stride_lo]
            i0 = s + j
            x0 = a[i0]
            x1 = a[i0 + q] * w3
            x2 = a[i0 + 2 * q]
            x3 = a[i0 + 3 * q] * w3
            y0 = x0 + x1
            y1 = x0 - x1
            y2 = (x2 + x3) * w1
            t = (x2 - x3) * w1
            y3 = complex(-sg * t.imag, sg * t.real)
            a[i0] = y0 + y2
            a[i0 + 2 * q] = y0 - y2
            a[i0 + q] = y1 + y3
            a[i0 + 3 * q] = y1 - y3


@njit(cache=True)
def _local_twiddles(tw, n, top):
    """Twiddles of every span <= ``top`` packed contiguously: span ``s`` at [s/2, s)."""
    loc = np.empty(max(top, 2), np.complex128)
    sp = 2
    while sp <= top:
        half = sp >> 1
        stride = n // sp
        for j in range(half):
            loc[half + j] = tw[j * stride]
        sp <<= 1
    return loc


@njit(cache=True)
def _dif_range(a, tw, n, start, stop, span, last):
    """DIF stages from ``span`` down to ``last`` (exclusive) on ``a[start:stop]``.

    ``tw`` holds the full-length table when ``n`` is the transform length, or
    the packed local table when ``n == 0``.
    """
    while span > last:
        if span >> 1 > last:
            if n:
                _dif_stage2(a, tw, n // span, tw, 2 * (n // span), start, stop, span)
            else:
                _dif_stage2(a, tw[span >> 1:], 1, tw[span >> 2:], 1, start, stop, span)
            span >>= 2
        else:
            if n:
                _dif_stage(a, tw, n // span, start, stop, span)
            else:
                _dif_stage(a, tw[span >> 1:], 1, start, stop, span)
            span >>= 1


@njit(cache=True)
def _dit_range(a, tw, n, start, stop, span, last):
    """DIT stages from ``span`` up to ``last`` (inclusive); see ``_dif_range``."""
    while span <= last:
        if span << 1 <= last:
            span <<= 1
            if n:
                _dit_stage2(a, tw, n // span, tw, 2 * (n // span), start, stop, span)
            else:
                _dit_stage2(a, tw[span >> 1:], 1, tw[span >> 2:], 1, start, stop, span)
        else:
            if n:
                _dit_stage(a, tw, n // span, start, stop, span)
            else:
                _dit_stage(a, tw[span >> 1:], 1, start, stop, span)
        span <<= 1


@njit(cache=True)
def _dif_inplace(a, tw, loc):
    n = a.shape[0]
    top = min(n, _BLOCK)
    _dif_range(a, tw, n, 0, n, n, top)
    for b in range(0, n, top):
        _dif_range(a, loc, 0, b, b + top, top, 1)


@njit(cache=True)
def _dit_inplace(a, tw, loc):
    n = a.shape[0]
    top = min(n, _BLOCK)
    for b in range(0, n, top):
        _dit_range(a, loc, 0, b, b + top, 2, top)
    _dit_range(a, tw, n, 0, n, top << 1, n)


@njit(cache=True)
def _fft_rows_kernel(a, tw, loc, dif, shuffle, inverse):
    rows, n = a.shape
    if n <= _BLOCK and rows > 1:
        # stage spans tile the rows, so each stage sweeps all rows at once
        flat = a.reshape(rows * n)
        if not dif and shuffle:
            _bitrev_rows(a)
        if dif:
            _dif_range(flat, loc, 0, 0, rows * n, n, 1)
        else:
            _dit_range(flat, loc, 0, 0, rows * n, 2, n)
        if dif and shuffle:
            _bitrev_rows(a)
    else:
        for r in range(rows):
            row = a[r]
            if dif:
                _dif_inplace(row, tw, loc)
                if shuffle:
                    _bitrev_inplace(row)
            else:
                if shuffle:
                    _bitrev_inplace(row)
                _dit_inplace(row, tw, loc)
    if inverse:
        scale = 1.0 / n
        for r in range(rows):
            for i in range(n):
                a[r, i] *= scale


@njit(cache=True)
def _fft_dit_copy_kernel(src, dst, tw, loc, scale):
    _bitrev_copy(src, dst, scale)
    _dit_inplace(dst, tw, loc)


@lru_cache(maxsize=64)
def _tables(n, inverse):
    """Twiddle tables for length ``n``: the full table and the packed local one."""
    tw = _twiddle_table(n, 1.0 if inverse else -1.0)
    loc = _local_twiddles(tw, n, min(n, _BLOCK))
    tw.setflags(write=False)
    loc.setflags(write=False)
    return tw, loc


def _fft_rows(a, dif, shuffle, inverse):
    """In-place transform of every row of the 2D complex array ``a``."""
    n = a.shape[1]
    if n == 1:
        return
    tw, loc = _tables(n, inverse)
    _fft_rows_kernel(a, tw, loc, dif, shuffle, inverse)


@njit(cache=True)
def _rfft_rows_kernel(x, twh, loch, twn):
    rows, n = x.shape
    h = n // 2
    out = np.empty((rows, h + 1), np.complex128)
    if h == 0:
        for r in range(rows):
            out[r, 0] = x[r, 0]
        return out
    z = np.empty(h, np.complex128)
    for r in range(rows):
        for k in range(h):
            z[k] = complex(x[r, 2 * k], x[r, 2 * k + 1])
        if h > 1:
            _dif_inplace(z, twh, loch)
            _bitrev_inplace(z)
        # undo the final butterfly that packing real pairs introduced
        for k in range(h + 1):
            zk = z[k % h]
            zc = z[(h - k) % h].conjugate()
            ev = 0.5 * (zk + zc)
            od = -0.5j * (zk - zc)
            if k < h:
                out[r, k] = ev + twn[k] * od
            else:
                out[r, k] = ev - od
    return out


@njit(cache=True)
def _irfft_rows_kernel(spec, n, twh, loch, twn):
    rows = spec.shape[0]
    h = n // 2
    out = np.empty((rows, n), np.float64)
    if h == 0:
        for r in range(rows):
            out[r, 0] = spec[r, 0].real
        return out
    z = np.empty(h, np.complex128)
    for r in range(rows):
        for k in range(h):
            xk = spec[r, k]
            xc = spec[r, h - k].conjugate()
            ev = 0.5 * (xk + xc)
            od = 0.5 * (xk - xc) * twn[k]
            z[k] = ev + 1j * od
        if h > 1:
            _bitrev_inplace(z)
            _dit_inplace(z, twh, loch)
        scale = 1.0 / h
        for k in range(h):
            out[r, 2 * k] = z[k].real * scale
            out[r, 2 * k + 1] = z[k].imag * scale
    return out


_DUMMY = np.ones(2, np.complex128)


def _real_tables(n, inverse):
    h = n // 2
    twh, loch = _tables(h, inverse) if h > 1 else (_DUMMY, _DUMMY)
    twn = _tables(n, inverse)[0] if n > 1 else _DUMMY
    return twh, loch, twn


def _rfft_rows(x):
    """Half spectra (length n/2+1) of the real rows of ``x`` via n/2-point FFTs."""
    return _rfft_rows_kernel(x, *_real_tables(x.shape[1], False))


def _irfft_rows(spec, n):
    return _irfft_rows_kernel(spec, n, *_real_tables(n, True))


# ------------------------------------------------------------- public API

def bit_reverse_permute(x):
    """Return ``x`` with element ``i`` moved to ``reverse_bits(i)``."""
    a = np.array(x, copy=True)
    if a.ndim != 1:
        raise ShapeError("bit_reverse_permute expects a vector")
    if not is_pow2(a.shape[0]):
        raise LengthError(f"length {a.shape[0]} is not a power of two")
    if a.dtype != np.complex128:
        a = a.astype(np.complex128) if np.iscomplexobj(a) else a.astype(np.float64)
    _bitrev_inplace(a)
    return a


def fft_rows(a, opts=FftOptions(), max_log_n=MAX_LOG_N):
    """Transform the last axis of ``a`` in place (``a`` must be C-contiguous complex128)."""
    _check_length(a.shape[-1], max_log_n)
    _fft_rows(a.reshape(-1, a.shape[-1]), opts.variant == DIF, opts.do_shuffle, opts.inverse)
    return a


def fft_1d_complex(x, opts=FftOptions(), max_log_n=MAX_LOG_N):
    if opts.variant == DIT and opts.do_shuffle:
        # shuffle, copy and inverse scaling share one pass
        src = np.ascontiguousarray(x, dtype=np.complex128)
        if src.ndim != 1:
            raise ShapeError("fft_1d_complex expects a vector")
        n = src.shape[0]
        _check_length(n, max_log_n)
        if n == 1:
            return src.copy()
        tw, loc = _tables(n, opts.inverse)
        out = np.empty_like(src)
        _fft_dit_copy_kernel(src, out, tw, loc, 1.0 / n if opts.inverse else 1.0)
        return out
    a = np.array(x, dtype=np.complex128, copy=True)
    if a.ndim != 1:
        raise ShapeError("fft_1d_complex expects a vector")
    return fft_rows(a, opts, max_log_n)


def fft(x, max_log_n=MAX_LOG_N):
    return fft_1d_complex(x, FftOptions(variant=DIT), max_log_n)


def ifft(x, max_log_n=MAX_LOG_N):
    return fft_1d_complex(x, FftOptions(variant=DIT, direction=INVERSE), max_log_n)


def rfft_rows(x, max_log_n=MAX_LOG_N):
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[-1]
    if n < 2:
        raise LengthError("real FFT needs length >= 2")
    _check_length(n, max_log_n)
    out = _rfft_rows(x.reshape(-1, n))
    return out.reshape(x.shape[:-1] + (n // 2 + 1,))


def irfft_rows(spec, n, max_log_n=MAX_LOG_N):
    spec = np.ascontiguousarray(spec, dtype=np.complex128)
    if n < 2:
        raise LengthError("real FFT needs length >= 2")
    _check_length(n, max_log_n)
    if spec.shape[-1] != n // 2 + 1:
        raise ShapeError(f"half spectrum of length {spec.shape[-1]} does not match n={n}")
    out = _irfft_rows(spec.reshape(-1, spec.shape[-1]), n)
    return out.reshape(spec.shape[:-1] + (n,))


def fft_1d_real(x, max_log_n=MAX_LOG_N):
    """First ``N/2 + 1`` bins of the DFT of the real vector ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("fft_1d_real expects a vector")
    return rfft_rows(x, max_log_n)


def ifft_1d_real(spec, n, max_log_n=MAX_LOG_N):
    return irfft_rows(spec, n, max_log_n)


def fft_nd(t, opts=FftOptions(), max_log_n=MAX_LOG_N):
    """Row-column nd FFT.

    With ``undo_transposes`` the result has the input's axis order.  Without
    it, each transformed axis is moved in front of the untransformed ones and
    never moved back, so the result's axes come out reversed: ``(x, y, z)``
    becomes ``(Z, Y, X)``.  Applying the inverse with the same flag to that
    output restores ``(x, y, z)``.
    """
    a = np.array(t, dtype=np.complex128, copy=True)
    if a.ndim == 0:
        raise ShapeError("fft_nd needs at least one axis")
    for s in a.shape:
        if not is_pow2(s):
            raise ShapeError(f"extent {s} is not a power of two")
        _check_length(s, max_log_n)
    d = a.ndim
    if d == 1:
        return fft_rows(a, opts, max_log_n)
    for i in range(d):
        fft_rows(a, opts, max_log_n)
        if opts.undo_transposes:
            a = rotate_axes_flat(a, d - 1)
        elif i < d - 1:
            a = rotate_suffix(a, i)
    return a

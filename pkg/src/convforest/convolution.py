"""Linear convolution of nonnegative tensors under sum, max and L_p aggregation.

``p_convolve`` interpolates between ordinary convolution (``p = 1``) and
max-convolution (``p = inf``):

    out[k] = (sum_i (x[i] * y[k - i]) ** p) ** (1 / p)

Small problems are evaluated directly.  Large ones use FFTs of ``x**p`` and
``y**p`` for a descending ladder of exponents; each output index takes the
largest exponent at which its value is numerically resolved.  Below the
target exponent, a correction fitted per rung (an affine map from the log
norms at that rung and the next few lower ones to the log of a handful of
exactly evaluated values) removes most of the finite-p bias.
"""

import math

import numpy as np
from numba import njit

from . import fourier
from .errors import DomainError, ShapeError
from .tensor import as_tensor, next_pow2, rotate_axes_flat, rotate_suffix

#: Outputs with at most this many elements are convolved directly.
NAIVE_THRESHOLD = 512

#: Finite exponent standing in for ``p = inf`` at the top of the ladder.
P_INF_START = 64.0

#: Smallest exponent the ``p = inf`` ladder tries before unresolved indices
#: are evaluated exactly (lower rungs are used only if that is too costly).
P_INF_FLOOR = 8.0

#: A p-powered FFT result is trusted where it exceeds this fraction of the
#: largest value in the same result.
STABILITY_TOL = 1e-10

# Exactly evaluated indices per ladder rung for the correction fit, and the
# number of consecutive rungs whose log-norms serve as regressors.
_FIT_SAMPLES = 32
_FIT_NORMS = 4

# Unresolved indices are evaluated exactly when this costs at most this
# many multiplies per output element.
_EXACT_BUDGET = 64

# Floor for reachable indices whose value rounds to zero or below.
_TINY = 1e-300
_LOG_TINY = math.log(_TINY)

# Tilted ladder passes tried on 1D tails before falling back to exact
# evaluation.
_MAX_TILTS = 32

# Operand entries this many nats below the operand peak are cropped away
# before a powered FFT.
_CROP_NATS = 46.0

_DIF_FWD = fourier.FftOptions(variant=fourier.DIF, do_shuffle=False)
_DIT_INV = fourier.FftOptions(variant=fourier.DIT, do_shuffle=False,
                              direction=fourier.INVERSE)


def check_p(p):
    """Validate an L_p exponent; returns it as a float (``inf`` allowed)."""
    try:
        p = float(p)
    except (TypeError, ValueError):
        raise DomainError(f"p must be a number >= 1, got {p!r}") from None
    if math.isnan(p) or p < 1.0:
        raise DomainError(f"p must be >= 1, got {p}")
    return p


def _pair(x, y):
    x = as_tensor(x, np.float64)
    y = as_tensor(y, np.float64)
    if x.ndim != y.ndim:
        raise ShapeError(f"axis count mismatch: {x.ndim} vs {y.ndim}")
    return x, y


def out_shape(xs, ys):
    return tuple(a + b - 1 for a, b in zip(xs, ys))


def _offsets(shape, target):
    """Flat index in ``target`` layout of every element of ``shape`` layout."""
    strides = np.ones(len(target), np.int64)
    for a in range(len(target) - 2, -1, -1):
        strides[a] = strides[a + 1] * target[a + 1]
    idx = np.indices(shape, dtype=np.int64).reshape(len(shape), -1)
    return (strides[:, None] * idx).sum(axis=0)


# ---------------------------------------------------------------- naive

@njit(cache=True)
def _naive_sum(xf, ox, yf, oy, out):
    for i in range(xf.shape[0]):
        a = xf[i]
        if a == 0.0:
            continue
        base = ox[i]
        for j in range(yf.shape[0]):
            out[base + oy[j]] += a * yf[j]


@njit(cache=True)
def _naive_max(xf, ox, yf, oy, out):
    for i in range(xf.shape[0]):
        a = xf[i]
        if a == 0.0:
            continue
        base = ox[i]
        for j in range(yf.shape[0]):
            v = a * yf[j]
            if v > out[base + oy[j]]:
                out[base + oy[j]] = v


@njit(cache=True)
def _naive_pow(xf, ox, yf, oy, mx, p, out):
    # sum of (term / max)^p; mx is the exact max-convolution
    for i in range(xf.shape[0]):
        a = xf[i]
        if a == 0.0:
            continue
        base = ox[i]
        for j in range(yf.shape[0]):
            k = base + oy[j]
            m = mx[k]
            if m > 0.0:
                out[k] += (a * yf[j] / m) ** p


def _naive(x, y, kind, p=1.0):
    shape = out_shape(x.shape, y.shape)
    # iterate over the smaller operand in the outer loop
    if x.size > y.size:
        x, y = y, x
    xf, yf = x.ravel(), y.ravel()
    ox, oy = _offsets(x.shape, shape), _offsets(y.shape, shape)
    out = np.zeros(int(np.prod(shape)), np.float64)
    if kind == "sum":
        _naive_sum(xf, ox, yf, oy, out)
    else:
        _naive_max(xf, ox, yf, oy, out)
        if kind == "pow":
            acc = np.zeros_like(out)
            _naive_pow(xf, ox, yf, oy, out, p, acc)
            out = out * acc ** (1.0 / p)
    return out.reshape(shape)


def convolve_naive(x, y):
    """Exact linear convolution by direct summation."""
    x, y = _pair(x, y)
    return _naive(x, y, "sum")


def max_convolve_naive(x, y):
    """Exact max-convolution: ``out[k] = max_i x[i] * y[k - i]``."""
    x, y = _pair(x, y)
    return _naive(x, y, "max")


def naive_ops(xs, ys):
    """Scalar multiplies of a direct convolution of the given shapes."""
    return int(np.prod(xs)) * int(np.prod(ys))


def fft_ops(xs, ys):
    """Nominal cost ``N log2 N`` of an FFT convolution of the given shapes."""
    n = int(np.prod([next_pow2(s) for s in out_shape(xs, ys)]))
    return n * max(1, int(math.log2(n))) if n > 1 else 1


# ------------------------------------------------------------------ FFT

def _forward_real(t, shape):
    """Spectrum of the real tensor ``t`` zero-padded to ``shape`` (elided layout)."""
    d = len(shape)
    a = np.zeros(shape, np.float64)
    a[tuple(slice(0, s) for s in t.shape)] = t
    spec = fourier.rfft_rows(a)
    if d == 1:
        return spec
    spec = rotate_suffix(spec, 0)
    for i in range(1, d):
        fourier.fft_rows(spec, _DIF_FWD)
        if i < d - 1:
            spec = rotate_suffix(spec, i)
    return spec


def _inverse_real(spec, shape):
    d = len(shape)
    if d > 1:
        for i in range(1, d):
            fourier.fft_rows(spec, _DIT_INV)
            if i < d - 1:
                spec = rotate_suffix(spec, i)
        spec = rotate_axes_flat(spec, 1)
    return fourier.irfft_rows(spec, shape[-1])


def _fft_shape(xs, ys):
    shape = tuple(next_pow2(s) for s in out_shape(xs, ys))
    # the real transform needs an even last axis
    return shape[:-1] + (max(2, shape[-1]),)


def _convolve_fft_raw(x, y):
    full = out_shape(x.shape, y.shape)
    shape = _fft_shape(x.shape, y.shape)
    prod = _forward_real(x, shape)
    prod *= _forward_real(y, shape)
    out = _inverse_real(prod, shape)
    return np.ascontiguousarray(out[tuple(slice(0, s) for s in full)])


def convolve_fft(x, y):
    """Linear convolution through real FFTs with shuffle and transpose elision.

    Round-off leaves small negative values and noise where the exact result
    is zero; callers needing exact zeros should mask with the support.
    """
    x, y = _pair(x, y)
    return _convolve_fft_raw(x, y)


def convolve(x, y):
    """Ordinary convolution choosing the direct or FFT path by output size."""
    x, y = _pair(x, y)
    if int(np.prod(out_shape(x.shape, y.shape))) <= NAIVE_THRESHOLD:
        return _naive(x, y, "sum")
    return _clean_fft(x, y)


def support_mask(x, y):
    """Boolean mask of output indices with at least one nonzero term."""
    x, y = _pair(x, y)
    ind = _convolve_fft_raw((x > 0).astype(np.float64), (y > 0).astype(np.float64))
    return ind > 0.5


def _clean_fft(x, y):
    out = _convolve_fft_raw(x, y)
    mask = support_mask(x, y)
    out[~mask] = 0.0
    # round-off must not erase a reachable index
    out[mask] = np.maximum(out[mask], _TINY)
    return out


# ---------------------------------------------------- L_p convolution

def _check_unit(t, name):
    if t.size and (t.min() < 0.0 or t.max() > 1.0 or not np.isfinite(t).all()):
        raise DomainError(f"{name} entries must lie in [0, 1]")


def stability_probe(x, p, y=None, tol=STABILITY_TOL):
    """Per-index verdict on whether the p-powered FFT route resolves an index.

    With ``y`` the mask covers the convolution of ``x`` and ``y``; without it,
    ``x`` is treated as a vector of values to be p-powered and summed, and a
    scalar verdict is returned.  An index is stable when its powered sum is
    nonzero wherever the true value is, and lies above ``tol`` times the
    largest powered sum (below that, FFT round-off swamps it).
    """
    p = check_p(p)
    x = as_tensor(x, np.float64)
    if math.isinf(p):
        p = P_INF_START
    if y is None:
        with np.errstate(under="ignore"):
            powered = x ** p
        nz = x > 0
        if not nz.any():
            return True
        return bool((powered[nz] > 0).all() and
                    powered[nz].min() >= tol * powered.max())
    x, y = _pair(x, y)
    with np.errstate(under="ignore"):
        s = _powered_fft(x, y, p)
    mask = support_mask(x, y)
    top = s.max()
    return mask & (s > tol * top) if top > 0 else np.zeros_like(mask)


def _powered_fft(x, y, p):
    with np.errstate(under="ignore"):
        return _convolve_fft_raw(x ** p, y ** p)


def p_convolve(x, y, p, exact=False):
    """L_p convolution of tensors with entries in [0, 1]; ``p = inf`` gives max.

    ``exact=True`` forces direct evaluation regardless of size.
    """
    p = check_p(p)
    x, y = _pair(x, y)
    _check_unit(x, "x")
    _check_unit(y, "y")
    if exact or int(np.prod(out_shape(x.shape, y.shape))) <= NAIVE_THRESHOLD:
        if p == 1.0:
            return _naive(x, y, "sum")
        if math.isinf(p):
            return _naive(x, y, "max")
        return _naive(x, y, "pow", p)
    if p == 1.0:
        return _clean_fft(x, y)
    return _lazy_lp(x, y, p)


def _ladder(p):
    top = P_INF_START if math.isinf(p) else p
    rungs = [top]
    while rungs[-1] / 2.0 >= 1.0:
        rungs.append(rungs[-1] / 2.0)
    if rungs[-1] != 1.0:
        rungs.append(1.0)
    return rungs


def _term_counts(xs, ys, full):
    """Number of (i, k - i) pairs inside both operands, per output index."""
    counts = np.ones(full, np.float64)
    for a, (nx, ny, nk) in enumerate(zip(xs, ys, full)):
        k = np.arange(nk)
        c = np.minimum(k, nx - 1) - np.maximum(0, k - ny + 1) + 1
        shape = [1] * len(full)
        shape[a] = nk
        counts = counts * c.reshape(shape)
    return counts.ravel()


@njit(cache=True)
def _exact_at_kernel(xf, xs, yf, ys, full, idx, p, use_max, out):
    d = xs.shape[0]
    k = np.empty(d, np.int64)
    lo = np.empty(d, np.int64)
    hi = np.empty(d, np.int64)
    cur = np.empty(d, np.int64)
    xstr = np.ones(d, np.int64)
    ystr = np.ones(d, np.int64)
    for a in range(d - 2, -1, -1):
        xstr[a] = xstr[a + 1] * xs[a + 1]
        ystr[a] = ystr[a + 1] * ys[a + 1]
    for n in range(idx.shape[0]):
        rem = idx[n]
        for a in range(d - 1, -1, -1):
            k[a] = rem % full[a]
            rem //= full[a]
        empty = False
        for a in range(d):
            lo[a] = max(0, k[a] - ys[a] + 1)
            hi[a] = min(xs[a] - 1, k[a])
            if lo[a] > hi[a]:
                empty = True
        if empty:
            out[n] = 0.0
            continue
        # two odometer sweeps over the x box: max, then the powered sum
        m = 0.0
        acc = 0.0
        for sweep in range(2):
            if sweep == 1 and (use_max or m <= 0.0):
                break
            for a in range(d):
                cur[a] = lo[a]
            while True:
                xi = 0
                yi = 0
                for a in range(d):
                    xi += cur[a] * xstr[a]
                    yi += (k[a] - cur[a]) * ystr[a]
                t = xf[xi] * yf[yi]
                if sweep == 0:
                    if t > m:
                        m = t
                elif t > 0.0:
                    acc += (t / m) ** p
                a = d - 1
                while a >= 0:
                    cur[a] += 1
                    if cur[a] <= hi[a]:
                        break
                    cur[a] = lo[a]
                    a -= 1
                if a < 0:
                    break
        if use_max or m <= 0.0:
            out[n] = m
        else:
            out[n] = m * acc ** (1.0 / p)


def _exact_at(x, y, idx, p, full):
    """Exact L_p convolution at selected flat output indices."""
    out = np.empty(len(idx))
    use_max = math.isinf(p)
    _exact_at_kernel(np.ascontiguousarray(x).ravel(), np.asarray(x.shape, np.int64),
                     np.ascontiguousarray(y).ravel(), np.asarray(y.shape, np.int64),
                     np.asarray(full, np.int64), np.asarray(idx, np.int64),
                     1.0 if use_max else float(p), use_max, out)
    return out


class _PoweredSums:
    """Lazily computed FFT convolutions of tilted ``x**q`` and ``y**q``.

    With tilt ``theta`` the operands are ``x[i]**q * exp(q * theta * i)``
    rescaled to a maximum of 1, which multiplies every term of output index
    ``k`` by the same factor ``exp(q * theta * k)``.  Operand ends below
    ``exp(-_CROP_NATS)`` are dropped before the FFT; their terms cannot lift
    any index above the trust threshold.  Values are reported untilted, as
    logs, with the trusted-index mask and a log upper bound.  1D only when
    ``theta`` is nonzero.
    """

    def __init__(self, x, y, theta=0.0):
        self.theta = float(theta)
        with np.errstate(divide="ignore"):
            self.lx, self.ly = np.log(x), np.log(y)
        self.full = out_shape(x.shape, y.shape)
        self._cache = {}

    def _operand(self, logs, q):
        e = q * logs
        if self.theta:
            e = e + (q * self.theta) * np.arange(logs.shape[0])
        c = e.max()
        e -= c
        keep = e > -_CROP_NATS
        # crop each axis to the bounding box of the significant entries
        sl = []
        for a in range(e.ndim):
            other = tuple(j for j in range(e.ndim) if j != a)
            hit = np.flatnonzero(keep.any(axis=other) if other else keep)
            sl.append(slice(int(hit[0]), int(hit[-1]) + 1))
        with np.errstate(under="ignore"):
            return np.exp(e[tuple(sl)]), c, [t.start for t in sl]

    def __call__(self, q):
        """``(start, log S_q, trusted mask, log upper bound)`` for exponent ``q``.

        In 1D the arrays cover only the flat output window the cropped
        operands reach, starting at ``start``; otherwise the whole output.
        """
        if q not in self._cache:
            tx, cx, ox = self._operand(self.lx, q)
            ty, cy, oy = self._operand(self.ly, q)
            s = _convolve_fft_raw(tx, ty)
            if len(self.full) == 1:
                start = ox[0] + oy[0]
            else:
                start = 0
                whole = np.zeros(self.full)
                whole[tuple(slice(a + b, a + b + n) for a, b, n in zip(ox, oy, s.shape))] = s
                s = whole
            s = s.ravel()
            shift = cx + cy
            if self.theta:
                shift = shift - q * self.theta * np.arange(start, start + s.shape[0])
            # the peak term is 1, so top >= 1 and dropped terms sit far below
            top = s.max()
            stable = s > STABILITY_TOL * top
            pos = np.maximum(s, 0.0)
            with np.errstate(divide="ignore"):
                logs = np.log(pos) + shift
                bound = np.log(pos + 2 * STABILITY_TOL * top) + shift
            self._cache[q] = (start, logs, stable, bound)
        return self._cache[q]

    def logs_at(self, q, idx):
        start, logs, _, _ = self(q)
        j = idx - start
        ok = (j >= 0) & (j < logs.shape[0])
        out = np.full(idx.shape[0], _LOG_TINY)
        out[ok] = np.maximum(logs[j[ok]], _LOG_TINY)
        return out


def _features(sums, qs, idx):
    cols = [sums.logs_at(q, idx) / q for q in qs]
    cols.append(np.ones(len(idx)))
    return np.stack(cols, axis=1)


def _ladder_pass(xn, yn, p, full, state, theta, first):
    """One descent of the exponent ladder under tilt ``theta``.

    Resolves pending indices into ``state.lout`` (log values) and tightens
    the per-index upper bound ``state.lbound``.
    """
    pending, lout, counts = state.pending, state.lout, state.counts
    sums = _PoweredSums(xn, yn, theta)
    inv_p = 0.0 if math.isinf(p) else 1.0 / p
    rungs = _ladder(p)
    for r, q in enumerate(rungs):
        below = math.isinf(p) and q < P_INF_FLOOR
        if first and below and counts[pending].sum() <= _EXACT_BUDGET * state.size:
            break
        start, logs, stable, bound = sums(q)
        win = slice(start, start + logs.shape[0])
        # an L_p norm is at most the L_q norm for q <= p
        np.minimum(state.lbound[win], bound / q, out=state.lbound[win])
        stable = pending[win] & stable
        local = np.flatnonzero(stable)
        if local.size == 0:
            continue
        pending[win] &= ~stable
        idx = local + start
        hi = logs[local] / q
        if q == p:
            # the top rung of a finite p is the target norm itself
            lout[idx] = hi
            continue
        if idx.size <= _FIT_SAMPLES:
            lout[idx] = _safe_log(_exact_at(xn, yn, idx, p, full))
            continue
        qs = rungs[r:r + _FIT_NORMS]
        at = np.sort(state.rng.choice(idx.size, _FIT_SAMPLES, replace=False))
        pick = idx[at]
        exact = _safe_log(_exact_at(xn, yn, pick, p, full))
        feats = _features(sums, qs, idx)
        coef = np.linalg.lstsq(feats[at], exact, rcond=None)[0]
        est = feats @ coef
        # a p-norm lies between the q-norm / count^(1/q - 1/p) and the q-norm
        lo = hi - np.log(counts[idx]) * (1.0 / q - inv_p)
        lout[idx] = np.clip(est, lo, hi)
        lout[pick] = exact


def _safe_log(v):
    with np.errstate(divide="ignore"):
        return np.maximum(np.log(v), _LOG_TINY)


def _tilt_peak(lx, ly, theta):
    """Output index where the tilted max-convolution peaks."""
    ix = np.arange(lx.shape[0])
    iy = np.arange(ly.shape[0])
    return int(np.argmax(lx + theta * ix)) + int(np.argmax(ly + theta * iy))


def _tilt_for(lx, ly, target, span):
    """Smallest tilt whose peak index reaches ``target`` (bisection)."""
    lo, hi = -span, span
    for _ in range(48):
        mid = 0.5 * (lo + hi)
        if _tilt_peak(lx, ly, mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def _next_target(lout, pending, resolved, reach):
    """Pending index just beyond the most significant resolved boundary."""
    n = pending.shape[0]
    left = np.flatnonzero(pending[1:] & resolved[:-1])        # b resolved, b+1 pending
    right = np.flatnonzero(pending[:-1] & resolved[1:]) + 1   # b resolved, b-1 pending
    cands = [(lout[b], b, 1) for b in left] + [(lout[b], b, -1) for b in right]
    if not cands:
        return None
    _, b, d = max(cands)
    # aim past the boundary by half the width the last tilt on this side resolved
    k = b + d * max(1, reach.get(d, 0) // 2)
    run_end = b + d
    while 0 <= run_end + d < n and pending[run_end + d] and abs(run_end - b) < abs(k - b):
        run_end += d
    return run_end, d


class _State:
    def __init__(self, pending, counts, rng):
        self.pending = pending
        self.size = pending.shape[0]
        self.counts = counts
        self.rng = rng
        self.lout = np.full(self.size, -np.inf)
        self.lbound = np.full(self.size, np.inf)


def _lazy_lp(x, y, p, seed=0):
    full = out_shape(x.shape, y.shape)
    mx, my = x.max(), y.max()
    if mx <= 0.0 or my <= 0.0:
        return np.zeros(full)
    xn, yn = x / mx, y / my
    mask = support_mask(xn, yn).ravel()
    st = _State(mask.copy(), _term_counts(xn.shape, yn.shape, full),
                np.random.default_rng(seed))
    budget = _EXACT_BUDGET * st.size
    _ladder_pass(xn, yn, p, full, st, 0.0, True)
    if len(full) == 1:
        # tilted passes lift the unresolved tails into the trusted range
        with np.errstate(divide="ignore"):
            lx, ly = np.log(xn), np.log(yn)
        finite = np.concatenate([lx[np.isfinite(lx)], ly[np.isfinite(ly)]])
        span = 2.0 * (finite.max() - finite.min()) + 1.0
        reach = {}
        for _ in range(_MAX_TILTS):
            # indices provably below the floor need no further work
            st.pending &= ~(st.lbound < _LOG_TINY)
            if not st.pending.any() or st.counts[st.pending].sum() <= budget:
                break
            hit = _next_target(st.lout, st.pending, mask & ~st.pending, reach)
            if hit is None:
                break
            target, d = hit
            before = int(st.pending.sum())
            _ladder_pass(xn, yn, p, full, st, _tilt_for(lx, ly, target, span), False)
            reach[d] = before - int(st.pending.sum())
            if st.pending[target] and st.lbound[target] >= _LOG_TINY:
                break
        st.pending &= ~(st.lbound < _LOG_TINY)
    if st.pending.any():
        idx = np.flatnonzero(st.pending)
        st.lout[idx] = _safe_log(_exact_at(xn, yn, idx, p, full))
    with np.errstate(under="ignore"):
        out = np.exp(st.lout) * (mx * my)
    out[mask] = np.maximum(out[mask], _TINY)
    out[~mask] = 0.0
    return out.reshape(full)

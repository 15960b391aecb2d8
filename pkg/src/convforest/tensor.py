"""Dense row-major tensor helpers used by the FFT and convolution layers.

Tensors are plain C-ordered :class:`numpy.ndarray` objects of float64 or
complex128.  The functions here never modify their arguments.
"""

import numpy as np
from numba import njit

from .errors import ShapeError

#: Base-case tile edge of the recursive transpose.
TRANSPOSE_TILE = 16

_OPS = ("multiply", "add", "max", "pow", "root")


def is_pow2(n):
    n = int(n)
    return n >= 1 and (n & (n - 1)) == 0


def next_pow2(n):
    """Smallest power of two >= ``n`` (and >= 1)."""
    n = int(n)
    if n <= 1:
        return 1
    return 1 << (n - 1).bit_length()


def as_tensor(t, dtype=None):
    arr = np.ascontiguousarray(t, dtype=dtype)
    if arr.ndim == 0:
        raise ShapeError("a tensor needs at least one axis")
    if any(s < 1 for s in arr.shape):
        raise ShapeError(f"all extents must be >= 1, got {arr.shape}")
    return arr


def pad_to_pow2(t, target_shape=None):
    """Zero-pad ``t`` so its values sit in the low-index corner of ``target_shape``.

    If ``target_shape`` is omitted every extent is rounded up to the next
    power of two.
    """
    t = as_tensor(t)
    if target_shape is None:
        target_shape = tuple(next_pow2(s) for s in t.shape)
    target_shape = tuple(int(s) for s in target_shape)
    if len(target_shape) != t.ndim:
        raise ShapeError(f"target {target_shape} has wrong axis count for {t.shape}")
    for have, want in zip(t.shape, target_shape):
        if want < have:
            raise ShapeError(f"cannot pad extent {have} down to {want}")
        if not is_pow2(want):
            raise ShapeError(f"target extent {want} is not a power of two")
    if target_shape == t.shape:
        return t.copy()
    out = np.zeros(target_shape, dtype=t.dtype)
    out[tuple(slice(0, s) for s in t.shape)] = t
    return out


def crop(t, shape):
    """Inverse of padding: keep the low-index corner of extent ``shape``."""
    return np.ascontiguousarray(t[tuple(slice(0, int(s)) for s in shape)])


@njit(cache=True)
def _transpose_block(src, dst, rows, cols, tile):
    # Cache-oblivious: split the longer side until the block fits a tile.
    stack = np.empty((512, 4), np.int64)
    stack[0, 0] = 0
    stack[0, 1] = rows
    stack[0, 2] = 0
    stack[0, 3] = cols
    top = 1
    while top > 0:
        top -= 1
        r0 = stack[top, 0]
        r1 = stack[top, 1]
        c0 = stack[top, 2]
        c1 = stack[top, 3]
        nr = r1 - r0
        nc = c1 - c0
        if nr <= tile and nc <= tile:
            for r in range(r0, r1):
                base = r * cols
                for c in range(c0, c1):
                    dst[c * rows + r] = src[base + c]
        elif nr >= nc:
            mid = r0 + nr // 2
            stack[top, 0] = mid
            stack[top, 1] = r1
            stack[top, 2] = c0
            stack[top, 3] = c1
            stack[top + 1, 0] = r0
            stack[top + 1, 1] = mid
            stack[top + 1, 2] = c0
            stack[top + 1, 3] = c1
            top += 2
        else:
            mid = c0 + nc // 2
            stack[top, 0] = r0
            stack[top, 1] = r1
            stack[top, 2] = mid
            stack[top, 3] = c1
            stack[top + 1, 0] = r0
            stack[top + 1, 1] = r1
            stack[top + 1, 2] = c0
            stack[top + 1, 3] = mid
            top += 2


@njit(cache=True)
def _batched_transpose(src, dst, batch, rows, cols, tile):
    block = rows * cols
    for b in range(batch):
        _transpose_block(src[b * block:(b + 1) * block], dst[b * block:(b + 1) * block],
                         rows, cols, tile)


def transpose_flat(flat, batch, rows, cols, tile=TRANSPOSE_TILE):
    """Transpose ``batch`` consecutive ``rows x cols`` matrices stored in ``flat``."""
    flat = np.ascontiguousarray(flat).reshape(-1)
    out = np.empty_like(flat)
    if rows == 1 or cols == 1:
        out[:] = flat
        return out
    _batched_transpose(flat, out, batch, rows, cols, tile)
    return out


def rotate_axes_flat(t, split, tile=TRANSPOSE_TILE):
    """Rotate axes ``[split:]`` in front of axes ``[:split]``.

    Axes ``[0, split)`` are flattened into one row index and the remaining
    axes into one column index; the resulting matrix is transposed, so
    ``(x, y, z)`` with ``split=2`` becomes ``(z, x, y)``.
    """
    t = as_tensor(t)
    if not 1 <= split < t.ndim:
        raise ShapeError(f"split {split} out of range for {t.ndim} axes")
    rows = int(np.prod(t.shape[:split]))
    cols = int(np.prod(t.shape[split:]))
    out = transpose_flat(t, 1, rows, cols, tile)
    return out.reshape(t.shape[split:] + t.shape[:split])


def rotate_suffix(t, start, tile=TRANSPOSE_TILE):
    """Move the last axis to position ``start``, leaving axes before ``start`` alone."""
    t = as_tensor(t)
    if not 0 <= start < t.ndim - 1:
        raise ShapeError(f"start {start} out of range for {t.ndim} axes")
    batch = int(np.prod(t.shape[:start]))
    rows = int(np.prod(t.shape[start:-1]))
    cols = t.shape[-1]
    out = transpose_flat(t, batch, rows, cols, tile)
    return out.reshape(t.shape[:start] + (cols,) + t.shape[start:-1])


def elementwise(t, u=None, op="multiply", p=None):
    """Pointwise arithmetic.

    Binary ops (``multiply``, ``add``, ``max``) need equal shapes; ``pow`` and
    ``root`` apply to ``t`` alone with exponent ``p`` and ``1/p``.
    """
    if op not in _OPS:
        raise ValueError(f"unknown op {op!r}")
    t = as_tensor(t)
    if op in ("pow", "root"):
        if p is None or not p > 0:
            raise ValueError("pow/root need p > 0")
        return np.power(t, p if op == "pow" else 1.0 / p)
    u = as_tensor(u)
    if t.shape != u.shape:
        raise ShapeError(f"shape mismatch {t.shape} vs {u.shape}")
    if op == "multiply":
        return t * u
    if op == "add":
        return t + u
    return np.maximum(t, u)

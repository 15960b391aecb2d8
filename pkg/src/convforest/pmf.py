"""Labeled probability mass functions on integer lattices.

A :class:`LabeledPmf` couples a dense table with variable names and an
integer origin per axis: axis ``a`` covers ``origin[a] .. origin[a] +
shape[a] - 1``.  Every message in the inference engine is one of these.
"""

import json
import math

import numpy as np

from .convolution import check_p, p_convolve
from .errors import (ContradictionError, DegenerateMessageError, DomainError,
                     LabelError, ParseError, ShapeError)

FORMAT_TAG = "convforest-pmf/1"


class SupportBox:
    """Closed integer bounds ``lo[a] <= v[a] <= hi[a]`` per axis."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi):
        lo = np.asarray(lo, dtype=np.int64).reshape(-1)
        hi = np.asarray(hi, dtype=np.int64).reshape(-1)
        if lo.shape != hi.shape:
            raise ShapeError("lo and hi need the same length")
        if (lo > hi).any():
            raise ContradictionError(f"empty box lo={lo.tolist()} hi={hi.tolist()}")
        self.lo, self.hi = lo, hi

    @classmethod
    def of(cls, pmf):
        return cls(pmf.origin, pmf.origin + np.asarray(pmf.table.shape) - 1)

    @property
    def ndim(self):
        return self.lo.shape[0]

    @property
    def shape(self):
        return tuple((self.hi - self.lo + 1).tolist())

    def __add__(self, other):
        return SupportBox(self.lo + other.lo, self.hi + other.hi)

    def __sub__(self, other):
        # all differences a - b with a in self, b in other
        return SupportBox(self.lo - other.hi, self.hi - other.lo)

    def __neg__(self):
        return SupportBox(-self.hi, -self.lo)

    def __and__(self, other):
        return SupportBox(np.maximum(self.lo, other.lo), np.minimum(self.hi, other.hi))

    def __eq__(self, other):
        return (isinstance(other, SupportBox) and np.array_equal(self.lo, other.lo)
                and np.array_equal(self.hi, other.hi))

    def __hash__(self):
        return hash((tuple(self.lo.tolist()), tuple(self.hi.tolist())))

    def __repr__(self):
        return f"SupportBox(lo={self.lo.tolist()}, hi={self.hi.tolist()})"

    def contains(self, other):
        return bool((self.lo <= other.lo).all() and (other.hi <= self.hi).all())

    def intersects(self, other):
        return bool((np.maximum(self.lo, other.lo) <= np.minimum(self.hi, other.hi)).all())


class LabeledPmf:
    """Nonnegative table over named integer axes.

    Tables are not required to sum to one; :meth:`normalize` does that.
    """

    __slots__ = ("labels", "origin", "table")

    def __init__(self, labels, origin, table, _trusted=False):
        if _trusted:
            self.labels, self.origin, self.table = labels, origin, table
            return
        labels = tuple(labels)
        table = np.ascontiguousarray(table, dtype=np.float64)
        if table.ndim == 0:
            table = table.reshape(1)
        origin = np.asarray(origin, dtype=np.int64).reshape(-1)
        if len(set(labels)) != len(labels):
            raise LabelError(f"duplicate labels in {labels}")
        if len(labels) != table.ndim or origin.shape[0] != table.ndim:
            raise ShapeError(f"{len(labels)} labels and {origin.shape[0]} origins "
                             f"for a {table.ndim}-axis table")
        if not np.isfinite(table).all() or (table < 0).any():
            raise DomainError("table entries must be finite and nonnegative")
        if not (table > 0).any():
            raise DegenerateMessageError(f"PMF over {labels} has no positive mass")
        self.labels, self.origin, self.table = labels, origin, table

    # -- construction helpers
    @classmethod
    def delta(cls, labels, point):
        labels = tuple(labels) if not isinstance(labels, str) else (labels,)
        point = np.atleast_1d(np.asarray(point, dtype=np.int64))
        return cls(labels, point, np.ones((1,) * len(labels)))

    @classmethod
    def uniform(cls, labels, lo, hi):
        labels = tuple(labels) if not isinstance(labels, str) else (labels,)
        lo = np.atleast_1d(np.asarray(lo, dtype=np.int64))
        hi = np.atleast_1d(np.asarray(hi, dtype=np.int64))
        shape = tuple(int(v) for v in hi - lo + 1)
        return cls(labels, lo, np.full(shape, 1.0 / int(np.prod(shape))))

    @classmethod
    def from_values(cls, label, origin, values):
        return cls((label,), [origin], np.asarray(values, dtype=np.float64))

    # -- accessors
    @property
    def ndim(self):
        return self.table.ndim

    @property
    def shape(self):
        return self.table.shape

    @property
    def box(self):
        return SupportBox.of(self)

    def support(self, axis=0):
        """Integer support points of one axis."""
        o = int(self.origin[axis])
        return np.arange(o, o + self.table.shape[axis])

    def axis(self, label):
        try:
            return self.labels.index(label)
        except ValueError:
            raise LabelError(f"label {label!r} not in {self.labels}") from None

    def total(self):
        return float(self.table.sum())

    def relabel(self, labels):
        labels = tuple(labels)
        if len(labels) != self.ndim:
            raise ShapeError(f"need {self.ndim} labels, got {len(labels)}")
        return LabeledPmf(labels, self.origin, self.table, _trusted=True)

    def copy(self):
        return LabeledPmf(self.labels, self.origin.copy(), self.table.copy(), _trusted=True)

    def value_at(self, point):
        idx = np.asarray(point, dtype=np.int64) - self.origin
        if (idx < 0).any() or (idx >= np.asarray(self.shape)).any():
            return 0.0
        return float(self.table[tuple(idx)])

    def argmax(self):
        idx = np.unravel_index(int(np.argmax(self.table)), self.shape)
        return tuple(int(i + o) for i, o in zip(idx, self.origin))

    def dense_over(self, box):
        """Table zero-extended (or cropped) to the given box.

        When the box is exactly the table's own, the table itself is returned.
        """
        if self.table.shape == box.shape and np.array_equal(self.origin, box.lo):
            return self.table
        out = np.zeros(box.shape)
        inter = self.box & box if self.box.intersects(box) else None
        if inter is None:
            return out
        src = tuple(slice(int(l - o), int(h - o + 1))
                    for l, h, o in zip(inter.lo, inter.hi, self.origin))
        dst = tuple(slice(int(l - o), int(h - o + 1))
                    for l, h, o in zip(inter.lo, inter.hi, box.lo))
        out[dst] = self.table[src]
        return out

    def __repr__(self):
        return (f"LabeledPmf(labels={list(self.labels)}, origin={self.origin.tolist()}, "
                f"shape={list(self.shape)})")

    # -- serialization
    def to_dict(self):
        return {
            "format": FORMAT_TAG,
            "labels": list(self.labels),
            "origin": [int(v) for v in self.origin],
            "shape": [int(v) for v in self.shape],
            "values": [float(v) for v in self.table.ravel()],
        }

    @classmethod
    def from_dict(cls, d):
        try:
            shape = tuple(int(v) for v in d["shape"])
            values = np.asarray(d["values"], dtype=np.float64)
            if values.size != int(np.prod(shape)):
                raise ParseError(f"{values.size} values for shape {shape}")
            return cls(d["labels"], d["origin"], values.reshape(shape))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, (ParseError, ShapeError, DomainError, LabelError)):
                raise
            raise ParseError(f"malformed PMF record: {exc}") from None

    def to_json(self):
        # repr-based float formatting round-trips every double exactly
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ParseError(str(exc)) from None


def _new(labels, origin, table):
    return LabeledPmf(labels, origin, table, _trusted=True)


def normalize(m):
    s = m.table.sum()
    if not s > 0 or not math.isfinite(s):
        raise DegenerateMessageError(f"cannot normalize PMF over {m.labels}")
    return _new(m.labels, m.origin, m.table / s)


def narrow_support(m):
    """Strip all-zero boundary slices on every axis."""
    t = m.table
    nz = t > 0
    if nz.all():
        return m
    if not nz.any():
        raise DegenerateMessageError(f"PMF over {m.labels} has no positive mass")
    sl, origin = [], m.origin.copy()
    for a in range(t.ndim):
        other = tuple(i for i in range(t.ndim) if i != a)
        hit = np.flatnonzero(nz.any(axis=other) if other else nz)
        lo, hi = int(hit[0]), int(hit[-1])
        sl.append(slice(lo, hi + 1))
        origin[a] += lo
    if all(s.start == 0 and s.stop == n for s, n in zip(sl, t.shape)):
        return m
    return _new(m.labels, origin, np.ascontiguousarray(t[tuple(sl)]))


def crop(m, box):
    """Restrict ``m`` to ``box``; raises ContradictionError if nothing is left."""
    mb = m.box
    if box.contains(mb):
        return m
    if not mb.intersects(box):
        raise ContradictionError(f"support of {m.labels} misses {box}")
    inter = mb & box
    sl = tuple(slice(int(l - o), int(h - o + 1))
               for l, h, o in zip(inter.lo, inter.hi, m.origin))
    t = np.ascontiguousarray(m.table[sl])
    if not (t > 0).any():
        raise ContradictionError(f"no mass of {m.labels} inside {box}")
    return narrow_support(_new(m.labels, inter.lo.copy(), t))


def _aligned(m, labels, lo, hi):
    """View of ``m`` cropped to [lo, hi] on its axes and broadcast to ``labels``."""
    sl, order = [], []
    for a, lab in enumerate(m.labels):
        j = labels.index(lab)
        o = int(m.origin[a])
        sl.append(slice(int(lo[j]) - o, int(hi[j]) - o + 1))
        order.append(j)
    t = m.table[tuple(sl)]
    perm = np.argsort(order)
    t = np.transpose(t, perm)
    shape = [1] * len(labels)
    for j in order:
        shape[j] = int(hi[j] - lo[j] + 1)
    return t.reshape(shape)


def multiply(a, b, normalized=True):
    """Product of two PMFs, aligning shared labels and intersecting their supports."""
    labels = a.labels + tuple(l for l in b.labels if l not in a.labels)
    n = len(labels)
    lo = np.empty(n, np.int64)
    hi = np.empty(n, np.int64)
    for src in (a, b):
        for ax, lab in enumerate(src.labels):
            j = labels.index(lab)
            o = int(src.origin[ax])
            h = o + src.table.shape[ax] - 1
            if lab in a.labels and lab in b.labels and src is b:
                lo[j] = max(lo[j], o)
                hi[j] = min(hi[j], h)
            else:
                lo[j], hi[j] = o, h
    if (lo > hi).any():
        bad = [labels[j] for j in range(n) if lo[j] > hi[j]]
        raise ContradictionError(f"supports of {bad} do not intersect")
    t = _aligned(a, labels, lo, hi) * _aligned(b, labels, lo, hi)
    t = np.ascontiguousarray(t)
    s = t.sum()
    if not s > 0:
        raise ContradictionError(f"product over {labels} has no positive mass")
    if normalized:
        t = t / s
    return narrow_support(_new(labels, lo, t))


def lp_reduce(t, axes, p):
    """``(sum v**p)**(1/p)`` over ``axes``; max for ``p = inf``."""
    if not axes:
        return t
    if p == 1.0:
        return t.sum(axis=axes)
    if math.isinf(p):
        return t.max(axis=axes)
    m = t.max(axis=axes, keepdims=True)
    safe = np.where(m > 0, m, 1.0)
    with np.errstate(under="ignore"):
        r = np.sum((t / safe) ** p, axis=axes) ** (1.0 / p)
    return r * np.squeeze(m, axis=axes)


def marginalize(m, keep, p=1.0):
    """Aggregate out every label not in ``keep``; result normalized and narrowed.

    The kept labels appear in the order given by ``keep``.
    """
    p = check_p(p)
    if isinstance(keep, str):
        keep = (keep,)
    keep = tuple(keep)
    for lab in keep:
        if lab not in m.labels:
            raise LabelError(f"label {lab!r} not in {m.labels}")
    drop = tuple(a for a, lab in enumerate(m.labels) if lab not in keep)
    t = lp_reduce(m.table, drop, p)
    kept = [lab for lab in m.labels if lab in keep]
    origin = np.array([m.origin[m.labels.index(lab)] for lab in keep], np.int64)
    if kept != list(keep):
        t = np.transpose(t, [kept.index(lab) for lab in keep])
    t = np.ascontiguousarray(t)
    return narrow_support(normalize(_new(keep, origin, t)))


def negate_axes(m):
    """PMF of ``-X``: every axis reversed and its origin mirrored."""
    t = np.ascontiguousarray(np.flip(m.table))
    origin = -(m.origin + np.asarray(m.table.shape) - 1)
    return _new(m.labels, origin, t)


def add_pmfs(a, b, p=1.0, labels=None, exact=False):
    """PMF of ``A + B`` for independent A, B under L_p aggregation."""
    if a.ndim != b.ndim:
        raise ShapeError(f"cannot add {a.ndim}-axis and {b.ndim}-axis PMFs")
    a, b = normalize(a), normalize(b)
    t = p_convolve(a.table, b.table, p, exact)
    out = _new(a.labels if labels is None else tuple(labels), a.origin + b.origin, t)
    return narrow_support(normalize(out))


def subtract_pmfs(a, b, p=1.0, labels=None, exact=False):
    return add_pmfs(a, negate_axes(b), p, labels, exact)


def _scale_matrix(origin, n, factor, interpolate):
    """Linear map from ``n`` source bins to target bins; returns (origin, matrix)."""
    src = np.arange(origin, origin + n, dtype=np.float64)
    img = src * factor
    if interpolate and n > 1:
        lo_b = math.ceil(min(img[0], img[-1]) - 1e-9)
        hi_b = math.floor(max(img[0], img[-1]) + 1e-9)
        if hi_b >= lo_b:
            # sample the piecewise-linear source at b / factor
            b = np.arange(lo_b, hi_b + 1, dtype=np.float64)
            u = np.clip(b / factor - origin, 0.0, n - 1.0)
            i0 = np.minimum(np.floor(u).astype(np.int64), n - 2)
            fr = u - i0
            w = np.zeros((b.shape[0], n))
            rows = np.arange(b.shape[0])
            w[rows, i0] += 1.0 - fr
            w[rows, i0 + 1] += fr
            return lo_b, w
    # dithering: each image splits linearly between its neighbouring bins
    fl = np.floor(img + 1e-12)
    fr = np.clip(img - fl, 0.0, 1.0)
    fr[fr < 1e-12] = 0.0
    lo_b = int(fl.min())
    hi_b = int((fl + (fr > 0)).max())
    w = np.zeros((hi_b - lo_b + 1, n))
    cols = np.arange(n)
    base = (fl - lo_b).astype(np.int64)
    w[base, cols] += 1.0 - fr
    nz = fr > 0
    w[base[nz] + 1, cols[nz]] += fr[nz]
    return lo_b, w


def scale_support(m, factors, interpolate=False):
    """Stretch each axis by its factor (``s -> s * factor``).

    Non-integer images are dithered linearly into the two neighbouring bins.
    With ``interpolate`` the target bins between mapped points are filled by
    linear interpolation of the source (the continuous reading of the axis).
    """
    factors = np.atleast_1d(np.asarray(factors, dtype=np.float64))
    if factors.shape[0] != m.ndim:
        raise ShapeError(f"need {m.ndim} factors, got {factors.shape[0]}")
    if not np.isfinite(factors).all() or (factors == 0).any():
        raise DomainError(f"scale factors must be finite and nonzero, got {factors.tolist()}")
    interp = np.broadcast_to(np.asarray(interpolate, dtype=bool), factors.shape)
    t = m.table
    origin = m.origin.copy()
    for a, f in enumerate(factors):
        if f == 1.0:
            continue
        o, w = _scale_matrix(int(m.origin[a]), t.shape[a], float(f), bool(interp[a]))
        t = np.moveaxis(np.tensordot(w, t, axes=([1], [a])), 0, a)
        origin[a] = o
    t = np.ascontiguousarray(t)
    if not (t > 0).any():
        raise DegenerateMessageError("scaling removed all mass")
    return narrow_support(_new(m.labels, origin, t))

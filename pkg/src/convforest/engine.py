"""Message passers, edges and the inference graph.

Four passer kinds are provided:

* :class:`HuginNode` holds an optional joint prior and multiplies incoming
  messages into a cached product.
* :class:`Hyperedge` joins every passer that shares a variable tuple; it sends
  as soon as the labels it has heard about cover an outgoing edge.
* :class:`ConstantMultiplierNode` stretches message axes by a constant factor
  (and by its reciprocal in the opposite direction).
* :class:`ConvTreePasser` wraps a :class:`~convforest.conv_tree.ConvTree` to
  encode ``Y = X_1 + ... + X_n`` in a single passer.

Edges come in reverse-linked pairs.  A passer decides whether it can send
along an edge by counting distinct incoming edges that carry a message: with
``n`` incident edges it may send when all ``n`` have arrived, or ``n - 1``
have and the missing one is the reverse of the outgoing edge.
"""

import math

import numpy as np

from . import pmf as P
from .conv_tree import ConvTree
from .convolution import check_p
from .errors import (ContradictionError, DegenerateMessageError, LabelError,
                     ShapeError, TopologyError)
from .pmf import LabeledPmf, SupportBox

# Incremental product updates between full rebuilds of a product cache.
_REBUILD_EVERY = 64


class Edge:
    """Directed edge; ``reverse`` is the opposite edge of the same pair."""

    __slots__ = ("source", "destination", "labels", "reverse", "last_message",
                 "queued", "slot", "fired", "version", "priority_version", "primary")

    def __init__(self, source, destination, labels):
        self.source = source
        self.destination = destination
        self.labels = tuple(labels)
        self.reverse = None
        self.last_message = None
        self.queued = False
        self.slot = -1
        self.fired = 0
        self.version = 0
        self.priority_version = 0
        self.primary = False

    def __repr__(self):
        return f"Edge({self.source.name} -> {self.destination.name}, {list(self.labels)})"


def message_mse(a, b):
    """Mean squared difference over the union of the two supports (0 outside each)."""
    if a is None or b is None:
        return math.inf
    if a.labels != b.labels:
        b = _reorder(b, a.labels)
    box = SupportBox(np.minimum(a.box.lo, b.box.lo), np.maximum(a.box.hi, b.box.hi))
    d = a.dense_over(box) - b.dense_over(box)
    return float(np.mean(d * d))


def _reorder(m, labels):
    if m.labels == tuple(labels):
        return m
    if set(m.labels) != set(labels):
        raise LabelError(f"labels {m.labels} do not match {tuple(labels)}")
    perm = [m.labels.index(l) for l in labels]
    return LabeledPmf(tuple(labels), m.origin[perm],
                      np.ascontiguousarray(np.transpose(m.table, perm)), _trusted=True)


def dampen(old, new, lam):
    """``normalize(lam * old + (1 - lam) * new)`` over the union support."""
    if old is None or lam == 0.0:
        return new
    old = _reorder(old, new.labels)
    box = SupportBox(np.minimum(old.box.lo, new.box.lo), np.maximum(old.box.hi, new.box.hi))
    t = lam * old.dense_over(box) + (1.0 - lam) * new.dense_over(box)
    return P.narrow_support(P.normalize(LabeledPmf(new.labels, box.lo, t, _trusted=True)))


class Passer:
    """Base passer: edge bookkeeping and the counting eligibility rule."""

    kind = "passer"
    dot_shape = "ellipse"

    def __init__(self, name):
        self.name = str(name)
        self.edges = []          # outgoing edges; incoming ones are their reverses
        self.received = []       # per slot: message held from edge slot's reverse
        self.n_received = 0

    # -- wiring
    def _attach(self, edge):
        edge.slot = len(self.edges)
        self.edges.append(edge)
        self.received.append(None)

    def labels(self):
        out = []
        for e in self.edges:
            for l in e.labels:
                if l not in out:
                    out.append(l)
        return tuple(out)

    def _check_edge(self, e):
        if e.source is not self or self.edges[e.slot] is not e:
            raise TopologyError(f"{e} is not an outgoing edge of {self.name}")

    # -- eligibility
    def ready_to_send(self, e):
        self._check_edge(e)
        n = len(self.edges)
        if self.n_received == n:
            return True
        if self.n_received == n - 1:
            return self.received[e.slot] is None
        return False

    def ready_by_scan(self, e):
        """Reference eligibility by scanning every incoming edge."""
        self._check_edge(e)
        return all(self.received[s] is not None for s in range(len(self.edges))
                   if s != e.slot)

    # -- messages
    def receive(self, e_in, m):
        """Store ``m`` arriving along ``e_in`` (an edge whose destination is self)."""
        slot = e_in.reverse.slot
        if self.received[slot] is None:
            self.n_received += 1
        self.received[slot] = m
        self._on_receive(slot, m)

    def _on_receive(self, slot, m):
        pass

    def compute_message(self, e):
        raise NotImplementedError

    def variable_posterior(self, label, p):
        raise LabelError(f"{self.name} does not hold variable {label!r}")


class _ProductCache:
    """Product of a fixed factor and per-slot messages over a box ("frame").

    Each cell keeps the count of zero factors and the product of the nonzero
    ones, so one factor can be divided out exactly even where it is zero.
    """

    def __init__(self, labels, prior=None):
        self.labels = tuple(labels)
        self._index = {l: j for j, l in enumerate(self.labels)}
        self.prior = prior
        self.fixed = set(prior.labels) if prior is not None else set()
        self.msgs = {}
        self.frame = None
        self.nz = None
        self.zeros = None
        self.updates = 0

    def _hull(self):
        lo = [None] * len(self.labels)
        hi = [None] * len(self.labels)
        for m in ([self.prior] if self.prior is not None else []) + list(self.msgs.values()):
            for a, lab in enumerate(m.labels):
                j = self.labels.index(lab)
                if lab in self.fixed and m is not self.prior:
                    continue
                o = int(m.origin[a])
                h = o + m.table.shape[a] - 1
                lo[j] = o if lo[j] is None else min(lo[j], o)
                hi[j] = h if hi[j] is None else max(hi[j], h)
        if any(v is None for v in lo):
            return None
        return SupportBox(lo, hi)

    def _aligned(self, m, box=None):
        box = self.frame if box is None else box
        index = self._index
        axes = [index[l] for l in m.labels]
        sub = SupportBox(box.lo[axes], box.hi[axes])
        t = m.dense_over(sub)
        if axes != sorted(axes):
            t = np.transpose(t, np.argsort(axes))
        shape = [1] * len(self.labels)
        for j in axes:
            shape[j] = int(box.hi[j] - box.lo[j] + 1)
        return t.reshape(shape)

    def _factor_in(self, t):
        zero = t == 0.0
        self.zeros += zero
        self.nz *= np.where(zero, 1.0, t)

    def _factor_out(self, t):
        zero = t == 0.0
        self.zeros -= zero
        self.nz /= np.where(zero, 1.0, t)

    def _rescale(self):
        top = self.nz.max()
        if top > 0 and (top < 1e-100 or top > 1e100):
            self.nz /= top

    def rebuild(self):
        self.frame = self._hull()
        self.updates = 0
        if self.frame is None:
            self.nz = self.zeros = None
            return
        self.nz = np.ones(self.frame.shape)
        self.zeros = np.zeros(self.frame.shape, np.int32)
        if self.prior is not None:
            self._factor_in(self._aligned(self.prior))
        for m in self.msgs.values():
            self._factor_in(self._aligned(m))
            self._rescale()

    def set(self, slot, m):
        old = self.msgs.get(slot)
        self.msgs[slot] = m
        self.updates += 1
        if self.frame is None or self.updates >= _REBUILD_EVERY:
            self.rebuild()
            return
        for a, lab in enumerate(m.labels):
            if lab in self.fixed:
                continue
            j = self.labels.index(lab)
            o = int(m.origin[a])
            if o < self.frame.lo[j] or o + m.table.shape[a] - 1 > self.frame.hi[j]:
                self.rebuild()
                return
        if old is not None:
            self._factor_out(self._aligned(old))
        self._factor_in(self._aligned(m))
        self._rescale()

    def product(self, exclude=None):
        """Table over the frame of the prior times every message but ``exclude``."""
        if self.nz is None:
            return None
        m = self.msgs.get(exclude) if exclude is not None else None
        if m is None:
            return np.where(self.zeros == 0, self.nz, 0.0)
        t = self._aligned(m)
        pos = t > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            keep = np.where(pos, self.nz / np.where(pos, t, 1.0), self.nz)
        need = np.where(pos, 0, 1)
        return np.where(self.zeros == need, keep, 0.0)

    def marginal(self, keep, p, exclude=None):
        t = self.product(exclude)
        if t is None:
            raise DegenerateMessageError("nothing to marginalize yet")
        joint = LabeledPmf(self.labels, self.frame.lo.copy(), np.ascontiguousarray(t),
                           _trusted=True)
        if not (t > 0).any():
            raise ContradictionError(f"product over {self.labels} has no positive mass")
        return P.marginalize(joint, keep, p)


class HuginNode(Passer):
    """Passer holding an optional joint prior and a cached product of messages."""

    kind = "hugin"
    dot_shape = "box"

    def __init__(self, name, prior=None):
        super().__init__(name)
        self.prior = P.normalize(prior) if prior is not None else None
        self._cache = None

    def _product(self):
        if self._cache is None:
            labels = list(self.prior.labels) if self.prior is not None else []
            for l in self.labels():
                if l not in labels:
                    labels.append(l)
            self._cache = _ProductCache(labels, self.prior)
            self._cache.rebuild()
        return self._cache

    def covers(self, e):
        return self.prior is not None and set(e.labels) <= set(self.prior.labels)

    def ready_to_send(self, e):
        return self.covers(e) or super().ready_to_send(e)

    def _on_receive(self, slot, m):
        self._product().set(slot, m)

    def compute_message(self, e):
        return self._product().marginal(e.labels, self.graph_p, exclude=e.slot)

    def variable_posterior(self, label, p):
        c = self._product()
        if label not in c.labels:
            raise LabelError(f"{self.name} does not hold variable {label!r}")
        return c.marginal((label,), p)

    graph_p = 1.0


class Hyperedge(HuginNode):
    """Clique compressor over a variable tuple; sends once its inputs cover an edge."""

    kind = "hyperedge"
    dot_shape = "square"

    def __init__(self, name, labels):
        super().__init__(name, None)
        self.var_labels = tuple(labels)
        self.heard = set()

    def _product(self):
        if self._cache is None:
            labels = list(self.var_labels)
            for l in self.labels():
                if l not in labels:
                    labels.append(l)
            self._cache = _ProductCache(labels, None)
        return self._cache

    def ready_to_send(self, e):
        self._check_edge(e)
        return self.heard.issuperset(e.labels)

    def _on_receive(self, slot, m):
        self.heard.update(m.labels)
        super()._on_receive(slot, m)


class ConstantMultiplierNode(Passer):
    """``out = factor * in`` per axis; backward messages use ``1 / factor``."""

    kind = "multiplier"
    dot_shape = "diamond"

    def __init__(self, name, factors, interpolate_forward=False, interpolate_backward=True):
        super().__init__(name)
        self.factors = np.atleast_1d(np.asarray(factors, dtype=np.float64))
        self.interpolate_forward = interpolate_forward
        self.interpolate_backward = interpolate_backward
        self.input_edge = None
        self.output_edge = None

    @property
    def backward_factors(self):
        return 1.0 / self.factors

    def compute_message(self, e):
        if e is self.output_edge:
            m = self.received[self.input_edge.slot]
            f, interp = self.factors, self.interpolate_forward
        elif e is self.input_edge:
            m = self.received[self.output_edge.slot]
            f, interp = self.backward_factors, self.interpolate_backward
        else:
            raise TopologyError(f"{e} is not incident to {self.name}")
        if m is None:
            raise DegenerateMessageError(f"{self.name} has nothing to scale toward {e}")
        out = P.scale_support(m, f, interp).relabel(e.labels)
        return P.normalize(out)


class ConvTreePasser(Passer):
    """Additive dependency ``sum = addend_0 + ... + addend_{n-1}`` as one passer."""

    kind = "convtree"
    dot_shape = "triangle"

    def __init__(self, name, n, dim=1, p=1.0, trim=True):
        super().__init__(name)
        self.tree = ConvTree(n, p, dim, trim)
        self.leaf_edges = [None] * n
        self.sum_edge = None
        self._role = {}

    def bind(self, edge, role):
        """``role`` is a leaf index or ``"sum"``."""
        self._role[edge.slot] = role
        if role == "sum":
            self.sum_edge = edge
        else:
            self.leaf_edges[role] = edge

    def _on_receive(self, slot, m):
        role = self._role[slot]
        if role == "sum":
            self.tree.receive_sum_likelihood(m)
        else:
            self.tree.receive_prior(role, m)

    def compute_message(self, e):
        role = self._role[e.slot]
        if role == "sum":
            out = self.tree.request_sum_prior()
        else:
            out = self.tree.request_leaf_likelihood(role)
        return out.relabel(e.labels)


class InferenceGraph:
    """Passers joined by reverse-linked edge pairs, with one global ``p``."""

    def __init__(self, p=1.0, trim=True):
        self.p = check_p(p)
        self.trim = trim
        self.passers = []
        self._names = {}
        self._owners = None
        self.messages_passed = 0

    # -- construction
    def _add(self, passer):
        if passer.name in self._names:
            raise TopologyError(f"duplicate passer name {passer.name!r}")
        passer.graph_p = self.p
        self._owners = None
        self._names[passer.name] = passer
        self.passers.append(passer)
        return passer

    def __getitem__(self, name):
        return self._names[name]

    def add_hugin(self, name, prior=None):
        return self._add(HuginNode(name, prior))

    def add_hyperedge(self, name, labels):
        return self._add(Hyperedge(name, labels))

    def add_multiplier(self, name, factors, interpolate_forward=False,
                       interpolate_backward=True):
        return self._add(ConstantMultiplierNode(name, factors, interpolate_forward,
                                                interpolate_backward))

    def add_conv_tree(self, name, n, dim=1):
        return self._add(ConvTreePasser(name, n, dim, self.p, self.trim))

    def connect(self, a, b, labels):
        """Create the edge pair ``a -> b`` / ``b -> a`` carrying ``labels``."""
        a = self._names[a] if isinstance(a, str) else a
        b = self._names[b] if isinstance(b, str) else b
        if a is b:
            raise TopologyError("self loops are not allowed")
        labels = (labels,) if isinstance(labels, str) else tuple(labels)
        for side in (a, b):
            if isinstance(side, HuginNode) and side._cache is not None:
                raise TopologyError(f"{side.name} already holds messages")
        ab, ba = Edge(a, b, labels), Edge(b, a, labels)
        ab.reverse, ba.reverse = ba, ab
        ab.primary = True
        self._owners = None
        a._attach(ab)
        b._attach(ba)
        return ab

    def connect_multiplier(self, mult, source, dest, in_labels, out_labels):
        """Wire ``source -> mult -> dest``; returns the edges leaving ``mult``."""
        e_in = self.connect(mult, source, in_labels)
        e_out = self.connect(mult, dest, out_labels)
        mult.input_edge, mult.output_edge = e_in, e_out
        return e_in, e_out

    def connect_tree(self, tree, other, labels, role):
        e = self.connect(tree, other, labels)
        tree.bind(e, role)
        return e

    @property
    def edges(self):
        return [e for ps in self.passers for e in ps.edges]

    # -- messaging
    def deliver(self, e, m, dampening=0.0):
        """Send ``m`` along ``e`` with dampening; returns the stored message."""
        if tuple(m.labels) != e.labels:
            if set(m.labels) == set(e.labels):
                m = _reorder(m, e.labels)
            else:
                raise LabelError(f"message over {m.labels} on edge carrying {e.labels}")
        if not 0.0 <= dampening < 1.0:
            raise ValueError(f"dampening must lie in [0, 1), got {dampening}")
        stored = dampen(e.last_message, m, dampening)
        e.last_message = stored
        e.fired += 1
        e.version += 1
        self.messages_passed += 1
        e.destination.receive(e, stored)
        return stored

    def send(self, e, dampening=0.0):
        return self.deliver(e, e.source.compute_message(e), dampening)

    def reset_messages(self):
        for ps in self.passers:
            for s in range(len(ps.edges)):
                ps.received[s] = None
            ps.n_received = 0
            if isinstance(ps, HuginNode):
                ps._cache = None
            if isinstance(ps, Hyperedge):
                ps.heard = set()
            if isinstance(ps, ConvTreePasser):
                t = ps.tree
                ps.tree = ConvTree(t.n, t.p, t.dim, t.trim, t.exact)
        for e in self.edges:
            e.last_message = None
            e.queued = False
            e.fired = 0
        self.messages_passed = 0

    # -- queries
    def owner_of(self, label):
        """Passer whose product yields the posterior of ``label``.

        A hyperedge over the variable is preferred; otherwise the first HUGIN
        node holding it.
        """
        if self._owners is None:
            owners = {}
            for ps in self.passers:
                if isinstance(ps, Hyperedge):
                    for l in ps.var_labels:
                        owners.setdefault(l, ps)
            for ps in self.passers:
                if isinstance(ps, HuginNode) and not isinstance(ps, Hyperedge):
                    held = (ps.prior.labels if ps.prior is not None else ()) + ps.labels()
                    for l in held:
                        owners.setdefault(l, ps)
            self._owners = owners
        try:
            return self._owners[label]
        except KeyError:
            raise LabelError(f"unknown variable {label!r}") from None

    def variables(self):
        out = []
        for ps in self.passers:
            if isinstance(ps, HuginNode):
                for l in (ps.var_labels if isinstance(ps, Hyperedge) else ()) + (
                        ps.prior.labels if ps.prior is not None else ()) + ps.labels():
                    if l not in out:
                        out.append(l)
        return out

    def posterior(self, label):
        return self.owner_of(label).variable_posterior(label, self.p)

    def to_dot(self, name="convforest"):
        lines = [f"graph {name} {{"]
        style = {"hugin": ', style=filled, fillcolor=cyan', "hyperedge": "",
                 "multiplier": "", "convtree": ""}
        for ps in self.passers:
            lines.append(f'  "{ps.name}" [shape={ps.dot_shape}, '
                         f'label="{ps.name}\\n{ps.kind}"{style[ps.kind]}];')
        for ps in self.passers:
            for e in ps.edges:
                if e.primary:
                    lab = ",".join(e.labels)
                    lines.append(f'  "{e.source.name}" -- "{e.destination.name}" [label="{lab}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def ready_to_send(passer, e):
    return passer.ready_to_send(e)


def compute_message_out(passer, e):
    return passer.compute_message(e)


def receive_message(graph, e, m, dampening=0.0):
    return graph.deliver(e, m, dampening)


def posterior(graph, label):
    return graph.posterior(label)

"""Trimmed, lazy p-convolution trees.

A tree over ``n`` addends ``X_0 .. X_{n-1}`` with ``Y = X_0 + ... + X_{n-1}``
combines the addends pairwise in a balanced binary tree.  Each node ``u``
caches

* a *prior*: the PMF of the partial sum over the leaves below ``u``, and
* a *likelihood*: the evidence on that partial sum coming from the root's
  likelihood and every addend outside ``u``'s subtree.

Before any values are combined, interval bounds are propagated up (Minkowski
sums of child priors) and down (parent minus sibling) and intersected at each
node; every PMF is cropped to its node's intersected box, so no convolution
ever produces values that cannot contribute to a posterior.

Caches are repaired lazily.  Receiving an addend only flags ancestors as
dirty, stopping at the first ancestor that already is, so a long run of
receives costs amortized O(1) node visits each.  Likelihood caches carry the
versions of the two caches they were computed from and are recomputed only
when a request finds them stale.
"""

import numpy as np

from . import pmf as P
from .convolution import NAIVE_THRESHOLD, check_p, fft_ops, naive_ops, out_shape
from .errors import (ArityError, ContradictionError, NotReadyError, ShapeError)
from .pmf import SupportBox


def _add(a, b):
    return None if a is None or b is None else a + b


def _diff(a, b):
    return None if a is None or b is None else a - b


def _meet(a, b):
    if a is None:
        return b
    if b is None:
        return a
    if not a.intersects(b):
        raise ContradictionError(f"support boxes {a} and {b} do not intersect")
    return a & b


class ConvTreeNode:
    __slots__ = ("index", "parent", "left", "right", "leaf", "depth",
                 "prior_box", "lik_box", "trimmed",
                 "prior_pmf", "prior_dirty", "prior_ver", "prior_epoch",
                 "lik_pmf", "lik_ver", "lik_stamp")

    def __init__(self, index, parent, depth):
        self.index = index
        self.parent = parent
        self.depth = depth
        self.left = self.right = None
        self.leaf = -1
        self.prior_box = self.lik_box = self.trimmed = None
        self.prior_pmf = None
        self.prior_dirty = True
        self.prior_ver = 0
        self.prior_epoch = -1
        self.lik_pmf = None
        self.lik_ver = 0
        self.lik_stamp = None

    @property
    def children(self):
        return () if self.left is None else (self.left, self.right)

    @property
    def is_leaf(self):
        return self.left is None


class ConvTree:
    """Balanced binary p-convolution tree over ``n`` addends of dimension ``dim``.

    PMFs given to the tree may carry any labels; the tree works with the
    canonical labels ``("_0", ...)`` and returns results labeled that way.
    ``exact=True`` evaluates every convolution directly (no FFT, no L_p
    estimate), which max-product searches such as knapsack need.
    """

    def __init__(self, n, p=1.0, dim=1, trim=True, exact=False):
        if int(n) < 1:
            raise ArityError("a convolution tree needs at least one addend")
        self.n = int(n)
        self.p = check_p(p)
        self.dim = int(dim)
        self.trim = bool(trim)
        self.exact = bool(exact)
        self.labels = tuple(f"_{a}" for a in range(self.dim))
        self.nodes = []
        self.leaves = [None] * self.n
        self.root = self._build(0, self.n, None, 0)
        self._raw = [None] * self.n
        self._n_raw = 0
        self._raw_boxes = [None] * self.n
        self._sum_lik = None
        self._sum_box = None
        self._epoch = 0
        self._box_epoch = -1
        self.nodes_touched = 0
        self.scalar_ops = 0
        self.convolutions = 0

    # -- topology
    def _build(self, lo, hi, parent, depth):
        node = ConvTreeNode(len(self.nodes), parent, depth)
        self.nodes.append(node)
        if hi - lo == 1:
            node.leaf = lo
            self.leaves[lo] = node
            return node
        mid = (lo + hi) // 2
        node.left = self._build(lo, mid, node, depth + 1)
        node.right = self._build(mid, hi, node, depth + 1)
        return node

    @property
    def depth(self):
        return max(nd.depth for nd in self.nodes)

    def reset_counters(self):
        self.nodes_touched = 0
        self.scalar_ops = 0
        self.convolutions = 0

    # -- receiving
    def _canon(self, m):
        if m.ndim != self.dim:
            raise ShapeError(f"tree of dimension {self.dim} got a {m.ndim}-axis PMF")
        return P.normalize(m.relabel(self.labels))

    def receive_prior(self, i, m):
        """Store the PMF of addend ``i``; flags dependent caches without convolving."""
        if not 0 <= i < self.n:
            raise IndexError(f"leaf index {i} out of range for {self.n} leaves")
        m = P.narrow_support(self._canon(m))
        box = m.box
        if self._raw_boxes[i] is None or box != self._raw_boxes[i]:
            self._epoch += 1
        if self._raw[i] is None:
            self._n_raw += 1
        self._raw[i] = m
        self._raw_boxes[i] = box
        leaf = self.leaves[i]
        leaf.prior_ver += 1
        leaf.prior_dirty = True
        self.nodes_touched += 1
        node = leaf.parent
        while node is not None and not node.prior_dirty:
            node.prior_dirty = True
            self.nodes_touched += 1
            node = node.parent

    def receive_sum_likelihood(self, m):
        """Store the likelihood on the sum; every likelihood cache becomes stale."""
        m = P.narrow_support(self._canon(m))
        box = m.box
        if self._sum_box is None or box != self._sum_box:
            self._epoch += 1
        self._sum_lik = m
        self._sum_box = box
        self.root.lik_ver += 1
        self.nodes_touched += 1

    def has_prior(self, i):
        return self._raw[i] is not None

    def has_sum_likelihood(self):
        return self._sum_lik is not None

    # -- support passes
    def support_forward_pass(self):
        """Prior boxes bottom-up; returns the prior box of the sum (None if unknown)."""
        for node in reversed(self.nodes):
            if node.is_leaf:
                node.prior_box = self._raw_boxes[node.leaf]
            else:
                node.prior_box = _add(node.left.prior_box, node.right.prior_box)
        return self.root.prior_box

    def support_backward_pass(self):
        """Likelihood boxes top-down, intersecting with prior boxes on the way."""
        root = self.root
        root.lik_box = self._sum_box
        root.trimmed = _meet(root.prior_box, root.lik_box)
        for node in self.nodes:
            if node.is_leaf:
                continue
            for child, sib in ((node.left, node.right), (node.right, node.left)):
                child.lik_box = _diff(node.trimmed, sib.prior_box)
                child.trimmed = _meet(child.prior_box, child.lik_box)
        return [nd.trimmed for nd in self.leaves]

    def _ensure_boxes(self):
        if self._box_epoch == self._epoch:
            return
        self.support_forward_pass()
        self.support_backward_pass()
        self._box_epoch = self._epoch

    def _crop(self, m, node):
        if not self.trim or node.trimmed is None:
            return m
        return P.crop(m, node.trimmed)

    # -- values
    def _convolve(self, a, b):
        shape_out = out_shape(a.shape, b.shape)
        if self.exact or int(np.prod(shape_out)) <= NAIVE_THRESHOLD:
            self.scalar_ops += naive_ops(a.shape, b.shape)
        else:
            self.scalar_ops += fft_ops(a.shape, b.shape)
        self.convolutions += 1
        return P.add_pmfs(a, b, self.p, self.labels, self.exact)

    def _prior(self, node):
        self.nodes_touched += 1
        if not node.prior_dirty and node.prior_epoch == self._epoch:
            return node.prior_pmf
        if node.is_leaf:
            raw = self._raw[node.leaf]
            if raw is None:
                raise NotReadyError(f"addend {node.leaf} has not been received")
            pm = self._crop(raw, node)
        else:
            pm = self._crop(self._convolve(self._prior(node.left), self._prior(node.right)), node)
            node.prior_ver += 1
        node.prior_pmf = pm
        node.prior_dirty = False
        node.prior_epoch = self._epoch
        return pm

    def _lik(self, node):
        self.nodes_touched += 1
        if node.parent is None:
            if self._sum_lik is None:
                raise NotReadyError("the sum likelihood has not been received")
            stamp = (self._epoch, node.lik_ver)
            if node.lik_stamp != stamp:
                node.lik_pmf = self._crop(self._sum_lik, node)
                node.lik_stamp = stamp
            return node.lik_pmf
        parent = node.parent
        sib = parent.left if parent.right is node else parent.right
        up = self._lik(parent)
        side = self._prior(sib)
        stamp = (self._epoch, parent.lik_ver, sib.prior_ver)
        if node.lik_stamp != stamp:
            node.lik_pmf = self._crop(self._convolve(up, P.negate_axes(side)), node)
            node.lik_ver += 1
            node.lik_stamp = stamp
        return node.lik_pmf

    def request_leaf_likelihood(self, i):
        """Evidence on addend ``i`` from the sum likelihood and all other addends."""
        if not 0 <= i < self.n:
            raise IndexError(f"leaf index {i} out of range for {self.n} leaves")
        ready = self._n_raw - (self._raw[i] is not None)
        if ready < self.n - 1:
            missing = [j for j in range(self.n) if j != i and self._raw[j] is None]
            raise NotReadyError(f"addends {missing[:5]} have not been received")
        if self._sum_lik is None:
            raise NotReadyError("the sum likelihood has not been received")
        self._ensure_boxes()
        return self._lik(self.leaves[i])

    def request_sum_prior(self):
        """PMF of the sum given the addends (cropped to the sum's likelihood box)."""
        if self._n_raw < self.n:
            missing = [j for j in range(self.n) if self._raw[j] is None]
            raise NotReadyError(f"addends {missing[:5]} have not been received")
        self._ensure_boxes()
        return self._prior(self.root)

    def leaf_posterior(self, i):
        lik = self.request_leaf_likelihood(i)
        return P.multiply(self._raw[i], lik)

    def sum_posterior(self):
        return P.multiply(self.request_sum_prior(), self._sum_lik)

    def trimmed_box(self, i=None):
        """Intersected box of leaf ``i`` (or of the root when ``i`` is None)."""
        self._ensure_boxes()
        return self.root.trimmed if i is None else self.leaves[i].trimmed


def build(n, p=1.0, dim=1, trim=True, exact=False):
    return ConvTree(n, p, dim, trim, exact)


def receive_prior(tree, i, m):
    tree.receive_prior(i, m)


def receive_sum_likelihood(tree, m):
    tree.receive_sum_likelihood(m)


def request_leaf_likelihood(tree, i):
    return tree.request_leaf_likelihood(i)


def request_sum_prior(tree):
    return tree.request_sum_prior()

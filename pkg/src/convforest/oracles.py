"""Brute-force references for testing: enumeration, exhaustive search, HMM DPs.

Nothing here touches the inference engine; each function works from plain
arrays and dictionaries so that agreement with the engine is meaningful.
Runtime is exponential by design and guarded by size limits.
"""

import itertools
import math

import numpy as np

from .errors import ArityError, CapacityError

#: Largest joint state count :func:`enumerate_marginals` will visit.
MAX_STATES = 10 ** 7

#: Largest item count for the exhaustive subset searches.
MAX_ITEMS = 24


class JointModel:
    """Variables with finite integer supports and factors over subsets of them.

    ``factors`` is a list of ``(labels, origin, table)`` triples, where
    ``table[idx]`` is the factor value at ``origin + idx``.  A factor may also
    be a callable taking one value per label (used for deterministic sums).
    """

    def __init__(self, supports=None, factors=None):
        self.supports = dict(supports or {})
        self.factors = list(factors or [])

    def add_variable(self, label, values):
        self.supports[label] = list(values)

    def add_table(self, labels, origin, table):
        self.factors.append((tuple(labels), tuple(int(o) for o in origin),
                             np.asarray(table, dtype=float)))

    def add_constraint(self, labels, fn):
        self.factors.append((tuple(labels), None, fn))

    def state_count(self):
        return math.prod(len(v) for v in self.supports.values())


def _factor_value(factor, assign):
    labels, origin, table = factor
    vals = [assign[l] for l in labels]
    if origin is None:
        return float(table(*vals))
    idx = []
    for v, o, n in zip(vals, origin, table.shape):
        i = v - o
        if i < 0 or i >= n:
            return 0.0
        idx.append(i)
    return float(table[tuple(idx)])


def enumerate_marginals(model, p=1):
    """Per-variable sum-marginals (``p=1``) or max-marginals (``p=inf``).

    Returns ``{label: {value: probability}}`` normalized per variable.
    """
    if model.state_count() > MAX_STATES:
        raise CapacityError(f"{model.state_count()} joint states exceed {MAX_STATES}")
    use_max = math.isinf(p)
    labels = list(model.supports)
    acc = {l: {v: 0.0 for v in model.supports[l]} for l in labels}
    for combo in itertools.product(*(model.supports[l] for l in labels)):
        assign = dict(zip(labels, combo))
        w = 1.0
        for f in model.factors:
            w *= _factor_value(f, assign)
            if w == 0.0:
                break
        if w == 0.0:
            continue
        for l, v in assign.items():
            if use_max:
                if w > acc[l][v]:
                    acc[l][v] = w
            else:
                acc[l][v] += w
    out = {}
    for l in labels:
        s = sum(acc[l].values())
        out[l] = {v: (w / s if s > 0 else 0.0) for v, w in acc[l].items()}
    return out


def _subsets(n, chunk=1 << 16):
    """Yield 0/1 selection matrices covering all ``2**n`` subsets in order."""
    bits = np.arange(n, dtype=np.int64)
    for start in range(0, 1 << n, chunk):
        masks = np.arange(start, min(start + chunk, 1 << n), dtype=np.int64)
        yield (masks[:, None] >> bits) & 1


def _check_items(values):
    values = [int(v) for v in values]
    if not values:
        raise ArityError("need at least one value")
    if len(values) > MAX_ITEMS:
        raise CapacityError(f"more than {MAX_ITEMS} items")
    return values


def brute_subset_sum(values, target):
    """Exhaustive attainable subset sums; returns ``(target attainable, sorted sums)``."""
    values = _check_items(values)
    v = np.asarray(values, np.int64)
    sums = set()
    for pick in _subsets(len(values)):
        sums.update(np.unique(pick @ v).tolist())
    return int(target) in sums, sorted(sums)


def brute_knapsack(values, weights, target):
    """Best total weight over subsets whose values sum to ``target``.

    Returns ``(best score or None, list of optimal 0/1 selections)``.
    """
    values = _check_items(values)
    v = np.asarray(values, np.int64)
    w = np.asarray(weights, np.float64)
    best, witnesses = None, []
    for pick in _subsets(len(values)):
        hit = pick[(pick @ v) == target]
        if not hit.shape[0]:
            continue
        scores = hit @ w
        top = scores.max()
        if best is not None and top < best - 1e-12:
            continue
        if best is None or top > best + 1e-12:
            best, witnesses = float(top), []
        for row in hit[np.abs(scores - best) <= 1e-12]:
            witnesses.append(row.tolist())
    return best, witnesses


def forward_backward(initial, transition, emission, observations):
    """Per-position state posteriors of a discrete HMM (scaled recursions)."""
    pi = np.asarray(initial, float)
    A = np.asarray(transition, float)
    B = np.asarray(emission, float)
    obs = list(observations)
    n, k = len(obs), len(pi)
    alpha = np.zeros((n, k))
    scale = np.zeros(n)
    a = pi * B[:, obs[0]]
    scale[0] = a.sum()
    alpha[0] = a / scale[0]
    for t in range(1, n):
        a = (alpha[t - 1] @ A) * B[:, obs[t]]
        scale[t] = a.sum()
        alpha[t] = a / scale[t]
    beta = np.ones((n, k))
    for t in range(n - 2, -1, -1):
        b = A @ (B[:, obs[t + 1]] * beta[t + 1])
        beta[t] = b / scale[t + 1]
    post = alpha * beta
    return post / post.sum(axis=1, keepdims=True)


def viterbi(initial, transition, emission, observations):
    """Most probable state path (log-space dynamic program)."""
    with np.errstate(divide="ignore"):
        lpi = np.log(np.asarray(initial, float))
        lA = np.log(np.asarray(transition, float))
        lB = np.log(np.asarray(emission, float))
    obs = list(observations)
    n, k = len(obs), len(lpi)
    score = lpi + lB[:, obs[0]]
    back = np.zeros((n, k), int)
    for t in range(1, n):
        cand = score[:, None] + lA
        back[t] = np.argmax(cand, axis=0)
        score = cand[back[t], np.arange(k)] + lB[:, obs[t]]
    path = [int(np.argmax(score))]
    for t in range(n - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    return path[::-1]


def path_probability(initial, transition, emission, observations, path):
    p = initial[path[0]] * emission[path[0]][observations[0]]
    for t in range(1, len(path)):
        p *= transition[path[t - 1]][path[t]] * emission[path[t]][observations[t]]
    return float(p)


def enumerate_paths(initial, transition, emission, observations):
    """All state paths with their joint probabilities (exponential)."""
    k = len(initial)
    n = len(observations)
    if k ** n > MAX_STATES:
        raise CapacityError("too many paths to enumerate")
    return [(list(path), path_probability(initial, transition, emission, observations, path))
            for path in itertools.product(range(k), repeat=n)]

"""Schedulers that drive an :class:`~convforest.engine.InferenceGraph` to convergence.

Every scheduler stops when no eligible edge would carry a message whose mean
squared deviation from the edge's previous message exceeds ``epsilon``, or
after ``max_messages`` deliveries.  Non-convergence is reported, not raised.
"""

import heapq
import itertools
import time
from collections import deque
from dataclasses import dataclass, asdict

import numpy as np

from .engine import Hyperedge, message_mse
from .errors import TopologyError


@dataclass
class ConvergenceConfig:
    epsilon: float = 1e-8
    max_messages: int = 10 ** 6
    dampening: float = 0.0
    seed: int = 0
    subtree_count: int = 2

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if int(self.max_messages) < 1:
            raise ValueError("max_messages must be positive")
        if not 0.0 <= self.dampening < 1.0:
            raise ValueError(f"dampening must lie in [0, 1), got {self.dampening}")
        if int(self.subtree_count) < 1:
            raise ValueError("subtree_count must be positive")


@dataclass
class ConvergenceReport:
    messages_passed: int
    converged: bool
    wall_time: float
    scheduler: str = ""

    def to_dict(self):
        return asdict(self)


def _count_ready(e):
    """Eligibility by counting only (no HUGIN ab initio rule).

    Hyperedges must also have heard every label of ``e``.
    """
    src = e.source
    if isinstance(src, Hyperedge) and not src.ready_to_send(e):
        return False
    n = len(src.edges)
    if src.n_received == n:
        return True
    return src.n_received == n - 1 and src.received[e.slot] is None


def _ready(e):
    return e.source.ready_to_send(e)


class _Run:
    def __init__(self, graph, cfg, name):
        self.graph, self.cfg, self.name = graph, cfg or ConvergenceConfig(), name
        self.start = time.perf_counter()
        self.sent = 0

    def deliver(self, e, m):
        self.graph.deliver(e, m, self.cfg.dampening)
        self.sent += 1

    @property
    def exhausted(self):
        return self.sent >= self.cfg.max_messages

    def report(self, converged):
        return ConvergenceReport(self.sent, bool(converged),
                                 time.perf_counter() - self.start, self.name)


def run_fifo(graph, cfg=None):
    """FIFO queue of eligible edges; messages are computed when dequeued.

    Edges eligible by counting go first.  Edges eligible only through the
    eager hyperedge or HUGIN rules wait in a second queue until the first one
    drains, so on a tree every directed edge fires exactly once.
    """
    run = _Run(graph, cfg, "fifo")
    eps = run.cfg.epsilon
    queue, deferred = deque(), deque()

    def push(e):
        if not e.queued:
            e.queued = True
            (queue if _count_ready(e) else deferred).append(e)

    def seed():
        edges = graph.edges
        fresh = [e for e in edges if e.last_message is None and _count_ready(e)]
        if not fresh:
            fresh = [e for e in edges if e.last_message is None and _ready(e)]
        for e in fresh:
            push(e)
        return bool(fresh)

    seed()
    while True:
        while queue or deferred:
            if run.exhausted:
                return run.report(False)
            e = queue.popleft() if queue else deferred.popleft()
            e.queued = False
            if not _ready(e):
                continue
            m = e.source.compute_message(e)
            if e.last_message is not None and message_mse(m, e.last_message) <= eps:
                continue
            run.deliver(e, m)
            back = e.reverse
            for f in e.destination.edges:
                if f is not back and not f.queued and _ready(f):
                    push(f)
        if not seed():
            return run.report(True)


def run_priority(graph, cfg=None):
    """Largest-deviation-first; messages are computed when (re)queued."""
    run = _Run(graph, cfg, "priority")
    eps = run.cfg.epsilon
    heap = []
    pending = {}
    tie = itertools.count()

    def refresh(e):
        if not _ready(e):
            return
        m = e.source.compute_message(e)
        dev = message_mse(m, e.last_message)
        e.priority_version += 1
        pending[id(e)] = m
        heapq.heappush(heap, (-dev, next(tie), e.priority_version, e))

    for e in graph.edges:
        refresh(e)
    while heap:
        neg, _, ver, e = heapq.heappop(heap)
        if ver != e.priority_version:
            continue
        if -neg <= eps:
            return run.report(True)
        if run.exhausted:
            return run.report(False)
        m = pending.pop(id(e))
        e.priority_version += 1
        run.deliver(e, m)
        for f in e.destination.edges:
            refresh(f)
    return run.report(True)


def _neighbours(ps):
    seen, out = set(), []
    for e in ps.edges:
        d = e.destination
        if id(d) not in seen:
            seen.add(id(d))
            out.append(d)
    return out


def random_spanning_orders(graph, count, seed):
    """Visit orders of ``count`` random depth-first spanning forests."""
    rng = np.random.default_rng(seed)
    orders = []
    for _ in range(count):
        seen, order = set(), []
        roots = list(graph.passers)
        for r in rng.permutation(len(roots)):
            root = roots[r]
            if id(root) in seen:
                continue
            stack = [root]
            while stack:
                ps = stack.pop()
                if id(ps) in seen:
                    continue
                seen.add(id(ps))
                order.append(ps)
                nb = [q for q in _neighbours(ps) if id(q) not in seen]
                for j in rng.permutation(len(nb)):
                    stack.append(nb[j])
        orders.append(order)
    return orders


def run_random_subtree(graph, cfg=None, seed=None):
    """Alternate sweeps over random depth-first spanning trees.

    A sweep visits the tree's passers leaves-first and then root-first; each
    visited passer sends along every eligible outgoing edge.
    """
    run = _Run(graph, cfg, "subtree")
    eps = run.cfg.epsilon
    seed = run.cfg.seed if seed is None else seed
    orders = random_spanning_orders(graph, run.cfg.subtree_count, seed)
    if not graph.passers:
        return run.report(True)
    for sweep in itertools.count():
        order = orders[sweep % len(orders)]
        worst = 0.0
        for ps in itertools.chain(reversed(order), order):
            for e in ps.edges:
                if not _ready(e):
                    continue
                m = ps.compute_message(e)
                dev = message_mse(m, e.last_message)
                if dev <= eps:
                    continue
                worst = max(worst, dev)
                if run.exhausted:
                    return run.report(False)
                run.deliver(e, m)
        if worst <= eps:
            return run.report(True)


def chain_order(graph):
    """Passers of a path-shaped graph from one end to the other."""
    ps = graph.passers
    if not ps:
        return []
    nbrs = {id(p): _neighbours(p) for p in ps}
    for p in ps:
        if len(nbrs[id(p)]) != len(p.edges):
            raise TopologyError(f"{p.name} has parallel edges; not a chain")
        if len(p.edges) > 2:
            raise TopologyError(f"{p.name} has {len(p.edges)} neighbours; not a chain")
    if len(ps) == 1:
        return list(ps)
    ends = [p for p in ps if len(p.edges) == 1]
    if len(ends) != 2:
        raise TopologyError("graph is not a single path")
    order, prev, cur = [ends[0]], None, ends[0]
    while True:
        nxt = [q for q in nbrs[id(cur)] if q is not prev]
        if not nxt:
            break
        prev, cur = cur, nxt[0]
        order.append(cur)
    if len(order) != len(ps):
        raise TopologyError("graph is not connected")
    return order


def run_chain(graph, cfg=None):
    """One forward and one backward sweep over a path; exact on chains."""
    run = _Run(graph, cfg, "chain")
    order = chain_order(graph)
    links = []
    for a, b in zip(order, order[1:]):
        links.append(next(e for e in a.edges if e.destination is b))
    for e in links:
        run.deliver(e, e.source.compute_message(e))
    for e in reversed(links):
        r = e.reverse
        run.deliver(r, r.source.compute_message(r))
    return run.report(True)


SCHEDULERS = {
    "fifo": run_fifo,
    "priority": run_priority,
    "subtree": run_random_subtree,
    "chain": run_chain,
}


def run(graph, scheduler="fifo", cfg=None):
    try:
        fn = SCHEDULERS[scheduler]
    except KeyError:
        raise ValueError(f"unknown scheduler {scheduler!r}") from None
    return fn(graph, cfg)

"""Declarative models compiled into Bethe-shaped inference graphs.

A model is a list of dependencies over named integer variables.  The Bethe
construction puts one hyperedge on every variable tuple that dependencies
exchange, one HUGIN node per table, one convolution-tree passer per additive
dependency and one multiplier passer per scaling dependency.
"""

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import pmf as P
from .engine import InferenceGraph
from .errors import BuildError, DomainError, ParseError
from .pmf import LabeledPmf
from .scheduling import ConvergenceConfig, SCHEDULERS

MODEL_FORMAT = "convforest-model/1"


def _tuple(labels):
    return (labels,) if isinstance(labels, str) else tuple(labels)


@dataclass
class TablePrior:
    labels: Tuple[str, ...]
    pmf: LabeledPmf

    def __post_init__(self):
        self.labels = _tuple(self.labels)
        if set(self.labels) != set(self.pmf.labels):
            raise BuildError(f"table over {self.pmf.labels} declared for {self.labels}")


@dataclass
class Likelihood(TablePrior):
    pass


@dataclass
class Additive:
    """``output = inputs[0] + inputs[1] + ...`` elementwise over tuples."""
    inputs: List[Tuple[str, ...]]
    output: Tuple[str, ...]

    def __post_init__(self):
        self.inputs = [_tuple(t) for t in self.inputs]
        self.output = _tuple(self.output)
        if not self.inputs:
            raise BuildError("an additive dependency needs at least one input")
        arity = len(self.output)
        if any(len(t) != arity for t in self.inputs):
            raise BuildError("all tuples of an additive dependency need the same arity")


@dataclass
class ConstantMultiplier:
    """``output = factors * input`` per axis."""
    input: Tuple[str, ...]
    output: Tuple[str, ...]
    factors: Sequence[float]
    interpolate_forward: bool = False
    interpolate_backward: bool = True

    def __post_init__(self):
        self.input = _tuple(self.input)
        self.output = _tuple(self.output)
        self.factors = [float(f) for f in np.atleast_1d(self.factors)]
        if not (len(self.input) == len(self.output) == len(self.factors)):
            raise BuildError("multiplier input, output and factors need equal length")


@dataclass
class ModelSpec:
    dependencies: list
    p: float = 1.0
    scheduler: str = "fifo"
    config: ConvergenceConfig = field(default_factory=ConvergenceConfig)
    variables: Optional[List[str]] = None
    trim: bool = True

    def labels(self):
        out = []
        for d in self.dependencies:
            for t in _dep_tuples(d):
                for l in t:
                    if l not in out:
                        out.append(l)
        return out


def _dep_tuples(d):
    if isinstance(d, TablePrior):
        return [d.labels]
    if isinstance(d, Additive):
        return d.inputs + [d.output]
    if isinstance(d, ConstantMultiplier):
        return [d.input, d.output]
    raise BuildError(f"unknown dependency {d!r}")


def _split_additive(d):
    """One 1D additive dependency per axis of a multidimensional one."""
    return [Additive([(t[a],) for t in d.inputs], (d.output[a],))
            for a in range(len(d.output))]


def build_bethe(spec, mode="joint"):
    """Compile ``spec`` into an :class:`InferenceGraph`.

    ``mode="loopy1d"`` splits every multidimensional additive dependency into
    independent 1D trees joined only through the tables.
    """
    if mode not in ("joint", "loopy1d"):
        raise BuildError(f"unknown build mode {mode!r}")
    deps = list(spec.dependencies)
    if mode == "loopy1d":
        deps = [s for d in deps for s in (_split_additive(d) if isinstance(d, Additive)
                                          and len(d.output) > 1 else [d])]
    if spec.variables is not None:
        declared = set(spec.variables)
        for d in deps:
            for t in _dep_tuples(d):
                missing = [l for l in t if l not in declared]
                if missing:
                    raise BuildError(f"undeclared labels {missing}")
    seen_priors = set()
    for d in deps:
        if type(d) is TablePrior:
            key = frozenset(d.labels)
            if key in seen_priors:
                raise BuildError(f"conflicting priors over {sorted(key)}")
            seen_priors.add(key)

    # boundary tuples: exchanged by additive and multiplier dependencies
    tuples = []
    for d in deps:
        if isinstance(d, (Additive, ConstantMultiplier)):
            for t in _dep_tuples(d):
                if t not in tuples:
                    tuples.append(t)
    owner = {}
    for t in tuples:
        for l in t:
            if l in owner and owner[l] != t:
                raise BuildError(f"label {l!r} appears in tuples {owner[l]} and {t}")
            owner[l] = t
    for d in deps:
        if isinstance(d, TablePrior):
            for l in d.labels:
                if l not in owner:
                    owner[l] = (l,)
                    tuples.append((l,))

    g = InferenceGraph(spec.p, spec.trim)
    hyper = {}
    for t in tuples:
        hyper[t] = g.add_hyperedge("H[" + ",".join(t) + "]", t)
    counts = {"prior": 0, "lik": 0, "sum": 0, "mul": 0}
    for d in deps:
        if isinstance(d, TablePrior):
            kind = "lik" if isinstance(d, Likelihood) else "prior"
            counts[kind] += 1
            node = g.add_hugin(f"{kind}{counts[kind]}[" + ",".join(d.labels) + "]", d.pmf)
            for t in tuples:
                if set(t) <= set(d.labels):
                    g.connect(node, hyper[t], t)
            uncovered = set(d.labels) - {l for t in tuples if set(t) <= set(d.labels)
                                         for l in t}
            if uncovered:
                raise BuildError(f"table over {d.labels} splits tuple of {sorted(uncovered)}")
        elif isinstance(d, Additive):
            counts["sum"] += 1
            tree = g.add_conv_tree(f"sum{counts['sum']}[" + ",".join(d.output) + "]",
                                   len(d.inputs), len(d.output))
            for i, t in enumerate(d.inputs):
                g.connect_tree(tree, hyper[t], t, i)
            g.connect_tree(tree, hyper[d.output], d.output, "sum")
        else:
            counts["mul"] += 1
            mult = g.add_multiplier(f"mul{counts['mul']}[" + ",".join(d.output) + "]",
                                    d.factors, d.interpolate_forward, d.interpolate_backward)
            g.connect_multiplier(mult, hyper[d.input], hyper[d.output], d.input, d.output)
    return g


def solve(spec, mode="joint"):
    """Build and run ``spec``; returns ``(graph, report)``."""
    g = build_bethe(spec, mode)
    if spec.scheduler not in SCHEDULERS:
        raise BuildError(f"unknown scheduler {spec.scheduler!r}")
    report = SCHEDULERS[spec.scheduler](g, spec.config)
    return g, report


def indicator_label(label):
    return f"I[{label}]"


def build_indicator(m, indicator=None):
    """Joint of ``X`` and the indicator ``X > 0``: mass at 0 goes to I=0, the rest to I=1."""
    if m.ndim != 1:
        raise DomainError("build_indicator expects a one-variable PMF")
    if m.origin[0] < 0:
        raise DomainError("build_indicator needs a support with minimum >= 0")
    label = m.labels[0]
    t = np.zeros((m.shape[0], 2))
    pos = m.support() > 0
    t[~pos, 0] = m.table[~pos]
    t[pos, 1] = m.table[pos]
    joint = LabeledPmf((label, indicator or indicator_label(label)),
                       [int(m.origin[0]), 0], t)
    return P.narrow_support(joint)


def regularize(dependencies, labels, max_present, count_label="present"):
    """Allow at most ``max_present`` of ``labels`` to be nonzero.

    Each single-variable prior over one of ``labels`` becomes a joint prior
    with its indicator; the indicators feed one additive dependency whose sum
    has a uniform likelihood on ``0 .. max_present``.
    """
    labels = list(labels)
    out, done = [], set()
    for d in dependencies:
        if type(d) is TablePrior and len(d.labels) == 1 and d.labels[0] in labels:
            out.append(TablePrior((d.labels[0], indicator_label(d.labels[0])),
                                  build_indicator(d.pmf)))
            done.add(d.labels[0])
        else:
            out.append(d)
    missing = [l for l in labels if l not in done]
    if missing:
        raise BuildError(f"no single-variable prior to regularize for {missing}")
    out.append(Additive([(indicator_label(l),) for l in labels], (count_label,)))
    out.append(Likelihood((count_label,), LabeledPmf.uniform(count_label, 0, max_present)))
    return out


# ------------------------------------------------------------ model files

def _p_to_json(p):
    return "inf" if math.isinf(p) else p


def _p_from_json(v):
    if isinstance(v, str):
        if v.lower() in ("inf", "infinity"):
            return math.inf
        try:
            return float(v)
        except ValueError:
            raise ParseError(f"bad p {v!r}") from None
    return float(v)


def spec_to_dict(spec):
    deps = []
    for d in spec.dependencies:
        if isinstance(d, TablePrior):
            deps.append({"type": "likelihood" if isinstance(d, Likelihood) else "prior",
                         "labels": list(d.labels), "pmf": d.pmf.to_dict()})
        elif isinstance(d, Additive):
            deps.append({"type": "additive", "inputs": [list(t) for t in d.inputs],
                         "output": list(d.output)})
        else:
            deps.append({"type": "multiplier", "input": list(d.input),
                         "output": list(d.output), "factors": list(d.factors),
                         "interpolate_forward": d.interpolate_forward,
                         "interpolate_backward": d.interpolate_backward})
    cfg = spec.config
    return {
        "format": MODEL_FORMAT,
        "variables": spec.variables if spec.variables is not None else spec.labels(),
        "p": _p_to_json(spec.p),
        "scheduler": spec.scheduler,
        "epsilon": cfg.epsilon,
        "max_messages": cfg.max_messages,
        "dampening": cfg.dampening,
        "seed": cfg.seed,
        "trim": spec.trim,
        "dependencies": deps,
    }


def spec_from_dict(d):
    if not isinstance(d, dict):
        raise ParseError("model file must hold a JSON object")
    if d.get("format") != MODEL_FORMAT:
        raise ParseError(f"unsupported model format {d.get('format')!r}")
    try:
        deps = []
        for r in d["dependencies"]:
            kind = r["type"]
            if kind in ("prior", "likelihood"):
                cls = Likelihood if kind == "likelihood" else TablePrior
                deps.append(cls(tuple(r["labels"]), LabeledPmf.from_dict(r["pmf"])))
            elif kind == "additive":
                deps.append(Additive([tuple(t) for t in r["inputs"]], tuple(r["output"])))
            elif kind == "multiplier":
                deps.append(ConstantMultiplier(tuple(r["input"]), tuple(r["output"]),
                                               r["factors"],
                                               bool(r.get("interpolate_forward", False)),
                                               bool(r.get("interpolate_backward", True))))
            else:
                raise ParseError(f"unknown dependency type {kind!r}")
        cfg = ConvergenceConfig(epsilon=float(d.get("epsilon", 1e-8)),
                                max_messages=int(d.get("max_messages", 10 ** 6)),
                                dampening=float(d.get("dampening", 0.0)),
                                seed=int(d.get("seed", 0)))
        return ModelSpec(deps, p=_p_from_json(d.get("p", 1.0)),
                         scheduler=d.get("scheduler", "fifo"), config=cfg,
                         variables=d.get("variables"), trim=bool(d.get("trim", True)))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, (ParseError, BuildError)):
            raise
        raise ParseError(f"malformed model file: {exc}") from None


def dump_model(spec, path):
    with open(path, "w") as fh:
        json.dump(spec_to_dict(spec), fh, indent=1)
        fh.write("\n")


def load_model(path):
    try:
        with open(path) as fh:
            return spec_from_dict(json.load(fh))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None

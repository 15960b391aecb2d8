"""Ready-made models: HMM chains, restaurant bills, subset sums, peptides, isotopes.

Each builder returns plain model objects (a :class:`ModelSpec`, an
:class:`InferenceGraph` or a :class:`ConvTree`) so the command-line front end
and the tests share one construction path.
"""

import csv
import io
import math
import time
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import pmf as P
from .builders import Additive, ConstantMultiplier, Likelihood, ModelSpec, TablePrior, regularize
from .conv_tree import ConvTree
from .engine import InferenceGraph
from .errors import ArityError, ContradictionError, DomainError, ParseError
from .pmf import LabeledPmf
from .scheduling import ConvergenceConfig

# ------------------------------------------------------------------ tables


def _read_csv(name):
    text = resources.files("convforest").joinpath("data", name).read_text()
    return list(csv.DictReader(io.StringIO(text)))


def amino_acids():
    """``{code: (residue mass, hydrophobicity)}`` for the 20 standard residues."""
    return {r["code"]: (float(r["residue_mass"]), float(r["hydrophobicity"]))
            for r in _read_csv("amino_acids.csv")}


def isotopes():
    """``{element: [(mass number, mass, fractional abundance), ...]}``."""
    out = {}
    for r in _read_csv("isotopes.csv"):
        out.setdefault(r["element"], []).append(
            (int(r["mass_number"]), float(r["mass"]), float(r["abundance"])))
    return out


def menu(path=None):
    """Item names and prices in dollars; ``path`` replaces the bundled list."""
    if path is None:
        rows = _read_csv("menu.csv")
    else:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    try:
        return [(r["item"], float(r["price"])) for r in rows]
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad menu file: {exc}") from None


# ------------------------------------------------------------------- HMM

SYMBOLS = "ACGT"

#: Stay probability of both states.
HMM_STAY = 0.9

#: Emission rows for (GC-rich, GC-poor) over symbols A, C, G, T.
HMM_EMISSION = ((0.1, 0.4, 0.4, 0.1),
                (0.4, 0.1, 0.1, 0.4))


@dataclass
class Hmm:
    initial: np.ndarray = field(default_factory=lambda: np.full(2, 0.5))
    transition: np.ndarray = field(
        default_factory=lambda: np.array([[HMM_STAY, 1 - HMM_STAY], [1 - HMM_STAY, HMM_STAY]]))
    emission: np.ndarray = field(default_factory=lambda: np.array(HMM_EMISSION))

    def __post_init__(self):
        self.initial = np.asarray(self.initial, float)
        self.transition = np.asarray(self.transition, float)
        self.emission = np.asarray(self.emission, float)
        k = self.initial.shape[0]
        if self.transition.shape != (k, k) or self.emission.shape[0] != k:
            raise DomainError("HMM parameter shapes disagree")
        for name, t in (("initial", self.initial), ("transition", self.transition),
                        ("emission", self.emission)):
            if (t < 0).any() or not np.isfinite(t).all():
                raise DomainError(f"{name} probabilities must be finite and >= 0")


def gc_hmm(stay=HMM_STAY, rich=HMM_EMISSION[0], poor=HMM_EMISSION[1]):
    return Hmm(np.full(2, 0.5), [[stay, 1 - stay], [1 - stay, stay]], [rich, poor])


def encode_sequence(text):
    """Map a DNA string to symbol indices (A0 C1 G2 T3); whitespace is ignored."""
    clean = "".join(text.split()).upper()
    lut = np.full(256, -1, np.int64)
    for i, ch in enumerate(SYMBOLS):
        lut[ord(ch)] = i
    raw = np.frombuffer(clean.encode("ascii", "replace"), np.uint8)
    codes = lut[raw]
    if (codes < 0).any():
        pos = int(np.argmax(codes < 0))
        raise ParseError(f"invalid symbol {clean[pos]!r} at position {pos}")
    return codes


def read_fasta(path):
    """Sequence from a FASTA or plain text file (header lines skipped)."""
    with open(path) as fh:
        lines = [l for l in fh if not l.startswith(">")]
    return encode_sequence("".join(lines))


def sample_hmm(hmm, length, seed=0):
    """Draw ``(states, observations)`` of the given length."""
    rng = np.random.default_rng(seed)
    k = hmm.initial.shape[0]
    n_sym = hmm.emission.shape[1]
    states = np.empty(length, np.int64)
    obs = np.empty(length, np.int64)
    s = rng.choice(k, p=hmm.initial / hmm.initial.sum())
    cum_t = np.cumsum(hmm.transition / hmm.transition.sum(1, keepdims=True), axis=1)
    cum_e = np.cumsum(hmm.emission / hmm.emission.sum(1, keepdims=True), axis=1)
    u = rng.random((length, 2))
    for i in range(length):
        if i:
            s = min(int(np.searchsorted(cum_t[s], u[i, 0], side="right")), k - 1)
        states[i] = s
        obs[i] = min(int(np.searchsorted(cum_e[s], u[i, 1], side="right")), n_sym - 1)
    return states, obs


def state_label(i):
    return f"S{i}"


def build_hmm_graph(hmm, observations, p=1.0):
    """Chain of HUGIN nodes; node ``i`` holds the factor over ``(S_i, S_{i+1})``.

    The edge between neighbouring nodes carries the shared state ``S_{i+1}``.
    """
    obs = np.asarray(observations, np.int64)
    L = obs.shape[0]
    if L == 0:
        raise ArityError("empty observation sequence")
    g = InferenceGraph(p)
    E = hmm.emission
    first = hmm.initial * E[:, obs[0]]
    if L == 1:
        g.add_hugin("F0", LabeledPmf((state_label(0),), [0], first))
        return g
    prev = None
    for i in range(L - 1):
        t = hmm.transition * E[:, obs[i + 1]][None, :]
        if i == 0:
            t = t * first[:, None]
        s = t.sum()
        if not s > 0:
            raise ContradictionError(f"observation {i + 1} is impossible under the model")
        node = g.add_hugin(f"F{i}", LabeledPmf((state_label(i), state_label(i + 1)),
                                               np.zeros(2, np.int64), t / s, _trusted=True))
        if prev is not None:
            g.connect(prev, node, (state_label(i),))
        prev = node
    return g


def hmm_posteriors(graph, length, state=0):
    """Posterior probability of ``state`` at every position and the argmax track."""
    prob = np.empty(length)
    track = np.empty(length, np.int64)
    for i in range(length):
        m = graph.posterior(state_label(i))
        d = m.dense_over(P.SupportBox([0], [1]))
        prob[i] = d[state]
        track[i] = int(np.argmax(d))
    return prob, track


# ------------------------------------------------------- subset sum, knapsack


def _check_values(values):
    values = [int(v) for v in values]
    if not values:
        raise ArityError("need at least one value")
    if any(v <= 0 for v in values):
        raise DomainError("values must be positive integers")
    return values


def subset_sum(values, target):
    """Attainable subset sums via a sum-product tree; returns ``(decision, sums)``."""
    values = _check_values(values)
    tree = ConvTree(len(values), 1.0)
    for i, v in enumerate(values):
        tree.receive_prior(i, LabeledPmf.from_values("_0", 0, [0.5] + [0.0] * (v - 1) + [0.5]))
    total = tree.request_sum_prior()
    sums = [int(s) for s, w in zip(total.support(), total.table) if w > 0]
    return int(target) in sums, sums


@dataclass
class KnapsackResult:
    feasible: bool
    score: float = None
    witness: list = None
    posteriors: list = None


# largest spread of log-weights kept in floating point; scaling preserves the argmax
_LOG_SPAN = 600.0
# relative gap below which two max-marginal entries count as a tie
_TIE_TOL = 1e-9


def _knapsack_posteriors(values, logw, target, clamp):
    n = len(values)
    tree = ConvTree(n, math.inf, exact=True)
    for i, (v, w) in enumerate(zip(values, logw)):
        if i in clamp:
            pm = LabeledPmf.delta("_0", [v * clamp[i]])
        else:
            top = max(0.0, w)
            pm = LabeledPmf.from_values("_0", 0, [math.exp(-top)] + [0.0] * (v - 1)
                                        + [math.exp(w - top)])
        tree.receive_prior(i, pm)
    tree.receive_sum_likelihood(LabeledPmf.delta("_0", [target]))
    out = []
    for i in range(n):
        post = tree.leaf_posterior(i)
        out.append((post.value_at([0]), post.value_at([values[i]])))
    return out


def knapsack(values, weights, target):
    """Best total weight of a subset whose values sum to ``target`` (max-product).

    Each item enters with prior ``[1 at 0, exp(weight) at value]``; the
    max-marginals of a delta likelihood on the target identify an optimal
    selection.  Ties are broken by clamping items one at a time.
    """
    values = _check_values(values)
    weights = [float(w) for w in weights]
    if len(weights) != len(values):
        raise ArityError("need one weight per value")
    target = int(target)
    if target < 0 or target > sum(values):
        return KnapsackResult(False)
    span = sum(abs(w) for w in weights)
    scale = min(1.0, _LOG_SPAN / span) if span > 0 else 1.0
    logw = [w * scale for w in weights]
    try:
        posts = _knapsack_posteriors(values, logw, target, {})
    except ContradictionError:
        return KnapsackResult(False)
    clamp = {}
    for i, (off, on) in enumerate(posts):
        if abs(on - off) > _TIE_TOL * max(on, off):
            clamp[i] = int(on > off)
    # ambiguous items: fix them one at a time and re-solve
    for i in range(len(values)):
        if i not in clamp:
            off, on = _knapsack_posteriors(values, logw, target, clamp)[i]
            clamp[i] = int(on > off)
    witness = [clamp[i] for i in range(len(values))]
    if sum(v for v, b in zip(values, witness) if b) != target:
        return KnapsackResult(False)
    score = sum(w for w, b in zip(weights, witness) if b)
    return KnapsackResult(True, score, witness, posts)


# --------------------------------------------------------------- restaurant


@dataclass
class RestaurantRun:
    total: int
    order: np.ndarray
    posteriors: list
    wall_time: float
    scalar_ops: int
    convolutions: int
    nodes_touched: int


def restaurant_priors(n, seed=0, items=None, concentration=1.0):
    """Per-customer price PMFs (in quarters) from random item preferences."""
    items = menu() if items is None else items
    quarters = np.array([int(round(price * 4)) for _, price in items])
    if (np.abs(quarters / 4.0 - np.array([pr for _, pr in items])) > 1e-9).any():
        raise DomainError("menu prices must be multiples of $0.25")
    rng = np.random.default_rng(seed)
    lo, hi = int(quarters.min()), int(quarters.max())
    priors = []
    for _ in range(int(n)):
        pref = rng.dirichlet(np.full(len(items), concentration))
        t = np.zeros(hi - lo + 1)
        np.add.at(t, quarters - lo, pref)
        priors.append(P.narrow_support(LabeledPmf(("_0",), [lo], t)))
    return priors, rng


def restaurant(n, seed=0, p=1.0, trim=True, items=None):
    """Sample an order, observe its total exactly and infer every customer's bill."""
    if int(n) < 1:
        raise ArityError("need at least one customer")
    priors, rng = restaurant_priors(n, seed, items)
    order = np.array([int(rng.choice(pm.support(), p=pm.table / pm.table.sum()))
                      for pm in priors])
    total = int(order.sum())
    start = time.perf_counter()
    tree = ConvTree(len(priors), p, trim=trim)
    for i, pm in enumerate(priors):
        tree.receive_prior(i, pm)
    tree.receive_sum_likelihood(LabeledPmf.delta("_0", [total]))
    posts = [tree.leaf_posterior(i) for i in range(len(priors))]
    wall = time.perf_counter() - start
    return RestaurantRun(total, order, posts, wall, tree.scalar_ops, tree.convolutions,
                         tree.nodes_touched)


# ------------------------------------------------------------------ peptide

#: Support scaling for residue masses (bins of 1/32 Da).
MASS_SCALE = 32.0
#: Support scaling for hydrophobicity (bins of 1/64).
HYDRO_SCALE = 64.0
#: Lightest residue mass (glycine), which bounds the counts.
_MIN_RESIDUE = 57.0


def count_label(code):
    return f"N[{code}]"


def _goal_likelihood(label, value):
    """Delta at an integer goal, split 50/50 between the two bins around a fractional one."""
    lo = math.floor(value + 1e-9)
    if abs(value - lo) <= 1e-9:
        return LabeledPmf.delta(label, [lo])
    return LabeledPmf.from_values(label, lo, [0.5, 0.5])


def peptide_spec(mass, hydrophobicity=None, use_mass=True, use_hydro=True, p=math.inf,
                 table=None, max_count=None, mass_scale=MASS_SCALE, hydro_scale=HYDRO_SCALE,
                 config=None, scheduler="fifo"):
    """Residue-count model for a peptide with the given total mass and hydrophobicity."""
    table = amino_acids() if table is None else table
    if not mass > 0:
        raise DomainError("peptide mass must be positive")
    if use_hydro and hydrophobicity is None:
        raise DomainError("hydrophobicity goal missing")
    if not (use_mass or use_hydro):
        raise DomainError("need at least one of mass and hydrophobicity")
    top = max_count if max_count is not None else math.ceil(mass / _MIN_RESIDUE)
    deps = []
    for code in table:
        deps.append(TablePrior((count_label(code),), LabeledPmf.uniform(count_label(code), 0, top)))
    if use_mass:
        for code, (m, _) in table.items():
            deps.append(ConstantMultiplier((count_label(code),), (f"mass[{code}]",),
                                           [m * mass_scale], False, True))
        deps.append(Additive([(f"mass[{c}]",) for c in table], ("mass",)))
        deps.append(Likelihood(("mass",), _goal_likelihood("mass", mass * mass_scale)))
    if use_hydro:
        for code, (_, h) in table.items():
            if h == 0:
                continue
            deps.append(ConstantMultiplier((count_label(code),), (f"hydro[{code}]",),
                                           [h * hydro_scale], False, True))
        deps.append(Additive([(f"hydro[{c}]",) for c, (_, h) in table.items() if h != 0],
                             ("hydro",)))
        deps.append(Likelihood(("hydro",),
                               _goal_likelihood("hydro", hydrophobicity * hydro_scale)))
    return ModelSpec(deps, p=p, scheduler=scheduler, config=config or ConvergenceConfig())


def composition(codes, table=None):
    """Residue counts of a peptide string."""
    table = amino_acids() if table is None else table
    out = {c: 0 for c in table}
    for ch in codes:
        if ch not in table:
            raise ParseError(f"unknown residue {ch!r}")
        out[ch] += 1
    return out


def peptide_totals(codes, table=None):
    table = amino_acids() if table is None else table
    counts = composition(codes, table)
    mass = sum(table[c][0] * k for c, k in counts.items())
    hydro = sum(table[c][1] * k for c, k in counts.items())
    return mass, hydro


# ----------------------------------------------------------------- isotopes

#: Peak bin width in daltons.
BIN_WIDTH = 0.1
#: Abundance units per unit of fractional isotope abundance.
ABUNDANCE_SCALE = 100.0
#: Gaussian observation noise (abundance units) and its half-width in sigmas.
NOISE_SIGMA = 1.0
NOISE_WIDTH = 4.0
#: Default upper bound on element counts.
MAX_ELEMENT_COUNT = 15


def parse_formula(text, table=None):
    """``"Ni3V2"`` -> ``{"Ni": 3, "V": 2}``; unknown elements raise ParseError."""
    import re
    table = isotopes() if table is None else table
    text = "".join(text.split())
    if not text:
        raise ParseError("empty formula")
    out = {}
    pos = 0
    for m in re.finditer(r"([A-Z][a-z]?)(\d*)", text):
        if m.start() != pos:
            break
        el, num = m.group(1), m.group(2)
        if el not in table:
            raise ParseError(f"unsupported element {el!r}")
        out[el] = out.get(el, 0) + (int(num) if num else 1)
        pos = m.end()
    if pos != len(text):
        raise ParseError(f"cannot parse formula at {text[pos:]!r}")
    return out


def element_label(el):
    return f"N[{el}]"


def peak_bins(elements, table=None):
    """``{bin index: [(element, mass number, abundance), ...]}`` for the given elements."""
    table = isotopes() if table is None else table
    bins = {}
    for el in elements:
        for a, mass, ab in table[el]:
            bins.setdefault(int(round(mass / BIN_WIDTH)), []).append((el, a, ab))
    return dict(sorted(bins.items()))


def simulate_peaks(counts, elements=None, table=None, noise=0.0, seed=0):
    """Observed abundance per peak bin for the given element counts."""
    table = isotopes() if table is None else table
    elements = list(counts) if elements is None else list(elements)
    rng = np.random.default_rng(seed)
    out = {}
    for b, members in peak_bins(elements, table).items():
        v = sum(counts.get(el, 0) * ab * ABUNDANCE_SCALE for el, _, ab in members)
        if noise > 0:
            v += rng.normal(0.0, noise)
        out[b] = v
    return out


def _gaussian_likelihood(label, centre, sigma=NOISE_SIGMA, width=NOISE_WIDTH):
    lo = math.floor(centre - width * sigma)
    hi = math.ceil(centre + width * sigma)
    x = np.arange(lo, hi + 1, dtype=float)
    w = np.exp(-0.5 * ((x - centre) / sigma) ** 2)
    return P.narrow_support(LabeledPmf((label,), [lo], w))


def isotope_spec(peaks, elements=None, p=1.0, max_count=MAX_ELEMENT_COUNT, regularize_k=None,
                 table=None, sigma=NOISE_SIGMA, config=None, scheduler="fifo"):
    """Element-count model explaining observed peak abundances.

    ``peaks`` maps peak bins (mass / 0.1 Da, rounded) to observed abundances.
    With ``regularize_k`` at most that many elements may have a nonzero count.
    """
    table = isotopes() if table is None else table
    elements = sorted(table) if elements is None else list(elements)
    for el in elements:
        if el not in table:
            raise ParseError(f"unsupported element {el!r}")
    deps = [TablePrior((element_label(el),), LabeledPmf.uniform(element_label(el), 0, max_count))
            for el in elements]
    for b, members in peak_bins(elements, table).items():
        inputs = []
        for el, a, ab in members:
            lab = f"C[{a}{el}]"
            deps.append(ConstantMultiplier((element_label(el),), (lab,),
                                           [ab * ABUNDANCE_SCALE], False, True))
            inputs.append((lab,))
        peak = f"peak[{b / 10:.1f}]"
        deps.append(Additive(inputs, (peak,)))
        deps.append(Likelihood((peak,), _gaussian_likelihood(peak, peaks.get(b, 0.0), sigma)))
    if regularize_k is not None:
        deps = regularize(deps, [element_label(el) for el in elements], int(regularize_k))
    return ModelSpec(deps, p=p, scheduler=scheduler, config=config or ConvergenceConfig())


def random_composition(rng, table=None, max_elements=5, max_count=10):
    table = isotopes() if table is None else table
    names = sorted(table)
    k = int(rng.integers(1, max_elements + 1))
    chosen = rng.choice(len(names), size=k, replace=False)
    return {names[i]: int(rng.integers(1, max_count + 1)) for i in sorted(chosen)}


# ------------------------------------------------------------ 2D comparison


def pair_sum_spec(priors, likelihood, p=1.0, config=None, scheduler="fifo"):
    """``(A, V) = (B, W) + (C, X) + (D, Y) + (E, Z)`` with joint priors per pair.

    ``priors`` holds four 2D PMFs (any labels); ``likelihood`` is a 2D PMF
    over the sum pair.
    """
    pairs = [("B", "W"), ("C", "X"), ("D", "Y"), ("E", "Z")]
    if len(priors) != 4:
        raise ArityError("need four addend priors")
    deps = []
    for pair, pm in zip(pairs, priors):
        deps.append(TablePrior(pair, pm.relabel(pair)))
    deps.append(Additive(pairs, ("A", "V")))
    deps.append(Likelihood(("A", "V"), likelihood.relabel(("A", "V"))))
    return ModelSpec(deps, p=p, scheduler=scheduler, config=config or ConvergenceConfig())

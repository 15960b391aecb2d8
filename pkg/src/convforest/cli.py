"""Command-line front end: ``convforest <command> [options]``.

Every command writes its results under ``--out`` (default ``.``): one TSV per
posterior (``support<TAB>probability``), ``report.json`` and, with ``--dot``,
the inference graph.  Exit codes: 0 success, 2 contradiction, 3 no
convergence, 4 input error.
"""

import argparse
import json
import math
import os
import re
import sys
import time

import numpy as np

from . import builders, demos
from .convolution import check_p
from .errors import (ContradictionError, ConvForestError, DegenerateMessageError,
                     NotReadyError)
from .scheduling import SCHEDULERS, ConvergenceConfig

EXIT_OK = 0
EXIT_CONTRADICTION = 2
EXIT_NOT_CONVERGED = 3
EXIT_INPUT = 4


class InputError(Exception):
    pass


def parse_p(text):
    t = str(text).strip().lower()
    if t in ("inf", "infinity", "∞"):
        return math.inf
    try:
        return check_p(t)
    except ConvForestError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _float_list(text):
    try:
        return [float(v) for v in re.split(r"[,\s]+", text.strip()) if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers, got {text!r}") from None


def _int_list(text):
    try:
        return [int(v) for v in re.split(r"[,\s]+", text.strip()) if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}") from None


# ------------------------------------------------------------------ output

def safe_name(label):
    """File-system friendly name for a variable label."""
    return re.sub(r"[^A-Za-z0-9_.+-]+", "_", str(label)).strip("_") or "var"


def format_tsv(pmf):
    """``support<TAB>probability`` lines for a one-variable PMF (normalized)."""
    t = pmf.table / pmf.table.sum()
    return "".join(f"{int(s)}\t{v:.17g}\n" for s, v in zip(pmf.support(), t))


class Output:
    def __init__(self, directory):
        self.dir = directory or "."
        os.makedirs(self.dir, exist_ok=True)
        self.files = []

    def path(self, name):
        return os.path.join(self.dir, name)

    def write(self, name, text):
        with open(self.path(name), "w") as fh:
            fh.write(text)
        self.files.append(name)

    def posterior(self, label, pmf, prefix="posterior_"):
        self.write(f"{prefix}{safe_name(label)}.tsv", format_tsv(pmf))

    def report(self, data):
        self.write("report.json", json.dumps(data, indent=1, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _p_json(p):
    return "inf" if math.isinf(p) else p


# ------------------------------------------------------------ spec commands

def _config(args, base=None):
    base = base or ConvergenceConfig()
    return ConvergenceConfig(
        epsilon=base.epsilon if args.epsilon is None else args.epsilon,
        max_messages=base.max_messages if args.max_messages is None else args.max_messages,
        dampening=base.dampening if args.dampening is None else args.dampening,
        seed=base.seed if args.seed is None else args.seed)


def _apply_flags(spec, args, default_p=None):
    if args.p is not None:
        spec.p = args.p
    elif default_p is not None:
        spec.p = default_p
    if args.scheduler is not None:
        spec.scheduler = args.scheduler
    if args.no_trim:
        spec.trim = False
    spec.config = _config(args, spec.config)
    return spec


def _run_spec(spec, args, out, extra=None, labels=None):
    """Solve ``spec`` and write posteriors, report and DOT; returns the exit code."""
    if args.export_model:
        builders.dump_model(spec, args.export_model)
    g, report = builders.solve(spec)
    if args.dot:
        with open(args.dot, "w") as fh:
            fh.write(g.to_dot())
    labels = labels if labels is not None else g.variables()
    skipped = []
    for lab in labels:
        try:
            out.posterior(lab, g.posterior(lab))
        except (NotReadyError, DegenerateMessageError):
            skipped.append(lab)
    if skipped:
        print(f"no posterior yet for {len(skipped)} variables", file=sys.stderr)
    data = {"messages_passed": report.messages_passed, "converged": report.converged,
            "wall_time": report.wall_time, "scheduler": report.scheduler,
            "p": _p_json(spec.p), "missing_posteriors": skipped}
    data.update(extra or {})
    out.report(data)
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def cmd_solve(args, out):
    try:
        spec = builders.load_model(args.model)
    except OSError as exc:
        raise InputError(str(exc)) from None
    _apply_flags(spec, args)
    return _run_spec(spec, args, out)


def cmd_peptide(args, out):
    use_mass = not args.hydro_only
    use_hydro = not args.mass_only
    if args.mass_only and args.hydro_only:
        raise InputError("--mass-only and --hydro-only exclude each other")
    if use_hydro and args.hydrophobicity is None:
        raise InputError("hydrophobicity goal missing (or pass --mass-only)")
    spec = demos.peptide_spec(args.mass, args.hydrophobicity, use_mass=use_mass,
                              use_hydro=use_hydro, max_count=args.max_count)
    _apply_flags(spec, args, default_p=math.inf)
    labels = [demos.count_label(c) for c in demos.amino_acids()]
    return _run_spec(spec, args, out, {"mass": args.mass, "hydrophobicity": args.hydrophobicity},
                     labels)


def cmd_isotopes(args, out):
    table = demos.isotopes()
    counts = demos.parse_formula(args.formula, table)
    elements = sorted(table) if args.elements is None else \
        sorted(demos.parse_formula(args.elements.replace(",", " "), table))
    missing = [el for el in counts if el not in elements]
    if missing:
        raise InputError(f"formula uses elements outside --elements: {missing}")
    seed = 0 if args.seed is None else args.seed
    peaks = demos.simulate_peaks(counts, elements, table, noise=args.noise, seed=seed)
    spec = demos.isotope_spec(peaks, elements, max_count=args.max_count,
                              regularize_k=args.regularize, table=table, sigma=args.sigma)
    _apply_flags(spec, args, default_p=1.0)
    labels = [demos.element_label(el) for el in elements]
    return _run_spec(spec, args, out, {"composition": counts,
                                       "peaks": {f"{b / 10:.1f}": v for b, v in peaks.items()}},
                     labels)


# ------------------------------------------------------------ tree commands

def cmd_subset_sum(args, out):
    start = time.perf_counter()
    ok, sums = demos.subset_sum(args.values, args.target)
    wall = time.perf_counter() - start
    out.write("attainable.tsv", "".join(f"{s}\n" for s in sums))
    out.report({"attainable": ok, "target": args.target, "sums": sums, "wall_time": wall,
                "messages_passed": 0, "converged": True})
    print("yes" if ok else "no")
    return EXIT_OK


def cmd_knapsack(args, out):
    if len(args.weights) != len(args.values):
        raise InputError("need one weight per value")
    start = time.perf_counter()
    res = demos.knapsack(args.values, args.weights, args.target)
    wall = time.perf_counter() - start
    data = {"feasible": res.feasible, "target": args.target, "wall_time": wall,
            "messages_passed": 0, "converged": True}
    if res.feasible:
        data.update(score=res.score, witness=res.witness)
        rows = []
        for i, (off, on) in enumerate(res.posteriors):
            s = off + on
            rows.append(f"{i}\t{off / s:.17g}\t{on / s:.17g}\n")
        out.write("items.tsv", "".join(rows))
        print(f"score {res.score:g} witness {''.join(map(str, res.witness))}")
    else:
        print("infeasible")
    out.report(data)
    return EXIT_OK if res.feasible else EXIT_CONTRADICTION


def cmd_restaurant(args, out):
    items = demos.menu(args.menu) if args.menu else None
    p = 1.0 if args.p is None else args.p
    seed = 0 if args.seed is None else args.seed
    run = demos.restaurant(args.n, seed=seed, p=p, trim=not args.no_trim, items=items)
    for i, pm in enumerate(run.posteriors):
        out.posterior(f"X{i}", pm)
    out.report({"total": run.total, "total_dollars": run.total / 4.0,
                "order": run.order, "wall_time": run.wall_time, "scalar_ops": run.scalar_ops,
                "convolutions": run.convolutions, "nodes_touched": run.nodes_touched,
                "trim": not args.no_trim, "p": _p_json(p), "messages_passed": args.n,
                "converged": True})
    return EXIT_OK


def cmd_hmm(args, out):
    if (args.sequence is None) == (args.synthetic is None):
        raise InputError("give exactly one of --sequence and --synthetic")
    hmm = demos.gc_hmm(args.stay, args.rich, args.poor)
    seed = 0 if args.seed is None else args.seed
    if args.sequence is not None:
        try:
            obs = demos.read_fasta(args.sequence)
        except OSError as exc:
            raise InputError(str(exc)) from None
    else:
        _, obs = demos.sample_hmm(hmm, args.synthetic, seed)
    p = 1.0 if args.p is None else args.p
    g = demos.build_hmm_graph(hmm, obs, p)
    sched = args.scheduler or "chain"
    report = SCHEDULERS[sched](g, _config(args))
    if args.dot:
        with open(args.dot, "w") as fh:
            fh.write(g.to_dot())
    prob, track = demos.hmm_posteriors(g, len(obs))
    lines = ["position\tgc_rich\n"] if not math.isinf(p) else ["position\tgc_rich\targmax\n"]
    for i, v in enumerate(prob):
        lines.append(f"{i}\t{v:.17g}\n" if not math.isinf(p) else f"{i}\t{v:.17g}\t{track[i]}\n")
    out.write("posterior_gc_rich.tsv", "".join(lines))
    edges = sum(len(ps.edges) for ps in g.passers) // 2
    out.report({"messages_passed": report.messages_passed, "converged": report.converged,
                "wall_time": report.wall_time, "scheduler": report.scheduler,
                "length": int(len(obs)), "edges": edges, "p": _p_json(p)})
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


# ------------------------------------------------------------------ parser

def _common():
    c = argparse.ArgumentParser(add_help=False)
    c.add_argument("--p", type=parse_p, default=None,
                   help="1 (sum-product), a finite real >= 1, or inf (max-product)")
    c.add_argument("--scheduler", choices=sorted(SCHEDULERS), default=None)
    c.add_argument("--epsilon", type=float, default=None)
    c.add_argument("--max-messages", type=int, default=None)
    c.add_argument("--dampening", type=float, default=None)
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("--dot", metavar="FILE", default=None, help="write the graph in DOT format")
    c.add_argument("--no-trim", action="store_true", help="disable support trimming")
    c.add_argument("--out", metavar="DIR", default=".", help="output directory")
    return c


def build_parser():
    common = _common()
    ap = argparse.ArgumentParser(prog="convforest", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="solve a JSON model file")
    s.add_argument("model")
    s.add_argument("--export-model", default=None, help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("subset-sum", parents=[common], help="attainable subset sums")
    s.add_argument("values", type=_int_list)
    s.add_argument("--target", type=int, required=True)
    s.set_defaults(func=cmd_subset_sum)

    s = sub.add_parser("knapsack", parents=[common], help="best log-weight subset at a target")
    s.add_argument("values", type=_int_list)
    s.add_argument("--weights", type=_float_list, required=True,
                   help="log prior weight of including each item")
    s.add_argument("--target", type=int, required=True)
    s.set_defaults(func=cmd_knapsack)

    s = sub.add_parser("restaurant", parents=[common], help="bill-splitting benchmark")
    s.add_argument("n", type=int)
    s.add_argument("--menu", default=None, help="CSV with item,price columns")
    s.set_defaults(func=cmd_restaurant)

    s = sub.add_parser("hmm", parents=[common], help="GC-rich two-state HMM")
    s.add_argument("--sequence", default=None, help="FASTA or plain DNA file")
    s.add_argument("--synthetic", type=int, default=None, metavar="L",
                   help="sample a length-L sequence from the model")
    s.add_argument("--stay", type=float, default=demos.HMM_STAY)
    s.add_argument("--rich", type=_float_list, default=list(demos.HMM_EMISSION[0]),
                   help="emissions of the GC-rich state over A,C,G,T")
    s.add_argument("--poor", type=_float_list, default=list(demos.HMM_EMISSION[1]),
                   help="emissions of the GC-poor state over A,C,G,T")
    s.set_defaults(func=cmd_hmm)

    s = sub.add_parser("peptide", parents=[common], help="residue counts from mass and hydrophobicity")
    s.add_argument("mass", type=float)
    s.add_argument("hydrophobicity", type=float, nargs="?", default=None)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--mass-only", action="store_true")
    g.add_argument("--hydro-only", action="store_true")
    g.add_argument("--both", action="store_true", help="joint loopy model (default)")
    s.add_argument("--max-count", type=int, default=None)
    s.add_argument("--export-model", default=None, metavar="FILE",
                   help="also write the model as a JSON file for 'solve'")
    s.set_defaults(func=cmd_peptide)

    s = sub.add_parser("isotopes", parents=[common], help="element counts from isotope peaks")
    s.add_argument("formula", help="generating composition, e.g. Ni2V7Zn2Fe4Ti3")
    s.add_argument("--elements", default=None,
                   help="candidate elements, e.g. NiVZn or Ni,V,Zn (default: the whole table)")
    s.add_argument("--regularize", type=int, default=None, metavar="K",
                   help="allow at most K elements to be present")
    s.add_argument("--noise", type=float, default=0.0, help="sd of simulated peak noise")
    s.add_argument("--sigma", type=float, default=demos.NOISE_SIGMA,
                   help="sd of the Gaussian peak likelihood")
    s.add_argument("--max-count", type=int, default=demos.MAX_ELEMENT_COUNT)
    s.add_argument("--export-model", default=None, metavar="FILE",
                   help="also write the model as a JSON file for 'solve'")
    s.set_defaults(func=cmd_isotopes)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    out = Output(args.out)
    try:
        return args.func(args, out)
    except ContradictionError as exc:
        print(f"contradiction: {exc}", file=sys.stderr)
        return EXIT_CONTRADICTION
    except (ConvForestError, InputError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

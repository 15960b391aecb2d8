import json
import math
import subprocess
import sys

import numpy as np
import pytest

from convforest import cli
from convforest.builders import (Additive, Likelihood, ModelSpec, TablePrior, dump_model,
                                 load_model, spec_to_dict)
from convforest.pmf import LabeledPmf


def vec(label, origin, values):
    return LabeledPmf((label,), [origin], np.asarray(values, float))


def read_tsv(path):
    rows = [l.split("\t") for l in path.read_text().splitlines()]
    return {int(r[0]): float(r[1]) for r in rows}


def two_coins(tmp_path, likelihood=None):
    deps = [TablePrior(("a",), vec("a", 0, [0.5, 0.5])),
            TablePrior(("b",), vec("b", 0, [0.5, 0.5])),
            Additive([("a",), ("b",)], ("s",))]
    if likelihood is not None:
        deps.append(Likelihood(("s",), likelihood))
    path = tmp_path / "model.json"
    dump_model(ModelSpec(deps), path)
    return path


def test_solve_two_coins(tmp_path):
    model = two_coins(tmp_path)
    out = tmp_path / "out"
    assert cli.main(["solve", str(model), "--out", str(out)]) == 0
    assert read_tsv(out / "posterior_a.tsv") == pytest.approx({0: 0.5, 1: 0.5})
    s = read_tsv(out / "posterior_s.tsv")
    assert s == pytest.approx({0: 0.25, 1: 0.5, 2: 0.25})
    rep = json.loads((out / "report.json").read_text())
    assert rep["converged"] and rep["messages_passed"] > 0


def test_solve_max_product_flag(tmp_path):
    model = two_coins(tmp_path, vec("s", 0, [0.1, 0.2, 0.7]))
    out = tmp_path / "out"
    assert cli.main(["solve", str(model), "--p", "inf", "--out", str(out)]) == 0
    a = read_tsv(out / "posterior_a.tsv")
    assert a[1] > a[0]
    assert json.loads((out / "report.json").read_text())["p"] == "inf"


def test_contradiction_exit_code(tmp_path):
    model = two_coins(tmp_path, vec("s", 5, [1.0]))
    assert cli.main(["solve", str(model), "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["knapsack", "2,4", "--weights", "1,1", "--target", "3",
                     "--out", str(tmp_path / "k")]) == 2


def test_non_convergence_exit_code(tmp_path):
    t = np.array([[0.6, 0.1], [0.1, 0.2]])
    deps = [TablePrior(("x", "y"), LabeledPmf(("x", "y"), [0, 0], t)),
            Likelihood(("x", "y"), LabeledPmf(("x", "y"), [0, 0], t.T))]
    path = tmp_path / "loop.json"
    dump_model(ModelSpec(deps), path)
    code = cli.main(["solve", str(path), "--max-messages", "1", "--out", str(tmp_path / "o")])
    assert code == 3
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["converged"] is False


@pytest.mark.parametrize("argv", [
    ["solve", "/nonexistent/model.json"],
    ["subset-sum", "1,x", "--target", "3"],
    ["knapsack", "1,2", "--weights", "1", "--target", "3"],
    ["hmm"],
    ["peptide", "-5", "0"],
    ["isotopes", "Qq2"],
    ["solve", "m.json", "--p", "0.5"],
    ["nonsense"],
])
def test_input_errors(tmp_path, argv):
    assert cli.main(argv + ["--out", str(tmp_path)] if argv[0] != "nonsense" else argv) == 4


def test_bad_model_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"format": "something-else"}')
    assert cli.main(["solve", str(bad), "--out", str(tmp_path)]) == 4


def test_parse_p():
    assert math.isinf(cli.parse_p("inf")) and cli.parse_p("2") == 2.0


def test_subset_sum_command(tmp_path, capsys):
    assert cli.main(["subset-sum", "1,2,4", "--target", "5", "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out.strip() == "yes"
    assert (tmp_path / "attainable.tsv").read_text().split() == [str(i) for i in range(8)]


def test_knapsack_command(tmp_path, capsys):
    code = cli.main(["knapsack", "1,2,3", "--weights", "1,5,2", "--target", "3",
                     "--out", str(tmp_path)])
    assert code == 0
    assert capsys.readouterr().out.strip() == "score 6 witness 110"


def test_restaurant_deterministic(tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / str(k)
        assert cli.main(["restaurant", "6", "--seed", "3", "--out", str(d)]) == 0
        outs.append([(d / f"posterior_X{i}.tsv").read_text() for i in range(6)])
        for i in range(6):
            assert sum(read_tsv(d / f"posterior_X{i}.tsv").values()) == pytest.approx(1.0)
    assert outs[0] == outs[1]


def test_hmm_command(tmp_path):
    seq = tmp_path / "s.fa"
    seq.write_text(">x\nACGTGGCCAT\n")
    dot = tmp_path / "g.dot"
    assert cli.main(["hmm", "--sequence", str(seq), "--dot", str(dot),
                     "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "posterior_gc_rich.tsv").read_text().splitlines()
    assert lines[0] == "position\tgc_rich" and len(lines) == 11
    assert "shape=box" in dot.read_text()
    assert cli.main(["hmm", "--synthetic", "50", "--p", "inf", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "posterior_gc_rich.tsv").read_text().startswith(
        "position\tgc_rich\targmax")


def test_dot_shapes(tmp_path):
    model = two_coins(tmp_path)
    dot = tmp_path / "g.dot"
    assert cli.main(["solve", str(model), "--dot", str(dot), "--out", str(tmp_path)]) == 0
    text = dot.read_text()
    for shape in ("box", "square", "triangle"):
        assert f"shape={shape}" in text


def test_export_and_resolve(tmp_path):
    exported = tmp_path / "pep.json"
    d1, d2 = tmp_path / "a", tmp_path / "b"
    code = cli.main(["peptide", "228.2", "--mass-only", "--max-count", "4",
                     "--export-model", str(exported), "--out", str(d1)])
    assert code in (0, 3)
    spec = load_model(exported)
    assert spec_to_dict(spec)["format"] == "convforest-model/1"
    assert cli.main(["solve", str(exported), "--out", str(d2)]) == code
    for f in sorted(p.name for p in d1.glob("posterior_*.tsv")):
        assert (d1 / f).read_text() == (d2 / f).read_text()


def test_isotopes_command(tmp_path):
    code = cli.main(["isotopes", "Ni2V1", "--elements", "Ni,V", "--out", str(tmp_path)])
    assert code == 0
    ni = read_tsv(tmp_path / "posterior_N_Ni.tsv")
    assert max(ni, key=ni.get) == 2


def test_console_entry_point(tmp_path):
    model = two_coins(tmp_path)
    r = subprocess.run([sys.executable, "-m", "convforest.cli", "solve", str(model),
                        "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr

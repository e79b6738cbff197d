"""Command-line interface: subcommands, exit codes, determinism."""

import json


from flowtrees.cli import main
from flowtrees.trees import parse_tree, print_tree


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out


SIX_EDGE = "I[(0,0)](Xi)*I[(0,0)](Xi)*I[(0,0)](I[(0,0)](Xi)*I[(0,0)](Xi)*I[(0,0)](Xi))"


def test_apply_dmu_golden(capsys):
    code, out = run_cli(capsys, "apply", "--op", "dmu", "--tree", SIX_EDGE)
    assert code == 0
    terms = json.loads(out)
    assert sorted(int(t["coeff"]) for t in terms) == [1, 2, 3]


def test_apply_graft(capsys):
    code, out = run_cli(
        capsys, "apply", "--op", "graft", "--tree", "I[(0,0)](Xi)", "--sigma", "Xi*Y^0",
        "--a", "(0,1)",
    )
    assert code == 0
    terms = json.loads(out)
    assert len(terms) == 2  # both nodes of the target carry the default marker


def test_apply_requires_sigma(capsys):
    code = main(["apply", "--op", "graft", "--tree", "Xi"])
    assert code == 2


def test_enumerate_json(capsys):
    code, out = run_cli(capsys, "enumerate", "--rule", "gkpz", "--set", "t0neg", "--format", "json")
    assert code == 0
    entries = json.loads(out)
    assert entries
    from fractions import Fraction

    for e in entries:
        assert Fraction(e["degree"]) < 0


def test_enumerate_round_trips(capsys, gkpz):
    code, out = run_cli(capsys, "enumerate", "--rule", "gkpz", "--set", "t0star", "--format", "json")
    assert code == 0
    for e in json.loads(out):
        t = parse_tree(e["tree"], gkpz)
        assert print_tree(t) == e["tree"]


def test_verify_pass_exit_zero(capsys, tmp_path):
    report = tmp_path / "report.json"
    code, out = run_cli(
        capsys, "verify", "--identity", "combidmu", "--max-edges", "3", "--samples", "5",
        "--report", str(report),
    )
    assert code == 0
    assert "combidmu: PASS" in out
    blob = json.loads(report.read_text())
    assert blob[0]["identity"] == "combidmu" and blob[0]["status"] == "PASS"


def test_verify_deterministic_stdout(capsys):
    args = ("verify", "--identity", "flow", "--max-edges", "3", "--samples", "10", "--seed", "7")
    _code, out1 = run_cli(capsys, *args)
    _code, out2 = run_cli(capsys, *args)
    assert out1 == out2


def test_usage_errors(capsys):
    assert main(["bogus"]) == 2
    assert main(["apply", "--op", "dmu"]) == 2  # missing --tree
    assert main(["apply", "--op", "dmu", "--tree", "Xi*Xi"]) == 2  # parse error


def test_counterterms_and_bphz(capsys):
    code, out = run_cli(capsys, "counterterms", "--rule", "gkpz")
    assert code == 0
    entries = json.loads(out)
    assert {e["tree"] for e in entries} >= {"Xi", "I[(0,1)](Xi)"}

    code, out = run_cli(capsys, "bphz", "--rule", "gkpz")
    assert code == 0
    constraints = json.loads(out)
    assert any(c["tree"] == "Xi" for c in constraints)


def test_character_file(capsys, tmp_path):
    path = tmp_path / "char.json"
    path.write_text(json.dumps({"ell(Xi)": "1/3"}))
    code, out = run_cli(capsys, "counterterms", "--rule", "gkpz", "--character", str(path))
    assert code == 0
    entries = json.loads(out)
    xi_entry = [e for e in entries if e["tree"] == "Xi"][0]
    assert xi_entry["ell"] == "1/3"


def test_numeric_kernels(capsys):
    code, out = run_cli(capsys, "numeric-check", "--identity", "kernels", "--grid", "16x8", "--mu", "1/2")
    assert code == 0
    rep = json.loads(out)
    assert rep["pass"] is True


def test_verify_parallel_jobs(capsys):
    code, out = run_cli(
        capsys, "verify", "--identity", "combidmu", "--identity", "flow",
        "--max-edges", "3", "--samples", "5", "--jobs", "2",
    )
    assert code == 0
    assert "combidmu: PASS" in out and "flow: PASS" in out

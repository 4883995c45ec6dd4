import json

import pytest

from ndlam.cli import main, parse_position
from ndlam.syntax import BOOL_LIST_SIG, alpha_eq, parse

SIG_TEXT = "type Bool = True/0 | False/0\ntype List = Nil/0 | Cons/2\n"


@pytest.fixture
def sigfile(tmp_path):
    p = tmp_path / "sig.txt"
    p.write_text(SIG_TEXT)
    return str(p)


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def term_file(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_parse_roundtrip(tmp_path, sigfile, capsys):
    f = term_file(tmp_path, "a.term", "letrec x2=\\x.x, x1=(x2 x1) in x1")
    code, out, _ = run(capsys, "--sig", sigfile, "parse", f)
    assert code == 0
    assert alpha_eq(parse(out.strip(), BOOL_LIST_SIG),
                    parse("letrec x2=\\x.x, x1=(x2 x1) in x1", BOOL_LIST_SIG))


def test_parse_arity_error(tmp_path, sigfile, capsys):
    f = term_file(tmp_path, "bad.term", "Cons a b c")
    code, _, err = run(capsys, "--sig", sigfile, "parse", f)
    assert code == 2
    assert "Cons" in err


def test_parse_missing_signature(tmp_path, capsys):
    f = term_file(tmp_path, "a.term", "\\x.x")
    with pytest.raises(SystemExit):
        main(["parse", f])


def test_reduce_trace_and_exit(tmp_path, sigfile, capsys):
    f = term_file(tmp_path, "cyc.term", "letrec q=q in q")
    code, out, _ = run(capsys, "--sig", sigfile, "reduce", f)
    assert code == 0
    assert out.strip() == "RESULT Stuck:Cycle nd=0"


def test_reduce_example_trace_prefix(tmp_path, sigfile, capsys):
    # closed variant of the worked overlap example
    f = term_file(tmp_path, "e.term", "((letrec x=True in \\y.y) False)")
    code, out, _ = run(capsys, "--sig", sigfile, "reduce", f)
    assert code == 0
    first = out.splitlines()[0]
    assert first.startswith("lapp st @ε => ")
    assert "RESULT Converged" in out


def test_reduce_rejects_open_terms(tmp_path, sigfile, capsys):
    f = term_file(tmp_path, "open.term", "(x y)")
    code, _, err = run(capsys, "--sig", sigfile, "reduce", f)
    assert code == 2 and "open term" in err


def test_reduce_nd_all(tmp_path, sigfile, capsys):
    f = term_file(tmp_path, "ch.term", "choice True False")
    code, out, _ = run(capsys, "--sig", sigfile, "reduce", f, "--nd", "all")
    assert code == 0
    assert "converging nd-counts: [1]" in out


def test_reduce_records_replay(tmp_path, sigfile, capsys):
    f = term_file(tmp_path, "e.term", "((letrec x=True in \\y.y) False)")
    code, out, _ = run(capsys, "--sig", sigfile, "--records", "reduce", f)
    assert code == 0
    lines = [json.loads(l) for l in out.splitlines()]
    steps, result = lines[:-1], lines[-1]
    assert result["result"] == "converged"
    # replay: each record's before reduces to its after by the standard step
    from ndlam.reduction import standard_redex
    for rec in steps:
        before = parse(rec["before"], BOOL_LIST_SIG)
        r = standard_redex(before, BOOL_LIST_SIG)
        arms = [a for a in r.arms() if a is not None and a.label == rec["label"]]
        assert any(alpha_eq(a.after, parse(rec["after"], BOOL_LIST_SIG))
                   for a in arms)


def test_apply_ldel_worked_example(tmp_path, sigfile, capsys):
    f = term_file(tmp_path, "e.term", "((letrec x=True in \\y.y) False)")
    code, out, _ = run(capsys, "--sig", sigfile, "apply", f,
                       "--rule", "ldel", "--pos", "appF.letB(x)")
    assert code == 0
    assert alpha_eq(parse(out.splitlines()[0], BOOL_LIST_SIG),
                    parse("((\\y.y) False)", BOOL_LIST_SIG))
    assert "classification: Internal" in out


def test_apply_side_condition_reported(tmp_path, sigfile, capsys):
    f = term_file(tmp_path, "e.term", "letrec x=True in (x x)")
    code, _, err = run(capsys, "--sig", sigfile, "apply", f,
                       "--rule", "ucp", "--pos", "letB(x)")
    assert code == 2
    assert "occurrences" in err


def test_apply_cp_reports_subtype(tmp_path, sigfile, capsys):
    f = term_file(tmp_path, "e.term", "letrec f=\\u.u in (f True)")
    code, out, _ = run(capsys, "--sig", sigfile, "apply", f,
                       "--rule", "cp", "--pos", "letIn.appF")
    assert code == 0
    assert "rule: cpt" in out


def test_enumerate(sigfile, capsys):
    code, out, err = run(capsys, "--sig", sigfile, "enumerate", "--size", "2",
                         "--features", "constructors")
    assert code == 0
    names = out.split()
    assert "True" in names and "Nil" in names and "# 13 terms" in err


def test_check_diagrams_ok_and_mutated(tmp_path, sigfile, capsys):
    code, out, _ = run(capsys, "--sig", sigfile, "check-diagrams",
                       "--red", "ldel", "--mode", "fork",
                       "--diagrams", str(__import__("ndlam.diagrams", fromlist=["shipped_diagram_path"]).shipped_diagram_path("ldel.fork")),
                       "--size", "6", "--depth", "6",
                       "--features", "letrec,choice,constructors")
    assert code == 0
    assert "counterexamples: 0" in out
    # a mutated file (square deleted) must fail
    bad = tmp_path / "bad.fork"
    bad.write_text("st,lll+ . ldel ~> ldel\nst,lll+ . ldel ~> ldel . st,lll*\n")
    code2, out2, _ = run(capsys, "--sig", sigfile, "check-diagrams",
                         "--red", "ldel", "--mode", "fork",
                         "--diagrams", str(bad), "--size", "6", "--depth", "6",
                         "--features", "letrec,choice,constructors")
    assert code2 == 1
    assert "COUNTEREXAMPLE" in out2


def test_check_diagrams_bad_dsl(tmp_path, sigfile, capsys):
    bad = tmp_path / "bad.fork"
    bad.write_text("st,a . ldel >>> nonsense\n")
    code, _, err = run(capsys, "--sig", sigfile, "check-diagrams",
                       "--red", "ldel", "--diagrams", str(bad))
    assert code == 2 and "diagram parse error" in err


def test_check_diagrams_propose(sigfile, capsys):
    code, out, _ = run(capsys, "--sig", sigfile, "check-diagrams",
                       "--red", "ldel", "--mode", "propose", "--kind", "fork",
                       "--size", "6", "--depth", "6",
                       "--features", "letrec,choice,constructors")
    assert code == 0
    assert "st,a . i,ldel ~> i,ldel . st,a" in out


def test_check_equiv_cli(tmp_path, sigfile, capsys):
    s = term_file(tmp_path, "s.term", "choice True False")
    t = term_file(tmp_path, "t.term", "True")
    code, out, _ = run(capsys, "--sig", sigfile, "check-equiv", s, t,
                       "--ctx-size", "3", "--max-steps", "50")
    assert code == 1
    assert "counterexample" in out
    code2, out2, _ = run(capsys, "--sig", sigfile, "check-equiv", t, t,
                         "--ctx-size", "3", "--max-steps", "50")
    assert code2 == 0


def test_check_equiv_reduction_contexts(tmp_path, sigfile, capsys):
    s = term_file(tmp_path, "s.term", "True")
    t = term_file(tmp_path, "t.term", "False")
    code, out, _ = run(capsys, "--sig", sigfile, "check-equiv", s, t,
                       "--ctx-size", "7", "--reduction-contexts")
    assert code == 1


def test_config_env(tmp_path, sigfile, capsys, monkeypatch):
    cfgp = tmp_path / "cfg.json"
    cfgp.write_text(json.dumps({"signature": sigfile, "step_bound": 50}))
    monkeypatch.setenv("NDLAM_CONFIG", str(cfgp))
    f = term_file(tmp_path, "a.term", "True")
    code, out, _ = run(capsys, "parse", f)
    assert code == 0 and out.strip() == "True"


def test_parse_position_roundtrip():
    from ndlam.syntax import position_str
    for p in [(), (("appF",),), (("letB", "x1"), ("appF",)),
              (("caseA", "Cons"), ("cArg", 1))]:
        assert parse_position(position_str(p)) == p


def test_workers_flag_matches_sequential(tmp_path, sigfile, capsys):
    args = ["--sig", sigfile, "check-diagrams", "--red", "ldel",
            "--mode", "fork",
            "--diagrams", str(__import__("ndlam.diagrams", fromlist=["shipped_diagram_path"]).shipped_diagram_path("ldel.fork")),
            "--size", "5", "--depth", "6",
            "--features", "letrec,choice,constructors"]
    code1, out1, _ = run(capsys, *args)
    code2, out2, _ = run(capsys, args[0], args[1], "--workers", "2", *args[2:])
    assert code1 == code2 == 0
    pick = lambda s: [l for l in s.splitlines() if "instances=" in l]
    assert pick(out1) == pick(out2)


def test_check_diagrams_records(tmp_path, sigfile, capsys):
    code, out, _ = run(capsys, "--sig", sigfile, "--records", "check-diagrams",
                       "--red", "ldel", "--mode", "fork",
                       "--diagrams", str(__import__("ndlam.diagrams", fromlist=["shipped_diagram_path"]).shipped_diagram_path("ldel.fork")),
                       "--size", "6", "--depth", "6",
                       "--features", "letrec,choice,constructors")
    assert code == 0
    recs = [json.loads(l) for l in out.splitlines()]
    assert recs[-1]["red"] == "ldel"
    per_inst = [r for r in recs if "instance" in r]
    assert per_inst and all(r["status"] == "matched" and "diagram" in r
                            for r in per_inst)

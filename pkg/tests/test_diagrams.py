import pytest

from ndlam.diagrams import (
    DiagramSyntaxError,
    SeqAtom,
    check_commuting,
    close_fork,
    find_commutes,
    find_forks,
    load_diagram_file,
    normalize_sequence,
    parse_diagram,
    propose_diagrams,
    shipped_diagram_path,
    verify_complete_set,
)
from ndlam.syntax import BOOL_SIG, BOOL_LIST_SIG, parse
from ndlam.termgen import EnumParams
from ndlam.transforms import steps_of

SIG = BOOL_LIST_SIG


def t(s, sig=SIG):
    return parse(s, sig)


def rules(name):
    return load_diagram_file(shipped_diagram_path(name))


# ---------------------------------------------------------------------------
# DSL

def test_parse_diagram_metavar():
    r = parse_diagram("i,llet . st,a ~> st,a . i,llet", "commute")
    assert r.lhs[1].rule == ("var", "a")
    assert r.lhs[0].flag == "i" and r.lhs[0].rule == ("lab", "llet")


def test_parse_diagram_family_plus():
    r = parse_diagram("ldel ~> st,lll+ . ldel", "commute")
    assert r.lhs[0].flag == "plain"
    assert r.rhs[0].rule == ("fam", "lll") and r.rhs[0].mult == "+"
    assert r.rhs[1].rule == ("lab", "ldel")


def test_parse_diagram_duplicate_rhs():
    r = parse_diagram("i,cpd . st,cpn ~> st,cpn . i,cpd . i,cpd", "commute")
    assert len(r.rhs) == 3


def test_parse_diagram_constraint():
    r = parse_diagram("lcv . st,a ~> st,a | a in {case,cpn,ndr,ndl}", "commute")
    assert r.constraint_map()["a"] == {"case", "cpn", "ndr", "ndl"}


def test_parse_diagram_errors():
    with pytest.raises(DiagramSyntaxError):
        parse_diagram("i,llet . st,a", "commute")
    with pytest.raises(DiagramSyntaxError):
        parse_diagram("st,a . i,llet ~> st,a", "commute")  # transform not first
    with pytest.raises(DiagramSyntaxError):
        parse_diagram("i,llet+ . st,a ~> st,a", "commute")  # mult on transform


def test_shipped_files_parse():
    for name in ["llet.commute", "llet.fork", "ldel.commute", "ldel.fork",
                 "lcv.commute", "lcv.fork", "cp.commute", "ucp.commute"]:
        rs = rules(name)
        assert rs, name
        kind = "fork" if name.endswith(".fork") else "commute"
        assert all(r.kind == kind for r in rs)


# ---------------------------------------------------------------------------
# Forks and closures

def test_find_forks_worked_example():
    e = t("((letrec x=c in \\y.y) d)")
    forks = find_forks(e, "ldel", SIG)
    assert len(forks) == 1
    f = forks[0]
    assert f.std_branch.label == "lapp"
    assert f.red_branch.label == "ldel"


def test_find_forks_none_without_redex():
    assert find_forks(t("((\\y.y) d)"), "ldel", SIG) == []


def test_close_fork_worked_example():
    e = t("((letrec x=c in \\y.y) d)")
    fork = find_forks(e, "ldel", SIG)[0]
    m = close_fork(fork, rules("ldel.fork"), SIG, depth_bound=6)
    assert m.status == "matched"


def test_close_fork_empty_diagrams_counterexample():
    e = t("((letrec x=c in \\y.y) d)")
    fork = find_forks(e, "ldel", SIG)[0]
    m = close_fork(fork, [], SIG, depth_bound=6)
    assert m.status in ("counterexample", "bound-limited")


def test_disjoint_fork_closes_by_square():
    # the garbage binding is separate from the standard choice step
    e = t("letrec q=(\\u.u) in choice True False")
    forks = find_forks(e, "ldel", SIG)
    assert len(forks) == 2  # one per nd arm
    for f in forks:
        m = close_fork(f, rules("ldel.fork"), SIG, depth_bound=6)
        assert m.status == "matched"
        assert "st,a . ldel ~> ldel . st,a" in str(m.diagram)


def test_commuting_worked_example():
    # ldel first, then the commuting closure via st,lll+ . ldel
    e = t("((letrec x=c in \\y.y) d)")
    step = [s for s in steps_of("ldel", e, SIG) if s.flag == "i"][0]
    m = check_commuting(e, step, rules("ldel.commute"), SIG, depth_bound=6)
    assert m.status == "matched"
    assert "ldel ~> st,lll+ . ldel" in str(m.diagram)
    assert m.witness["rhs"] == ["lapp", "ldel"]


def test_commuting_ucp_cpn_ldel():
    e = t("letrec x=\\u.u in x")
    step = steps_of("ucp", e, SIG)[0]
    m = check_commuting(e, step, rules("ucp.commute"), SIG, depth_bound=6)
    assert m.status == "matched"
    assert "ucp ~> st,cpn . ldel" in str(m.diagram)


def test_commuting_llet_becomes_standard():
    # internal llet that the standard reduction performs one step later
    e = t("((letrec x=(letrec y=\\b.b in y) in x) d)")
    step = [s for s in steps_of("llet", e, SIG) if s.flag == "i"][0]
    m = check_commuting(e, step, rules("llet.commute"), SIG, depth_bound=6)
    assert m.status == "matched"


def test_fork_two_step_absorption():
    # u -st,a-> . -st,llet-> s closed by t -st,a-> s
    e = t("((letrec x=(letrec y=\\b.b in y) in x) d)")
    forks = [f for f in find_forks(e, "llet", SIG)]
    assert forks
    for f in forks:
        m = close_fork(f, rules("llet.fork"), SIG, depth_bound=6)
        assert m.status == "matched", f.describe()


def test_verify_small_ldel_fork():
    p = EnumParams(BOOL_SIG, 6)
    rep = verify_complete_set("ldel", rules("ldel.fork"), BOOL_SIG, 6, 6,
                              enum_params=p)
    assert rep.ok and not rep.bound_limited
    assert rep.instances_checked > 0


def test_verify_small_llet_fork_and_mutation():
    feats = frozenset({"letrec", "choice", "constructors"})
    full = rules("llet.fork")
    rep = verify_complete_set(
        "llet", full, BOOL_SIG, 9, 6,
        enum_params=EnumParams(BOOL_SIG, 9, features=feats))
    assert rep.ok and not rep.bound_limited
    assert rep.instances_checked > 0
    # deleting the square makes some fork uncoverable
    mutated = [d for d in full if "st,a . i,llet ~> i,llet . st,a" != str(d)]
    rep2 = verify_complete_set(
        "llet", mutated, BOOL_SIG, 9, 6,
        enum_params=EnumParams(BOOL_SIG, 9, features=feats))
    assert not rep2.ok


def test_value_preservation_discharge():
    # transform from a term whose standard side is immediately stuck
    e = t("letrec q=d in \\v.v")
    step = steps_of("ldel", e, SIG)[0]
    m = check_commuting(e, step, rules("ldel.commute"), SIG, depth_bound=6)
    assert m.status in ("matched", "value-preserved")


def test_propose_diagrams_ldel():
    p = EnumParams(BOOL_SIG, 6)
    cands = propose_diagrams("ldel", BOOL_SIG, 6, 6, kind="fork", enum_params=p)
    texts = [str(c) for c in cands]
    assert any("st,a . i,ldel ~> i,ldel . st,a" in s for s in texts), texts
    rep = verify_complete_set("ldel", cands, BOOL_SIG, 6, 6,
                              enum_params=EnumParams(BOOL_SIG, 6))
    assert rep.ok


def test_propose_empty_when_no_redex():
    p = EnumParams(BOOL_SIG, 3, features=frozenset({"choice", "constructors"}))
    cands = propose_diagrams("ldel", BOOL_SIG, 3, 4, kind="fork", enum_params=p)
    assert cands == []


def test_normalize_sequence():
    e = t("((letrec x=c in \\y.y) d)")
    red = [s for s in steps_of("ldel", e, SIG) if s.flag == "i"][0]
    # build the sequence: ldel then the standard steps of the reduct
    from ndlam.reduction import standard_reduce
    res, tail = standard_reduce(red.after, SIG, step_bound=5)
    seq = [red] + tail
    out, apps, done, viol = normalize_sequence(e, seq, rules("ldel.commute"),
                                               SIG, depth_bound=6)
    assert done and apps >= 1
    # all transform steps pushed past standard ones
    saw_tr = False
    for s in out:
        if s.flag != "st":
            saw_tr = True
        elif saw_tr:
            pytest.fail("standard step after a transform step")


def test_match_witnesses_replay():
    # soundness: witness steps chain and the two sides join
    from ndlam.syntax import alpha_eq
    e = t("((letrec x=c in \\y.y) d)")
    fork = find_forks(e, "ldel", SIG)[0]
    m = close_fork(fork, rules("ldel.fork"), SIG, depth_bound=6)
    assert m.status == "matched"
    lhs = m.witness["lhs_steps"]
    assert lhs[0].before is e
    for a, b in zip(lhs, lhs[1:]):
        assert alpha_eq(a.after, b.before)
    s_steps, t_steps = m.witness["s_steps"], m.witness["t_steps"]
    s_end = s_steps[-1].after if s_steps else lhs[-1].after
    t_end = t_steps[-1].after if t_steps else fork.red_branch.after
    assert alpha_eq(s_end, t_end)


def test_meta_rewriting_terminates_on_enumeration():
    from ndlam.reduction import standard_reduce
    p = EnumParams(BOOL_SIG, 6, features=frozenset({"letrec", "choice",
                                                    "constructors"}))
    from ndlam.termgen import enumerate_terms
    checked = 0
    dia = rules("ldel.commute")
    for e in enumerate_terms(p):
        for step in steps_of("ldel", e, SIG if False else BOOL_SIG):
            if step.flag != "i":
                continue
            res, tail = standard_reduce(step.after, BOOL_SIG, step_bound=4)
            seq = [step] + tail
            out, apps, done, viol = normalize_sequence(e, seq, dia, BOOL_SIG, 6)
            assert done, (e, [s.label for s in seq])
            checked += 1
            if checked >= 60:
                return
    assert checked > 0


def test_check_commuting_seq_with_forced_steps():
    from ndlam.diagrams import check_commuting_seq
    from ndlam.reduction import standard_reduce
    e = t("((letrec x=True in \\y.y) False)")
    red = [s for s in steps_of("ldel", e, SIG) if s.flag == "i"][0]
    res, tail = standard_reduce(red.after, SIG, step_bound=2)
    m = check_commuting_seq([red] + tail, rules("ldel.commute"), SIG, 6)
    assert m.status == "matched"
    import pytest as _pytest
    with _pytest.raises(ValueError):
        check_commuting_seq(tail, rules("ldel.commute"), SIG, 6)

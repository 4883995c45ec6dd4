from ndlam.contexts import (
    binding_letrec_of,
    descend,
    is_surface_context,
    is_weak_reduction_context,
    maximal_reduction_locus,
    reduction_positions,
)
from ndlam.syntax import BOOL_LIST_SIG, Lam, parse, pretty

SIG = BOOL_LIST_SIG


def t(s):
    return parse(s, SIG)


def test_weak_context_classification():
    e = t("(x a)")
    assert is_weak_reduction_context(e, (("appF",),))
    assert not is_weak_reduction_context(e, (("appA",),))
    c = t("case[Bool] x of {True -> a; False -> b}")
    assert is_weak_reduction_context(c, (("caseS",),))
    assert not is_weak_reduction_context(c, (("caseA", "True"),))


def test_surface_context_classification():
    e = t("\\x.(y z)")
    assert not is_surface_context(e, (("lamB",), ("appF",)))
    f = t("letrec x=(y z) in w")
    assert is_surface_context(f, (("letB", "x"), ("appF",)))
    c = t("case[Bool] b of {True -> y; False -> z}")
    assert is_surface_context(c, (("caseA", "True"),))
    ch = t("choice a b")
    assert is_surface_context(ch, (("chL",),))
    assert is_surface_context(ch, (("chR",),))
    # choice arguments are never weak
    assert not is_weak_reduction_context(ch, (("chL",),))


def test_maximal_locus_chain_example():
    e = t("letrec x2=\\x.x, x1=(x2 x1) in x1")
    loc = maximal_reduction_locus(e)
    assert loc.kind == "found"
    assert loc.position == (("letB", "x2"),)
    assert isinstance(loc.subterm, Lam)
    assert loc.chain == ("x1", "x2")


def test_maximal_locus_cycle():
    loc = maximal_reduction_locus(t("letrec x=x in x"))
    assert loc.kind == "cycle"
    assert loc.chain == ("x",)
    # cycles through weak contexts
    loc2 = maximal_reduction_locus(t("letrec a=(b c), b=(a d) in a"))
    assert loc2.kind == "cycle"


def test_maximal_locus_beta():
    loc = maximal_reduction_locus(t("((\\y.y) d)"))
    assert loc.kind == "found"
    assert loc.position == (("appF",),)
    assert isinstance(loc.subterm, Lam)


def test_maximal_locus_free_var():
    loc = maximal_reduction_locus(t("(x a)"))
    assert loc.kind == "none"


def test_reduction_positions_chain():
    e = t("letrec x2=\\x.x, x1=(x2 x1) in x1")
    pos = reduction_positions(e)
    assert () in pos
    assert (("letIn",),) in pos
    assert (("letB", "x1"),) in pos
    assert (("letB", "x1"), ("appF",)) in pos
    assert (("letB", "x2"),) in pos
    # argument positions are not reduction positions
    assert (("letB", "x1"), ("appA",)) not in pos


def test_reduction_positions_not_on_chain():
    e = t("letrec u=(f g), w=\\v.v in w")
    pos = reduction_positions(e)
    assert (("letB", "w"),) in pos
    assert (("letB", "u"),) not in pos


def test_descent_segments():
    e = t("letrec x=Cons a b in case[List] x of {Nil -> n; Cons z1 z2 -> z1}")
    d = descend(e)
    assert d.outcome == "found"
    assert d.chain == ["x"]
    assert pretty(d.endpoint) == "Cons a b"


def test_binding_letrec_of():
    e = t("letrec x=\\u.u in (x y)")
    assert binding_letrec_of(e, (("letIn",), ("appF",))) == ()
    assert binding_letrec_of(e, (("letIn",), ("appA",))) is None
    f = t("\\x.(x y)")
    assert binding_letrec_of(f, (("lamB",), ("appF",))) is None


def test_locus_invariants_sweep():
    from ndlam.termgen import EnumParams, enumerate_terms
    from ndlam.syntax import Var, Letrec
    n = 0
    for e in enumerate_terms(EnumParams(SIG, 6)):
        loc = maximal_reduction_locus(e)
        if loc.kind != "found":
            continue
        n += 1
        # weak segments of the position: selectors between letrec hops
        segment = []
        for sel in loc.position:
            if sel[0] in ("letB", "letIn"):
                segment = []
            else:
                segment.append(sel)
        assert all(s[0] in ("appF", "caseS") for s in segment)
        # chains are fully followed
        sub = loc.subterm
        if isinstance(e, Letrec) and isinstance(sub, Var):
            assert sub.name not in {x for x, _ in e.bindings}
    assert n > 0

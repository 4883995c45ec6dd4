import pytest

from ndlam.syntax import (
    App,
    BOOL_LIST_SIG,
    BOOL_SIG,
    Choice,
    ConstrApp,
    Lam,
    Letrec,
    SyntaxError_,
    Var,
    alpha_eq,
    alpha_key,
    free_vars,
    freshen,
    make_conventional,
    parse,
    parse_signature,
    plug,
    pretty,
    subterm_at,
    subterms,
)

SIG = BOOL_LIST_SIG


def t(text):
    return parse(text, SIG)


def test_parse_identity():
    e = t("\\x.x")
    assert isinstance(e, Lam)
    assert isinstance(e.body, Var)
    assert e.body.name == e.binder


def test_parse_letrec_example():
    e = t("letrec x2=\\x.x, x1=(x2 x1) in x1")
    assert isinstance(e, Letrec)
    names = [x for x, _ in e.bindings]
    assert names == ["x2", "x1"]
    assert isinstance(e.bindings[0][1], Lam)
    app = e.bindings[1][1]
    assert isinstance(app, App)
    assert app.fun.name == "x2" and app.arg.name == "x1"
    assert e.body.name == "x1"


def test_parse_choice_arity_error():
    with pytest.raises(SyntaxError_):
        t("choice True False True")


def test_parse_constructor_overapplication_rejected():
    with pytest.raises(SyntaxError_):
        t("Cons a b c")


def test_parse_constructor_folding():
    # (Cons a) b is the constructor application Cons a b
    e = t("((Cons a) b)")
    assert isinstance(e, ConstrApp)
    assert e.constr == "Cons" and len(e.args) == 2


def test_parse_case_completeness():
    with pytest.raises(SyntaxError_):
        t("case[Bool] b of {True -> x}")
    with pytest.raises(SyntaxError_):
        t("case[Bool] b of {True -> x; True -> y; False -> z}")
    e = t("case[Bool] b of {True -> x; False -> False}")
    assert free_vars(e) == {"b", "x"}


def test_parse_duplicate_letrec_binder():
    with pytest.raises(SyntaxError_):
        t("letrec x=True, x=False in x")


def test_pretty_goldens():
    assert pretty(t("\\x.x")) == "\\x.x"
    assert pretty(Choice(ConstrApp("True", ()), ConstrApp("False", ()))) == "choice True False"
    e = App(App(Var("f"), Var("a")), Var("b"))
    assert pretty(e) == "(f a b)"


def test_lambda_body_extends_right():
    e = t("(\\x.x y)")
    assert isinstance(e, Lam)
    assert isinstance(e.body, App)
    e2 = t("((\\x.x) y)")
    assert isinstance(e2, App)
    assert isinstance(e2.fun, Lam)


def test_free_vars():
    assert free_vars(t("letrec x=x in x")) == set()
    assert free_vars(t("(x y)")) == {"x", "y"}
    assert free_vars(t("\\x.(x y)")) == {"y"}


def test_alpha_eq_basic():
    assert alpha_eq(t("\\x.x"), t("\\y.y"))
    assert not alpha_eq(t("\\x.\\y.x"), t("\\x.\\y.y"))
    assert not alpha_eq(Var("a"), Var("b"))


def test_alpha_eq_letrec_permutation():
    a = t("letrec a=True, b=False in a")
    b = t("letrec b=False, a=True in a")
    assert alpha_eq(a, b)
    c = t("letrec a=False, b=True in a")
    assert not alpha_eq(a, c)


def test_alpha_eq_symmetric_cycle():
    a = t("letrec a=b, b=a in True")
    b = t("letrec b=a, a=b in True")
    assert alpha_eq(a, b)
    assert alpha_eq(t("letrec a=b, b=a in a"), t("letrec p=q, q=p in p"))


def test_alpha_eq_three_cycle():
    a = t("letrec a=(f b), b=(f c), c=(f a) in a")
    b = t("letrec c=(f a), a=(f b), b=(f c) in a")
    assert alpha_eq(a, b)


def test_freshen():
    e = t("\\x.x")
    f = freshen(e, {"x"})
    assert f.binder != "x"
    assert alpha_eq(e, f)
    g = t("letrec a=(a b) in (a a)")
    h = freshen(g, set())
    assert alpha_eq(g, h)
    assert free_vars(g) == free_vars(h)


def test_make_conventional_shadowing():
    # plugging may create shadowed binders; renaming keeps reference structure
    raw = Lam("x", Lam("x", Var("x")))
    c = make_conventional(raw)
    assert alpha_eq(c, t("\\a.\\b.b"))
    raw2 = App(Lam("x", Var("x")), Var("x"))  # free x alongside binder x
    c2 = make_conventional(raw2)
    assert isinstance(c2.fun, Lam)
    assert c2.fun.binder != "x"
    assert c2.arg.name == "x"


def test_plug_captures():
    ctx = parse("letrec w=[] in w", SIG, allow_hole=True)
    filled = plug(ctx, Var("w"), SIG)
    # the free w is captured by the binding, yielding letrec w=w in w
    assert alpha_eq(filled, t("letrec w=w in w"))


def test_roundtrip_spec_terms():
    texts = [
        "\\x.x",
        "letrec x2=\\x.x, x1=(x2 x1) in x1",
        "choice True False",
        "case[List] (Cons a b) of {Nil -> n; Cons y1 y2 -> y1}",
        "((letrec x=c in \\y.y) d)",
        "letrec x=Cons a b in case[List] x of {Nil -> n; Cons z1 z2 -> z1}",
        "(f a b)",
        "Cons (Cons a b) Nil",
        "case[Bool] (choice True False) of {True -> \\u.u; False -> letrec q=q in q}",
    ]
    for s in texts:
        e = parse(s, SIG)
        assert alpha_eq(parse(pretty(e), SIG), e), s


def test_parse_signature():
    sig = parse_signature("type Bool = True/0 | False/0\ntype List = Nil/0 | Cons/2\n")
    assert sig.arity("Cons") == 2
    assert sig.type_of("True") == "Bool"
    with pytest.raises(SyntaxError_):
        parse_signature("type Weird =")


def test_subterms_positions():
    e = t("((\\y.y) d)")
    pos = dict(subterms(e))
    assert (("appF",),) in pos and (("appA",),) in pos
    assert subterm_at(e, (("appF",), ("lamB",))).name == e.fun.binder


# ---------------------------------------------------------------------------
# Randomized properties

from hypothesis import given, settings
from hypothesis import strategies as st


def _terms_strategy():
    from ndlam.termgen import EnumParams, enumerate_terms
    pool = list(enumerate_terms(EnumParams(SIG, 5)))
    return st.sampled_from(pool)


@settings(max_examples=150, deadline=None)
@given(_terms_strategy(), st.integers(0, 3))
def test_roundtrip_and_freshen_random(e, salt):
    avoid = {f"q{salt}"}
    f = freshen(e, avoid)
    assert alpha_eq(e, f)
    assert free_vars(e) == free_vars(f)
    assert alpha_eq(parse(pretty(f), SIG), e)


@settings(max_examples=150, deadline=None)
@given(_terms_strategy(), st.randoms())
def test_letrec_permutation_random(e, rng):
    def permute(t_):
        if isinstance(t_, Letrec):
            bs = list(t_.bindings)
            rng.shuffle(bs)
            return Letrec(tuple((x, permute(r)) for x, r in bs),
                          permute(t_.body))
        from ndlam.syntax import children, replace_at
        out = t_
        for sel, c in list(children(t_)):
            out = replace_at(out, (sel,), permute(subterm_at(out, (sel,))), SIG)
        return out

    assert alpha_eq(e, permute(e))


@settings(max_examples=100, deadline=None)
@given(_terms_strategy(), _terms_strategy(), _terms_strategy())
def test_alpha_eq_equivalence_random(a, b, c):
    assert alpha_eq(a, a)
    assert alpha_eq(a, b) == alpha_eq(b, a)
    if alpha_eq(a, b) and alpha_eq(b, c):
        assert alpha_eq(a, c)

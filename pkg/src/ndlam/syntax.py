"""Expression syntax: AST, signatures, parsing, printing, alpha handling.

Expressions are immutable values; every operation here is pure.  The one
piece of shared state is the fresh-name counter, which is only ever
incremented (worker processes each get their own copy).

All terms are kept in the distinct-variable convention: binders are pairwise
distinct and distinct from free variables.  `make_conventional` restores the
convention after operations that may break it (parsing, context plugging).
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field


class SyntaxError_(Exception):
    """Raised on malformed input text or ill-formed signature files."""


# ---------------------------------------------------------------------------
# Signatures

@dataclass(eq=False)
class Signature:
    """Declared types with their constructors and arities."""

    types: dict[str, tuple[tuple[str, int], ...]]
    constructors: dict[str, tuple[str, int]] = field(default_factory=dict)

    def __post_init__(self):
        self.constructors = {}
        for tname, cons in self.types.items():
            if not cons:
                raise SyntaxError_(f"type {tname} has no constructors")
            for cname, ar in cons:
                if ar < 0:
                    raise SyntaxError_(f"constructor {cname} has negative arity")
                if cname in self.constructors:
                    raise SyntaxError_(f"duplicate constructor {cname}")
                self.constructors[cname] = (tname, ar)

    def arity(self, cname: str) -> int:
        return self.constructors[cname][1]

    def type_of(self, cname: str) -> str:
        return self.constructors[cname][0]

    def constructors_of(self, tname: str) -> tuple[tuple[str, int], ...]:
        return self.types[tname]


def parse_signature(text: str) -> Signature:
    """Parse a line-based signature file: `type Bool = True/0 | False/0`."""
    types: dict[str, tuple[tuple[str, int], ...]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.fullmatch(r"type\s+([A-Z]\w*)\s*=\s*(.+)", line)
        if not m:
            raise SyntaxError_(f"line {lineno}: expected `type Name = C/arity | ...`")
        tname, rhs = m.group(1), m.group(2)
        cons = []
        for part in rhs.split("|"):
            cm = re.fullmatch(r"\s*([A-Z]\w*)\s*/\s*(\d+)\s*", part)
            if not cm:
                raise SyntaxError_(f"line {lineno}: bad constructor decl {part!r}")
            cons.append((cm.group(1), int(cm.group(2))))
        if tname in types:
            raise SyntaxError_(f"line {lineno}: duplicate type {tname}")
        types[tname] = tuple(cons)
    return Signature(types)


BOOL_SIG = Signature({"Bool": (("True", 0), ("False", 0))})
BOOL_LIST_SIG = Signature(
    {"Bool": (("True", 0), ("False", 0)), "List": (("Nil", 0), ("Cons", 2))}
)


# ---------------------------------------------------------------------------
# AST

@dataclass(eq=False, slots=True)
class Expr:
    pass


@dataclass(eq=False, slots=True)
class Var(Expr):
    """Variable occurrence: x"""
    name: str


@dataclass(eq=False, slots=True)
class ConstrApp(Expr):
    """Constructor application C e1 ... ek with k <= ar(C)."""
    constr: str
    args: tuple[Expr, ...]


@dataclass(eq=False, slots=True)
class Choice(Expr):
    """Erratic choice between two expressions."""
    left: Expr
    right: Expr


@dataclass(eq=False, slots=True)
class Alt:
    """Case alternative: C y1 ... yn -> rhs."""
    constr: str
    params: tuple[str, ...]
    rhs: Expr


@dataclass(eq=False, slots=True)
class Case(Expr):
    """case[T] e of { alt; ... } with one alternative per constructor of T."""
    typename: str
    scrut: Expr
    alts: tuple[Alt, ...]


@dataclass(eq=False, slots=True)
class App(Expr):
    """Application (e1 e2)."""
    fun: Expr
    arg: Expr


@dataclass(eq=False, slots=True)
class Lam(Expr):
    """Abstraction \\x.e"""
    binder: str
    body: Expr


@dataclass(eq=False, slots=True)
class Letrec(Expr):
    """Recursive bindings: letrec x1=e1, ... in e.  Never empty."""
    bindings: tuple[tuple[str, Expr], ...]
    body: Expr


@dataclass(eq=False, slots=True)
class Hole(Expr):
    """The hole of a one-hole context."""


def mk_app(fun: Expr, arg: Expr, sig: Signature) -> Expr:
    """Build an application, folding args into unsaturated constructor heads.

    (C a) b and C a b are the same term; a saturated constructor applied to
    a further argument stays a raw App (a type-error-like stuck shape).
    """
    if isinstance(fun, ConstrApp) and len(fun.args) < sig.arity(fun.constr):
        return ConstrApp(fun.constr, fun.args + (arg,))
    return App(fun, arg)


def mk_letrec(bindings, body: Expr) -> Expr:
    """Build a letrec; an empty binding list collapses to the body."""
    bindings = tuple(bindings)
    return Letrec(bindings, body) if bindings else body


def children(e: Expr):
    """Yield (selector, child) pairs in syntactic order."""
    if isinstance(e, ConstrApp):
        for i, a in enumerate(e.args):
            yield ("cArg", i), a
    elif isinstance(e, Choice):
        yield ("chL",), e.left
        yield ("chR",), e.right
    elif isinstance(e, Case):
        yield ("caseS",), e.scrut
        for alt in e.alts:
            yield ("caseA", alt.constr), alt.rhs
    elif isinstance(e, App):
        yield ("appF",), e.fun
        yield ("appA",), e.arg
    elif isinstance(e, Lam):
        yield ("lamB",), e.body
    elif isinstance(e, Letrec):
        for x, rhs in e.bindings:
            yield ("letB", x), rhs
        yield ("letIn",), e.body


def subterms(e: Expr):
    """Yield (path, subterm) for every position, preorder."""
    stack = [((), e)]
    while stack:
        path, t = stack.pop()
        yield path, t
        kids = [(path + (sel,), c) for sel, c in children(t)]
        stack.extend(reversed(kids))


def subterm_at(e: Expr, path) -> Expr:
    t = e
    for sel in path:
        t = _child(t, sel)
    return t


def _child(e: Expr, sel) -> Expr:
    tag = sel[0]
    if tag == "cArg":
        return e.args[sel[1]]
    if tag == "chL":
        return e.left
    if tag == "chR":
        return e.right
    if tag == "caseS":
        return e.scrut
    if tag == "caseA":
        for alt in e.alts:
            if alt.constr == sel[1]:
                return alt.rhs
        raise KeyError(sel)
    if tag == "appF":
        return e.fun
    if tag == "appA":
        return e.arg
    if tag == "lamB":
        return e.body
    if tag == "letB":
        for x, rhs in e.bindings:
            if x == sel[1]:
                return rhs
        raise KeyError(sel)
    if tag == "letIn":
        return e.body
    raise KeyError(sel)


def replace_at(e: Expr, path, new: Expr, sig: Signature) -> Expr:
    """Rebuild e with the subterm at path replaced by new.

    Applications along the rebuilt spine are re-folded with mk_app so that
    constructor heads stay in canonical ConstrApp form.
    """
    if not path:
        return new
    sel, rest = path[0], path[1:]
    tag = sel[0]
    if tag == "cArg":
        i = sel[1]
        args = list(e.args)
        args[i] = replace_at(args[i], rest, new, sig)
        return ConstrApp(e.constr, tuple(args))
    if tag == "chL":
        return Choice(replace_at(e.left, rest, new, sig), e.right)
    if tag == "chR":
        return Choice(e.left, replace_at(e.right, rest, new, sig))
    if tag == "caseS":
        return Case(e.typename, replace_at(e.scrut, rest, new, sig), e.alts)
    if tag == "caseA":
        alts = tuple(
            Alt(a.constr, a.params, replace_at(a.rhs, rest, new, sig))
            if a.constr == sel[1] else a
            for a in e.alts
        )
        return Case(e.typename, e.scrut, alts)
    if tag == "appF":
        return mk_app(replace_at(e.fun, rest, new, sig), e.arg, sig)
    if tag == "appA":
        return App(e.fun, replace_at(e.arg, rest, new, sig))
    if tag == "lamB":
        return Lam(e.binder, replace_at(e.body, rest, new, sig))
    if tag == "letB":
        binds = tuple(
            (x, replace_at(rhs, rest, new, sig)) if x == sel[1] else (x, rhs)
            for x, rhs in e.bindings
        )
        return Letrec(binds, e.body)
    if tag == "letIn":
        return Letrec(e.bindings, replace_at(e.body, rest, new, sig))
    raise KeyError(sel)


def position_str(path) -> str:
    """Serialize a position: dot-separated selectors, root printed as ε."""
    if not path:
        return "ε"
    toks = []
    for sel in path:
        if len(sel) == 1:
            toks.append(sel[0])
        else:
            toks.append(f"{sel[0]}({sel[1]})")
    return ".".join(toks)


# ---------------------------------------------------------------------------
# Free variables, fresh names

def free_vars(e: Expr) -> frozenset[str]:
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Lam):
        return free_vars(e.body) - {e.binder}
    if isinstance(e, Letrec):
        bound = {x for x, _ in e.bindings}
        fv = set(free_vars(e.body))
        for _, rhs in e.bindings:
            fv |= free_vars(rhs)
        return frozenset(fv - bound)
    if isinstance(e, Case):
        fv = set(free_vars(e.scrut))
        for alt in e.alts:
            fv |= free_vars(alt.rhs) - set(alt.params)
        return frozenset(fv)
    fv: set[str] = set()
    for _, c in children(e):
        fv |= free_vars(c)
    return frozenset(fv)


def binders(e: Expr) -> list[str]:
    """All binder names in e, in preorder (with multiplicity)."""
    out: list[str] = []
    stack = [e]
    while stack:
        t = stack.pop()
        if isinstance(t, Lam):
            out.append(t.binder)
        elif isinstance(t, Letrec):
            out.extend(x for x, _ in t.bindings)
        elif isinstance(t, Case):
            for alt in t.alts:
                out.extend(alt.params)
        stack.extend(c for _, c in children(t))
    return out


_fresh_counter = itertools.count(1)


def fresh_name(avoid=frozenset(), hint: str = "v") -> str:
    """Next unused name from the global supply."""
    while True:
        name = f"{hint}{next(_fresh_counter)}"
        if name not in avoid:
            return name


def freshen(e: Expr, avoid: frozenset[str] | set[str]) -> Expr:
    """Alpha-rename every binder in e to a fresh name outside avoid."""
    avoid = set(avoid) | set(free_vars(e))

    def go(t: Expr, ren: dict[str, str]) -> Expr:
        if isinstance(t, Var):
            return Var(ren.get(t.name, t.name))
        if isinstance(t, Lam):
            nb = fresh_name(avoid)
            avoid.add(nb)
            return Lam(nb, go(t.body, {**ren, t.binder: nb}))
        if isinstance(t, Letrec):
            ren2 = dict(ren)
            news = []
            for x, _ in t.bindings:
                nx = fresh_name(avoid)
                avoid.add(nx)
                ren2[x] = nx
                news.append(nx)
            binds = tuple(
                (news[i], go(rhs, ren2)) for i, (_, rhs) in enumerate(t.bindings)
            )
            return Letrec(binds, go(t.body, ren2))
        if isinstance(t, Case):
            alts = []
            for alt in t.alts:
                ren2 = dict(ren)
                nps = []
                for p in alt.params:
                    np = fresh_name(avoid)
                    avoid.add(np)
                    ren2[p] = np
                    nps.append(np)
                alts.append(Alt(alt.constr, tuple(nps), go(alt.rhs, ren2)))
            return Case(t.typename, go(t.scrut, ren), tuple(alts))
        if isinstance(t, ConstrApp):
            return ConstrApp(t.constr, tuple(go(a, ren) for a in t.args))
        if isinstance(t, Choice):
            return Choice(go(t.left, ren), go(t.right, ren))
        if isinstance(t, App):
            return App(go(t.fun, ren), go(t.arg, ren))
        return t

    return go(e, {})


def make_conventional(e: Expr) -> Expr:
    """Rename binders so they are pairwise distinct and avoid all free names.

    Name resolution is scope-aware (innermost binder wins), so terms built by
    raw substitution — e.g. plugging a context hole — come out with the
    capture structure they already have, just with conventional names.
    """
    fv = free_vars(e)
    bs = binders(e)
    if len(set(bs)) == len(bs) and not (set(bs) & fv):
        return e
    used = set(fv)

    def pick(x: str) -> str:
        if x not in used:
            used.add(x)
            return x
        nx = fresh_name(used)
        used.add(nx)
        return nx

    def go(t: Expr, ren: dict[str, str]) -> Expr:
        if isinstance(t, Var):
            return Var(ren.get(t.name, t.name))
        if isinstance(t, Lam):
            nb = pick(t.binder)
            return Lam(nb, go(t.body, {**ren, t.binder: nb}))
        if isinstance(t, Letrec):
            ren2 = dict(ren)
            news = []
            for x, _ in t.bindings:
                nx = pick(x)
                ren2[x] = nx
                news.append(nx)
            binds = tuple(
                (news[i], go(rhs, ren2)) for i, (_, rhs) in enumerate(t.bindings)
            )
            return Letrec(binds, go(t.body, ren2))
        if isinstance(t, Case):
            alts = []
            for alt in t.alts:
                ren2 = dict(ren)
                nps = []
                for p in alt.params:
                    np = pick(p)
                    ren2[p] = np
                    nps.append(np)
                alts.append(Alt(alt.constr, tuple(nps), go(alt.rhs, ren2)))
            return Case(t.typename, go(t.scrut, ren), tuple(alts))
        if isinstance(t, ConstrApp):
            return ConstrApp(t.constr, tuple(go(a, ren) for a in t.args))
        if isinstance(t, Choice):
            return Choice(go(t.left, ren), go(t.right, ren))
        if isinstance(t, App):
            return App(go(t.fun, ren), go(t.arg, ren))
        return t

    return go(e, {})


# ---------------------------------------------------------------------------
# Alpha equality via canonical encodings

def alpha_key(e: Expr):
    """Canonical, hashable encoding of e.

    Invariant under alpha-renaming and under permutation of letrec bindings:
    binders are numbered by de-Bruijn-style levels, letrec bindings are
    ordered by iterated refinement of their encodings with ties broken by
    first use in the body (remaining ties are structurally symmetric, so any
    order yields the same encoding).  Case alternatives are ordered by
    constructor name.
    """
    return _canon(e, {}, 0)


def _canon(e: Expr, env: dict[str, int], depth: int):
    if isinstance(e, Var):
        lvl = env.get(e.name)
        return ("f", e.name) if lvl is None else ("b", lvl)
    if isinstance(e, Lam):
        return ("lam", _canon(e.body, {**env, e.binder: depth}, depth + 1))
    if isinstance(e, App):
        return ("app", _canon(e.fun, env, depth), _canon(e.arg, env, depth))
    if isinstance(e, Choice):
        return ("ch", _canon(e.left, env, depth), _canon(e.right, env, depth))
    if isinstance(e, ConstrApp):
        return ("c", e.constr) + tuple(_canon(a, env, depth) for a in e.args)
    if isinstance(e, Case):
        alts = []
        for alt in sorted(e.alts, key=lambda a: a.constr):
            env2 = dict(env)
            d = depth
            for p in alt.params:
                env2[p] = d
                d += 1
            alts.append((alt.constr, _canon(alt.rhs, env2, d)))
        return ("case", e.typename, _canon(e.scrut, env, depth), tuple(alts))
    if isinstance(e, Letrec):
        order = _letrec_order(e, env, depth)
        env2 = dict(env)
        for i, (x, _) in enumerate(order):
            env2[x] = depth + i
        d = depth + len(order)
        binds = tuple(_canon(rhs, env2, d) for _, rhs in order)
        return ("let", binds, _canon(e.body, env2, d))
    if isinstance(e, Hole):
        return ("hole",)
    raise TypeError(e)


def _letrec_order(e: Letrec, env: dict[str, int], depth: int):
    """Order bindings canonically.

    Colors are seeded with first-use order in the body and refined by
    re-encoding each right-hand side with color-coded references until
    stable; bindings still tied after that are structurally symmetric.
    """
    names = [x for x, _ in e.bindings]
    if len(names) == 1:
        return list(e.bindings)
    first_use = {x: i for i, x in enumerate(_occurrence_order(e.body))}
    color = {x: first_use.get(x, len(names) + len(first_use)) for x in names}
    for _ in range(len(names) + 1):
        keyed = []
        for x, rhs in e.bindings:
            env2 = dict(env)
            for y in names:
                env2[y] = -1 - color[y]  # negative pseudo-levels per color
            keyed.append((x, (color[x], _canon(rhs, env2, depth))))
        ranks = {k: i for i, k in enumerate(sorted(set(k for _, k in keyed)))}
        new = {x: ranks[k] for x, k in keyed}
        if new == color:
            break
        color = new
    rank = {x: (color[x], first_use.get(x, len(names) + len(first_use))) for x in names}
    return sorted(e.bindings, key=lambda b: rank[b[0]])


def _occurrence_order(e: Expr):
    """Variable names in preorder occurrence order (free and bound alike)."""
    out = []
    stack = [e]
    while stack:
        t = stack.pop()
        if isinstance(t, Var):
            out.append(t.name)
        kids = [c for _, c in children(t)]
        stack.extend(reversed(kids))
    seen = set()
    uniq = []
    for x in out:
        if x not in seen:
            seen.add(x)
            uniq.append(x)
    return uniq


def alpha_eq(e1: Expr, e2: Expr) -> bool:
    return alpha_key(e1) == alpha_key(e2)


# ---------------------------------------------------------------------------
# Well-formedness

def check_wellformed(e: Expr, sig: Signature) -> None:
    """Raise SyntaxError_ on arity or case-alternative violations."""
    for _, t in subterms(e):
        if isinstance(t, ConstrApp):
            if t.constr not in sig.constructors:
                raise SyntaxError_(f"unknown constructor {t.constr}")
            if len(t.args) > sig.arity(t.constr):
                raise SyntaxError_(
                    f"constructor {t.constr} applied to {len(t.args)} arguments,"
                    f" arity is {sig.arity(t.constr)}"
                )
        elif isinstance(t, Case):
            if t.typename not in sig.types:
                raise SyntaxError_(f"unknown type {t.typename}")
            want = {c: ar for c, ar in sig.constructors_of(t.typename)}
            seen = set()
            for alt in t.alts:
                if alt.constr not in want:
                    raise SyntaxError_(
                        f"alternative {alt.constr} does not belong to {t.typename}"
                    )
                if alt.constr in seen:
                    raise SyntaxError_(f"duplicate alternative {alt.constr}")
                seen.add(alt.constr)
                if len(alt.params) != want[alt.constr]:
                    raise SyntaxError_(
                        f"pattern {alt.constr} has {len(alt.params)} variables,"
                        f" arity is {want[alt.constr]}"
                    )
                if len(set(alt.params)) != len(alt.params):
                    raise SyntaxError_(f"repeated pattern variable in {alt.constr}")
            if seen != set(want):
                missing = sorted(set(want) - seen)
                raise SyntaxError_(
                    f"case[{t.typename}] is missing alternatives: {', '.join(missing)}"
                )
        elif isinstance(t, Letrec):
            names = [x for x, _ in t.bindings]
            if len(set(names)) != len(names):
                raise SyntaxError_("duplicate letrec binder")
            if not t.bindings:
                raise SyntaxError_("empty letrec")


# ---------------------------------------------------------------------------
# Parser

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<lpar>\()|(?P<rpar>\))|(?P<lbrk>\[)|(?P<rbrk>\])"
    r"|(?P<lbrc>\{)|(?P<rbrc>\})|(?P<lam>\\)|(?P<dot>\.)|(?P<comma>,)"
    r"|(?P<semi>;)|(?P<eq>=)|(?P<arrow>->)|(?P<ident>[A-Za-z_]\w*))"
)

_KEYWORDS = {"letrec", "in", "choice", "case", "of"}


class _Parser:
    def __init__(self, text: str, sig: Signature, allow_hole: bool = False):
        self.text = text
        self.sig = sig
        self.allow_hole = allow_hole
        self.toks: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if not m or m.end() == m.start():
                if text[pos:].strip() == "":
                    break
                raise SyntaxError_(f"at offset {pos}: unexpected {text[pos]!r}")
            kind = m.lastgroup
            self.toks.append((kind, m.group(kind), m.start(kind)))
            pos = m.end()
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else ("eof", "", len(self.text))

    def next(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, kind, what=None):
        tok = self.next()
        if tok[0] != kind:
            got = repr(tok[1]) if tok[1] else "end of input"
            raise SyntaxError_(f"at offset {tok[2]}: expected {what or kind}, got {got}")
        return tok

    def fail(self, msg):
        tok = self.peek()
        raise SyntaxError_(f"at offset {tok[2]}: {msg}")

    # expression with juxtaposition (inside parens and at top level)
    def parse_expr(self) -> Expr:
        head = self.parse_head()
        if isinstance(head, ConstrApp) and not head.args:
            args = []
            while self.starts_atom():
                args.append(self.parse_atom())
            ar = self.sig.arity(head.constr)
            if len(args) > ar:
                self.fail(
                    f"constructor {head.constr} applied to {len(args)} arguments,"
                    f" arity is {ar}"
                )
            return ConstrApp(head.constr, tuple(args))
        e = head
        while self.starts_atom():
            e = mk_app(e, self.parse_atom(), self.sig)
        return e

    def parse_head(self) -> Expr:
        kind, val, off = self.peek()
        if kind == "ident" and val == "choice":
            self.next()
            a = self.parse_atom()
            b = self.parse_atom()
            if self.starts_atom():
                self.fail("choice takes exactly two arguments")
            return Choice(a, b)
        return self.parse_atom()

    def starts_atom(self) -> bool:
        kind, val, _ = self.peek()
        if kind in ("lpar", "lam"):
            return True
        if kind == "lbrk" and self.allow_hole:
            return True
        if kind == "ident":
            return val not in ("in", "of")
        return False

    def parse_atom(self) -> Expr:
        kind, val, off = self.peek()
        if kind == "lpar":
            self.next()
            e = self.parse_expr()
            self.expect("rpar", "')'")
            return e
        if kind == "lbrk" and self.allow_hole:
            self.next()
            self.expect("rbrk", "']'")
            return Hole()
        if kind == "lam":
            self.next()
            b = self.expect("ident", "binder")
            if not b[1][0].islower():
                self.fail("binder must be lowercase-initial")
            self.expect("dot", "'.'")
            return Lam(b[1], self.parse_expr())
        if kind == "ident":
            if val == "letrec":
                return self.parse_letrec()
            if val == "case":
                return self.parse_case()
            if val == "choice":
                self.next()
                a = self.parse_atom()
                b = self.parse_atom()
                return Choice(a, b)
            if val in _KEYWORDS:
                self.fail(f"unexpected keyword {val!r}")
            self.next()
            if val[0].isupper():
                if val not in self.sig.constructors:
                    raise SyntaxError_(f"at offset {off}: unknown constructor {val}")
                return ConstrApp(val, ())
            return Var(val)
        self.fail("expected an expression")

    def parse_letrec(self) -> Expr:
        self.next()  # letrec
        bindings = []
        names = set()
        while True:
            x = self.expect("ident", "binder")
            if x[1] in _KEYWORDS or not x[1][0].islower():
                raise SyntaxError_(f"at offset {x[2]}: bad letrec binder {x[1]!r}")
            if x[1] in names:
                raise SyntaxError_(f"at offset {x[2]}: duplicate letrec binder {x[1]}")
            names.add(x[1])
            self.expect("eq", "'='")
            rhs = self.parse_expr()
            bindings.append((x[1], rhs))
            kind, val, _ = self.peek()
            if kind == "comma":
                self.next()
                continue
            if kind == "ident" and val == "in":
                self.next()
                break
            self.fail("expected ',' or 'in'")
        return Letrec(tuple(bindings), self.parse_expr())

    def parse_case(self) -> Expr:
        self.next()  # case
        self.expect("lbrk", "'['")
        t = self.expect("ident", "type name")
        if t[1] not in self.sig.types:
            raise SyntaxError_(f"at offset {t[2]}: unknown type {t[1]}")
        self.expect("rbrk", "']'")
        scrut = self.parse_expr()
        of = self.expect("ident", "'of'")
        if of[1] != "of":
            raise SyntaxError_(f"at offset {of[2]}: expected 'of'")
        self.expect("lbrc", "'{'")
        alts = []
        while True:
            c = self.expect("ident", "constructor pattern")
            if c[1] not in self.sig.constructors:
                raise SyntaxError_(f"at offset {c[2]}: unknown constructor {c[1]}")
            params = []
            for _ in range(self.sig.arity(c[1])):
                p = self.expect("ident", "pattern variable")
                if not p[1][0].islower():
                    raise SyntaxError_(f"at offset {p[2]}: pattern variable expected")
                params.append(p[1])
            self.expect("arrow", "'->'")
            rhs = self.parse_expr()
            alts.append(Alt(c[1], tuple(params), rhs))
            kind, _, _ = self.peek()
            if kind == "semi":
                self.next()
                continue
            break
        self.expect("rbrc", "'}'")
        return Case(t[1], scrut, tuple(alts))


def parse(text: str, sig: Signature, allow_hole: bool = False) -> Expr:
    """Parse concrete syntax into a well-formed, conventional expression."""
    p = _Parser(text, sig, allow_hole=allow_hole)
    e = p.parse_expr()
    if p.peek()[0] != "eof":
        p.fail("trailing input")
    check_wellformed(e, sig)
    return make_conventional(e)


# ---------------------------------------------------------------------------
# Pretty printer

def pretty(e: Expr) -> str:
    """Concrete syntax; parse(pretty(e)) is alpha-equal to e."""
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Hole):
        return "[]"
    if isinstance(e, ConstrApp):
        if not e.args:
            return e.constr
        return " ".join([e.constr] + [_atom(a) for a in e.args])
    if isinstance(e, Choice):
        return f"choice {_atom(e.left)} {_atom(e.right)}"
    if isinstance(e, Lam):
        return f"\\{e.binder}.{pretty(e.body)}"
    if isinstance(e, App):
        spine = []
        t: Expr = e
        while isinstance(t, App):
            spine.append(t.arg)
            t = t.fun
        spine.append(t)
        spine.reverse()
        return "(" + " ".join(_atom(s) for s in spine) + ")"
    if isinstance(e, Letrec):
        bs = ", ".join(f"{x}={pretty(rhs)}" for x, rhs in e.bindings)
        return f"letrec {bs} in {pretty(e.body)}"
    if isinstance(e, Case):
        alts = "; ".join(
            " ".join([a.constr, *a.params]) + f" -> {pretty(a.rhs)}" for a in e.alts
        )
        return f"case[{e.typename}] {_atom(e.scrut)} of {{{alts}}}"
    raise TypeError(e)


def _atom(e: Expr) -> str:
    """Render e so it can stand as an application/constructor argument."""
    if isinstance(e, (Var, Hole)) or (isinstance(e, ConstrApp) and not e.args):
        return pretty(e)
    if isinstance(e, App):
        return pretty(e)  # already parenthesized
    if isinstance(e, Case):
        return pretty(e)  # braces delimit
    return f"({pretty(e)})"


def plug(ctx: Expr, e: Expr, sig: Signature) -> Expr:
    """Fill the hole of a one-hole context; capture is intentional."""
    filled = _plug(ctx, e, sig)
    return make_conventional(filled)


def _plug(ctx: Expr, e: Expr, sig: Signature) -> Expr:
    if isinstance(ctx, Hole):
        return e
    for sel, c in children(ctx):
        if any(isinstance(t, Hole) for _, t in subterms(c)):
            return replace_at(ctx, (sel,), _plug(c, e, sig), sig)
    return ctx

"""Bounded falsifier for the contextual preorder and equivalence.

A term s is below t when every context C and every nd-count D with
C[s] converging at D admits some B >= D with C[t] converging at B.  The
checker enumerates one-hole contexts up to a size bound and compares the
bounded nd-count sets; it can only falsify, never prove.

Hole filling is capturing by design: context binders around the hole bind
free variables of the plugged term.
"""

from __future__ import annotations

from dataclasses import dataclass

from .reduction import converges_set, converges_set_cached
from .syntax import (
    Alt,
    App,
    Case,
    Choice,
    ConstrApp,
    Expr,
    Hole,
    Lam,
    Letrec,
    Signature,
    Var,
    plug,
    pretty,
)
from .termgen import ALL_FEATURES, EnumParams, enumerate_terms, terms_of_size
from .transforms import applications

ALL_CONTEXTS = "all"
REDUCTION_CONTEXTS = "reduction"


@dataclass(eq=False)
class CtxSpec:
    """Context enumeration bounds; restrict_to picks the context grammar."""

    sig: Signature
    max_ctx_size: int
    restrict_to: str = ALL_CONTEXTS
    max_letrec_bindings: int = 1
    max_binders: int = 1
    features: frozenset = ALL_FEATURES

    def __post_init__(self):
        if self.max_ctx_size < 1:
            raise ValueError("max_ctx_size must be >= 1")
        if self.restrict_to not in (ALL_CONTEXTS, REDUCTION_CONTEXTS):
            raise ValueError(f"unknown context class {self.restrict_to!r}")
        self._params = EnumParams(
            self.sig, self.max_ctx_size,
            max_letrec_bindings=self.max_letrec_bindings,
            max_binders=self.max_binders, features=self.features)


def _ctxs_of_size(spec: CtxSpec, n: int, scope: tuple[str, ...]) -> list[Expr]:
    """One-hole general contexts of exactly size n (hole counts 1)."""
    key = ("ctx", n, scope)
    memo = spec._params._memo
    hit = memo.get(key)
    if hit is not None:
        return hit
    p = spec._params
    sig = spec.sig
    out: list[Expr] = []
    if n == 1:
        out.append(Hole())
    else:
        feats = p.features
        if "constructors" in feats:
            for cons in sig.types.values():
                for c, ar in cons:
                    for k in range(1, ar + 1):
                        if n - 1 < k:
                            continue
                        for sizes in _compositions(n - 1, k):
                            for hole_at in range(k):
                                _mixed_into(
                                    out, spec, p, sizes, scope, hole_at,
                                    lambda parts, c=c: ConstrApp(c, tuple(parts)))
        if len(scope) < p.max_binders:
            binder = p.pool[len(scope)]
            for body in _ctxs_of_size(spec, n - 1, scope + (binder,)):
                out.append(Lam(binder, body))
        if "choice" in feats and n >= 3:
            for sizes in _compositions(n - 1, 2):
                for hole_at in range(2):
                    _mixed_into(out, spec, p, sizes, scope, hole_at,
                                lambda parts: Choice(*parts))
        if "case" in feats:
            for tname, cons in sig.types.items():
                need = max(ar for _, ar in cons)
                if len(scope) + need > p.max_binders:
                    continue
                parts = 1 + len(cons)
                if n - 1 < parts:
                    continue
                for sizes in _compositions(n - 1, parts):
                    for hole_at in range(parts):
                        _case_mixed(out, spec, p, tname, cons, sizes, scope,
                                    hole_at)
        if n >= 3:
            for sizes in _compositions(n - 1, 2):
                for hole_at in range(2):
                    def build(parts):
                        f, a = parts
                        if isinstance(f, ConstrApp):
                            return None
                        return App(f, a)
                    _mixed_into(out, spec, p, sizes, scope, hole_at, build)
        if "letrec" in feats:
            for k in range(1, p.max_letrec_bindings + 1):
                if len(scope) + k > p.max_binders or n < 2 * k + 2:
                    continue
                binders = p.pool[len(scope):len(scope) + k]
                inner = scope + binders
                for sizes in _compositions(n - 1 - k, k + 1):
                    for hole_at in range(k + 1):
                        _mixed_into(
                            out, spec, p, sizes, inner, hole_at,
                            lambda parts, b=binders: Letrec(
                                tuple(zip(b, parts[:-1])), parts[-1]))
    memo[key] = out
    return out


def _compositions(total, parts):
    if parts == 1:
        return [(total,)] if total >= 1 else []
    out = []
    for first in range(1, total - parts + 2):
        out += [(first,) + rest for rest in _compositions(total - first, parts - 1)]
    return out


def _mixed_into(out, spec, p, sizes, scope, hole_at, build):
    """Cross product where position hole_at is a context, the rest terms."""
    lists = []
    for i, s in enumerate(sizes):
        if i == hole_at:
            lists.append(_ctxs_of_size(spec, s, scope))
        else:
            lists.append(terms_of_size(p, s, scope))
    if not all(lists):
        return
    idx = [0] * len(lists)
    while True:
        built = build([lists[i][idx[i]] for i in range(len(lists))])
        if built is not None:
            out.append(built)
        for i in range(len(lists) - 1, -1, -1):
            idx[i] += 1
            if idx[i] < len(lists[i]):
                break
            idx[i] = 0
        else:
            return


def _case_mixed(out, spec, p, tname, cons, sizes, scope, hole_at):
    scr_list = (_ctxs_of_size(spec, sizes[0], scope) if hole_at == 0
                else terms_of_size(p, sizes[0], scope))
    alt_lists = []
    for j, ((c, ar), sz) in enumerate(zip(cons, sizes[1:]), start=1):
        pvars = p.pool[len(scope):len(scope) + ar]
        rhss = (_ctxs_of_size(spec, sz, scope + pvars) if j == hole_at
                else terms_of_size(p, sz, scope + pvars))
        alt_lists.append([(c, pvars, r) for r in rhss])
    if not scr_list or not all(alt_lists):
        return
    def rec(i, acc):
        if i == len(alt_lists):
            alts = tuple(Alt(c, pv, r) for c, pv, r in acc)
            for s in scr_list:
                out.append(Case(tname, s, alts))
            return
        for ch in alt_lists[i]:
            rec(i + 1, acc + [ch])
    rec(0, [])


def _weak_ctxs_of_size(spec: CtxSpec, n: int, scope) -> list[Expr]:
    """Weak reduction contexts: hole | (W e) | case[T] W alts."""
    key = ("wctx", n, scope)
    memo = spec._params._memo
    hit = memo.get(key)
    if hit is not None:
        return hit
    p = spec._params
    out: list[Expr] = []
    if n == 1:
        out.append(Hole())
    else:
        if n >= 3:
            for sizes in _compositions(n - 1, 2):
                for w in _weak_ctxs_of_size(spec, sizes[0], scope):
                    for a in terms_of_size(p, sizes[1], scope):
                        out.append(App(w, a))
        if "case" in p.features:
            for tname, cons in p.sig.types.items():
                need = max(ar for _, ar in cons)
                if len(scope) + need > p.max_binders:
                    continue
                parts = 1 + len(cons)
                if n - 1 < parts:
                    continue
                for sizes in _compositions(n - 1, parts):
                    scr = _weak_ctxs_of_size(spec, sizes[0], scope)
                    alt_lists = []
                    for (c, ar), sz in zip(cons, sizes[1:]):
                        pvars = p.pool[len(scope):len(scope) + ar]
                        rhss = terms_of_size(p, sz, scope + pvars)
                        alt_lists.append([(c, pvars, r) for r in rhss])
                    if not scr or not all(alt_lists):
                        continue
                    def rec(i, acc):
                        if i == len(alt_lists):
                            alts = tuple(Alt(c, pv, r) for c, pv, r in acc)
                            for s in scr:
                                out.append(Case(tname, s, alts))
                            return
                        for ch in alt_lists[i]:
                            rec(i + 1, acc + [ch])
                    rec(0, [])
    memo[key] = out
    return out


def _sub_hole(ctx: Expr, filler: Expr, sig: Signature) -> Expr:
    """Structurally replace the hole (no renaming; builders keep names apart)."""
    from .syntax import _plug

    return _plug(ctx, filler, sig)


def _reduction_ctxs_of_size(spec: CtxSpec, n: int) -> list[Expr]:
    """Reduction contexts: weak, letrec-wrapped weak, and binding chains."""
    p = spec._params
    sig = spec.sig
    out = list(_weak_ctxs_of_size(spec, n, ()))
    if "letrec" not in p.features:
        return out
    # (letrec bindings in W[.]) and chain forms
    # chain of length j: x1 = W1[.], x_{i+1} = W_{i+1}[x_i], body = W[x_j]
    for j in range(1, p.max_letrec_bindings + 1):
        binders = p.pool[:j]
        inner = tuple(binders)
        parts = j + 1  # j binding contexts + body context
        if n - 1 - j < parts:
            continue
        for sizes in _compositions(n - 1 - j, parts):
            w1s = _weak_ctxs_of_size(spec, sizes[0], inner)
            mids = [
                [_sub_hole(w, Var(binders[i - 1]), sig)
                 for w in _weak_ctxs_of_size(spec, sizes[i], inner)]
                for i in range(1, j)
            ]
            bodies = [_sub_hole(w, Var(binders[j - 1]), sig)
                      for w in _weak_ctxs_of_size(spec, sizes[j], inner)]
            if not w1s or not bodies or not all(mids):
                continue
            def rec(i, acc):
                if i == j:
                    for body in bodies:
                        out.append(Letrec(tuple(zip(binders, acc)), body))
                    return
                for m in (w1s if i == 0 else mids[i - 1]):
                    rec(i + 1, acc + [m])
            rec(0, [])
    # plain letrec wrapper: bindings are terms, hole in the body
    for k in range(1, p.max_letrec_bindings + 1):
        if n < 2 * k + 2:
            continue
        binders = p.pool[:k]
        inner = tuple(binders)
        for sizes in _compositions(n - 1 - k, k + 1):
            rhss = [terms_of_size(p, s, inner) for s in sizes[:-1]]
            bodies = _weak_ctxs_of_size(spec, sizes[-1], inner)
            if not bodies or not all(rhss):
                continue
            def rec(i, acc):
                if i == k:
                    for body in bodies:
                        out.append(Letrec(tuple(zip(binders, acc)), body))
                    return
                for r in rhss[i]:
                    rec(i + 1, acc + [r])
            rec(0, [])
    return out


def enumerate_contexts(spec: CtxSpec):
    """Stream one-hole contexts up to the size bound, smallest first."""
    for n in range(1, spec.max_ctx_size + 1):
        if spec.restrict_to == ALL_CONTEXTS:
            yield from _ctxs_of_size(spec, n, ())
        else:
            yield from _reduction_ctxs_of_size(spec, n)


# ---------------------------------------------------------------------------
# The preorder check

@dataclass(eq=False)
class EquivVerdict:
    kind: str  # 'no-counterexample' | 'counterexample'
    contexts_checked: int
    exhaustion: bool = False
    context: Expr | None = None
    context_index: int = -1
    D: int | None = None
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.kind == "no-counterexample"

    def describe(self) -> str:
        if self.ok:
            tail = " (bound-limited)" if self.exhaustion else ""
            return f"no counterexample in {self.contexts_checked} contexts{tail}"
        return (f"counterexample: C = {pretty(self.context)}, D = {self.D}; "
                f"{self.detail}")


def check_le_c(s: Expr, t: Expr, spec: CtxSpec, step_bound: int = 200) -> EquivVerdict:
    """Falsify s <=_c t over the enumerated contexts.

    A context where either side hits the step bound is skipped (flagged),
    never reported as a counterexample.
    """
    sig = spec.sig
    exhaustion = False
    checked = 0
    for idx, ctx in enumerate(enumerate_contexts(spec)):
        cs = plug(ctx, s, sig)
        ct = plug(ctx, t, sig)
        ds, ex1 = converges_set_cached(cs, sig, step_bound)
        bs, ex2 = converges_set_cached(ct, sig, step_bound)
        checked += 1
        if ex1 or ex2:
            exhaustion = True
            continue
        if ds and (not bs or max(bs) < max(ds)):
            top = max(bs) if bs else None
            d = min(x for x in ds if top is None or x > top)
            return EquivVerdict(
                "counterexample", checked, exhaustion, ctx, idx, d,
                detail=f"C[s] converges with nd-counts {sorted(ds)}, "
                       f"C[t] with {sorted(bs)}")
    return EquivVerdict("no-counterexample", checked, exhaustion)


def check_sim_c(s: Expr, t: Expr, spec: CtxSpec,
                step_bound: int = 200) -> tuple[EquivVerdict, EquivVerdict]:
    """Falsify both directions of s ~_c t in one pass over the contexts."""
    sig = spec.sig
    exhaustion = False
    checked = 0
    fwd = bwd = None
    for idx, ctx in enumerate(enumerate_contexts(spec)):
        cs = plug(ctx, s, sig)
        ct = plug(ctx, t, sig)
        ds, ex1 = converges_set_cached(cs, sig, step_bound)
        bs, ex2 = converges_set_cached(ct, sig, step_bound)
        checked += 1
        if ex1 or ex2:
            exhaustion = True
            continue
        if fwd is None and ds and (not bs or max(bs) < max(ds)):
            top = max(bs) if bs else None
            d = min(x for x in ds if top is None or x > top)
            fwd = EquivVerdict("counterexample", checked, exhaustion, ctx, idx, d,
                               detail=f"C[s]: {sorted(ds)}, C[t]: {sorted(bs)}")
        if bwd is None and bs and (not ds or max(ds) < max(bs)):
            top = max(ds) if ds else None
            d = min(x for x in bs if top is None or x > top)
            bwd = EquivVerdict("counterexample", checked, exhaustion, ctx, idx, d,
                               detail=f"C[t]: {sorted(bs)}, C[s]: {sorted(ds)}")
        if fwd is not None and bwd is not None:
            break
    if fwd is None:
        fwd = EquivVerdict("no-counterexample", checked, exhaustion)
    if bwd is None:
        bwd = EquivVerdict("no-counterexample", checked, exhaustion)
    return fwd, bwd


def counterexample_witness(verdict: EquivVerdict, s: Expr, spec: CtxSpec,
                           step_bound: int = 200):
    """Recompute the converging witness trace for a counterexample verdict."""
    if verdict.ok:
        return None
    cs = plug(verdict.context, s, spec.sig)
    rep = converges_set(cs, spec.sig, step_bound, keep_witnesses=True)
    return rep.witnesses.get(verdict.D)


@dataclass(eq=False)
class ContextLemmaReport:
    consistent: bool
    reduction_verdict: EquivVerdict
    general_verdict: EquivVerdict


def check_context_lemma_instance(s: Expr, t: Expr, spec: CtxSpec,
                                 step_bound: int = 200) -> ContextLemmaReport:
    """Consistency probe: passing on reduction contexts while failing on
    general contexts at matched bounds would contradict the context lemma."""
    rspec = CtxSpec(spec.sig, spec.max_ctx_size, REDUCTION_CONTEXTS,
                    spec.max_letrec_bindings, spec.max_binders, spec.features)
    gspec = CtxSpec(spec.sig, spec.max_ctx_size, ALL_CONTEXTS,
                    spec.max_letrec_bindings, spec.max_binders, spec.features)
    rv = check_le_c(s, t, rspec, step_bound)
    gv = check_le_c(s, t, gspec, step_bound)
    return ContextLemmaReport(not (rv.ok and not gv.ok), rv, gv)


def enumerate_rule_pairs(rule: str, sig: Signature, enum_params: EnumParams,
                         limit: int):
    """(before, after) pairs for applications of `rule` over the enumeration,
    at any position, deterministic order, up to `limit`."""
    pairs = []
    for e in enumerate_terms(enum_params):
        for app in applications(rule, e, sig):
            pairs.append((e, app.after()))
            if len(pairs) >= limit:
                return pairs
    return pairs

"""Base-calculus reduction: the rewrite rules, the standard-redex selector,
single/multi-step standard reduction and bounded convergence search.

Rule appliers raise RuleError when the redex shape or a side condition does
not hold.  Every applier returns a term that again satisfies the
distinct-variable convention (copied subterms are freshened on the spot).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .contexts import deepest_case_event, descend
from .syntax import (
    App,
    Case,
    Choice,
    ConstrApp,
    Expr,
    Lam,
    Letrec,
    Signature,
    Var,
    alpha_key,
    binders,
    free_vars,
    freshen,
    fresh_name,
    mk_app,
    mk_letrec,
    position_str,
    pretty,
    replace_at,
    subterm_at,
)

BASE_LABELS = ("lbeta", "cpn", "llet", "lapp", "lcase", "case", "ndl", "ndr")
ND_LABELS = ("ndl", "ndr")
LLL_LABELS = ("llet", "lapp", "lcase")


class RuleError(Exception):
    """Redex shape mismatch or violated side condition."""


@dataclass(eq=False)
class ReductionStep:
    """One rule application: label, standard/internal flag, redex anchor."""

    label: str
    flag: str  # 'st' | 'i' | 'plain'
    pos: tuple
    before: Expr
    after: Expr
    detail: dict = field(default_factory=dict)

    def describe(self) -> str:
        return f"{self.label} {self.flag} @{position_str(self.pos)} => {pretty(self.after)}"


def _avoid(e: Expr) -> set[str]:
    return set(binders(e)) | set(free_vars(e))


# ---------------------------------------------------------------------------
# Rule appliers (Fig-style rewrite rules)

def apply_lbeta(e: Expr, pos, sig: Signature) -> Expr:
    t = subterm_at(e, pos)
    if not (isinstance(t, App) and isinstance(t.fun, Lam)):
        raise RuleError("lbeta: subterm is not an application of an abstraction")
    lam = t.fun
    new = Letrec(((lam.binder, t.arg),), lam.body)
    return replace_at(e, pos, new, sig)


def apply_lapp(e: Expr, pos, sig: Signature) -> Expr:
    t = subterm_at(e, pos)
    if not (isinstance(t, App) and isinstance(t.fun, Letrec)):
        raise RuleError("lapp: function part is not a letrec")
    inner = t.fun
    new = Letrec(inner.bindings, mk_app(inner.body, t.arg, sig))
    return replace_at(e, pos, new, sig)


def apply_lcase(e: Expr, pos, sig: Signature) -> Expr:
    t = subterm_at(e, pos)
    if not (isinstance(t, Case) and isinstance(t.scrut, Letrec)):
        raise RuleError("lcase: scrutinee is not a letrec")
    inner = t.scrut
    new = Letrec(inner.bindings, Case(t.typename, inner.body, t.alts))
    return replace_at(e, pos, new, sig)


def apply_llet(e: Expr, pos, sig: Signature) -> Expr:
    """Flatten the letrec at pos into its enclosing letrec.

    pos names the inner letrec; its parent selector decides the variant
    (letrec body vs binding right-hand side).
    """
    if not pos:
        raise RuleError("llet: no enclosing letrec")
    inner = subterm_at(e, pos)
    outer = subterm_at(e, pos[:-1])
    sel = pos[-1]
    if not (isinstance(inner, Letrec) and isinstance(outer, Letrec)):
        raise RuleError("llet: no letrec directly inside a letrec")
    if sel[0] == "letIn":
        merged = Letrec(outer.bindings + inner.bindings, inner.body)
    elif sel[0] == "letB":
        binds = tuple(
            (x, inner.body) if x == sel[1] else (x, rhs) for x, rhs in outer.bindings
        )
        merged = Letrec(binds + inner.bindings, outer.body)
    else:
        raise RuleError("llet: no letrec directly inside a letrec")
    return replace_at(e, pos[:-1], merged, sig)


def apply_case_direct(e: Expr, pos, sig: Signature) -> Expr:
    t = subterm_at(e, pos)
    if not isinstance(t, Case):
        raise RuleError("case: not a case expression")
    s = t.scrut
    if not isinstance(s, ConstrApp):
        raise RuleError("case: scrutinee is not a constructor application")
    if sig.type_of(s.constr) != t.typename:
        raise RuleError("case: constructor of a different type")
    if len(s.args) != sig.arity(s.constr):
        raise RuleError("case: constructor application not saturated")
    alt = next(a for a in t.alts if a.constr == s.constr)
    new = mk_letrec(zip(alt.params, s.args), alt.rhs)
    return replace_at(e, pos, new, sig)


def case_chain_of(e: Expr, pos, sig: Signature):
    """Resolve the binding chain feeding the case at pos.

    Returns (letrec position, letrec, chain, direct_args, constr, base_args)
    where chain is a list of (binder, args applied in that binding), deepest
    binding last.
    """
    t = subterm_at(e, pos)
    if not isinstance(t, Case):
        raise RuleError("case: not a case expression")

    def strip(x: Expr):
        args = []
        while isinstance(x, App):
            args.append(x.arg)
            x = x.fun
        args.reverse()
        return x, args

    head, direct_args = strip(t.scrut)
    if not isinstance(head, Var):
        raise RuleError("case: scrutinee does not end in a bound variable")
    # nearest enclosing letrec binding the head variable
    from .contexts import binding_letrec_of

    lpos = binding_letrec_of(e, pos + (("caseS",),) + tuple(("appF",) for _ in direct_args))
    if lpos is None:
        raise RuleError("case: scrutinee variable is not letrec-bound")
    let = subterm_at(e, lpos)
    binds = dict(let.bindings)
    chain = []
    seen = set()
    cur = head.name
    while True:
        if cur in seen:
            raise RuleError("case: cyclic binding chain")
        seen.add(cur)
        rhs_head, rhs_args = strip(binds[cur])
        if isinstance(rhs_head, ConstrApp):
            if rhs_args:
                raise RuleError("case: over-applied constructor in chain")
            chain.append((cur, []))
            return lpos, let, chain, direct_args, rhs_head, list(rhs_head.args)
        if isinstance(rhs_head, Var) and rhs_head.name in binds and rhs_head.name != cur:
            chain.append((cur, rhs_args))
            cur = rhs_head.name
            continue
        raise RuleError("case: no chain to a constructor application")


def apply_case_chain(e: Expr, pos, sig: Signature) -> Expr:
    t = subterm_at(e, pos)
    lpos, let, chain, direct_args, chead, base_args = case_chain_of(e, pos, sig)
    if sig.type_of(chead.constr) != t.typename:
        raise RuleError("case: constructor of a different type")
    chain_args = [args for _, args in reversed(chain)]  # deepest binding first
    total = len(base_args) + sum(len(a) for a in chain_args) + len(direct_args)
    ar = sig.arity(chead.constr)
    if total != ar:
        raise RuleError("case: assembled constructor application not saturated")
    avoid = _avoid(e)
    ys = []
    for _ in range(ar):
        y = fresh_name(avoid)
        avoid.add(y)
        ys.append(y)
    it = iter(ys)
    base_ys = [next(it) for _ in base_args]
    per_binding_ys = [[next(it) for _ in args] for args in chain_args]
    direct_ys = [next(it) for _ in direct_args]

    names = [x for x, _ in reversed(chain)]  # deepest (constructor) binding first
    new_rhs: dict[str, Expr] = {}
    insert_after: dict[str, list[tuple[str, Expr]]] = {}
    new_rhs[names[0]] = ConstrApp(chead.constr, tuple(Var(y) for y in base_ys))
    insert_after[names[0]] = list(zip(base_ys, base_args))
    for i in range(1, len(names)):
        prev = names[i - 1]
        yard = per_binding_ys[i]
        spine: Expr = Var(prev)
        for y in yard:
            spine = App(spine, Var(y))
        new_rhs[names[i]] = spine
        insert_after[names[i]] = list(zip(yard, chain_args[i]))

    alt = next(a for a in t.alts if a.constr == chead.constr)
    inner_binds = list(zip(direct_ys, direct_args)) + [
        (z, Var(y)) for z, y in zip(alt.params, ys)
    ]
    new_case_site = mk_letrec(inner_binds, alt.rhs)

    # The case never sits inside a chain binding (those are application
    # spines), so replacing it and rewriting the chain touch disjoint parts.
    rel = pos[len(lpos):]
    let2 = replace_at(let, rel, new_case_site, sig)
    out_binds = []
    for x, rhs in let2.bindings:
        if x in new_rhs:
            out_binds.append((x, new_rhs[x]))
            out_binds.extend(insert_after[x])
        else:
            out_binds.append((x, rhs))
    return replace_at(e, lpos, Letrec(tuple(out_binds), let2.body), sig)


def apply_nd(e: Expr, pos, which: str, sig: Signature) -> Expr:
    t = subterm_at(e, pos)
    if not isinstance(t, Choice):
        raise RuleError("nd: not a choice expression")
    return replace_at(e, pos, t.left if which == "left" else t.right, sig)


def apply_cpn(e: Expr, target, sig: Signature) -> Expr:
    """Copy an abstraction along a chain of variable-to-variable bindings to
    the variable occurrence at `target`."""
    occ = subterm_at(e, target)
    if not isinstance(occ, Var):
        raise RuleError("cpn: target is not a variable occurrence")
    from .contexts import binding_letrec_of

    lpos = binding_letrec_of(e, target)
    if lpos is None:
        raise RuleError("cpn: target variable is not letrec-bound")
    binds = dict(subterm_at(e, lpos).bindings)
    seen = set()
    cur = occ.name
    while True:
        if cur in seen:
            raise RuleError("cpn: cyclic indirection chain")
        seen.add(cur)
        rhs = binds[cur]
        if isinstance(rhs, Var) and rhs.name in binds:
            cur = rhs.name
            continue
        if isinstance(rhs, Lam):
            src = rhs
            break
        raise RuleError("cpn: chain does not end in an abstraction")
    copy = freshen(src, _avoid(e))
    return replace_at(e, target, copy, sig)


# ---------------------------------------------------------------------------
# Standard redex selection

@dataclass(eq=False)
class StdResult:
    """Outcome of standard-redex selection."""

    kind: str  # 'none' | 'det' | 'nd'
    stuck_class: str | None = None  # 'TypeError' | 'Cycle' | 'Value'
    step: ReductionStep | None = None
    left: ReductionStep | None = None
    right: ReductionStep | None = None

    def arms(self):
        return (self.left, self.right) if self.kind == "nd" else (self.step,)


def _std_step(e, sig, label, pos, apply_fn, detail=None) -> ReductionStep:
    return ReductionStep(label, "st", pos, e, apply_fn(), detail or {})


def standard_redex(e: Expr, sig: Signature) -> StdResult:
    """Select the standard redex at the maximal reduction context."""
    d = descend(e)
    if d.outcome == "cycle":
        return StdResult("none", "Cycle")
    if d.outcome == "freevar":
        return StdResult("none", "TypeError")
    p, t = d.endpoint_path, d.endpoint
    parent = p[-1][0] if p else None

    if isinstance(t, Choice):
        left = ReductionStep("ndl", "st", p, e, replace_at(e, p, t.left, sig))
        right = ReductionStep("ndr", "st", p, e, replace_at(e, p, t.right, sig))
        return StdResult("nd", left=left, right=right)

    if isinstance(t, Letrec):
        if parent == "letIn":
            return StdResult("det", step=_std_step(
                e, sig, "llet", (), lambda: apply_llet(e, p, sig), {"inner": p}))
        if parent == "appF":
            return StdResult("det", step=_std_step(
                e, sig, "lapp", p[:-1], lambda: apply_lapp(e, p[:-1], sig)))
        if parent == "caseS":
            return StdResult("det", step=_std_step(
                e, sig, "lcase", p[:-1], lambda: apply_lcase(e, p[:-1], sig)))
        if parent == "letB":
            return StdResult("det", step=_std_step(
                e, sig, "llet", (), lambda: apply_llet(e, p, sig), {"inner": p}))
        raise AssertionError("unreachable letrec position")

    if isinstance(t, Lam):
        if parent == "appF":
            return StdResult("det", step=_std_step(
                e, sig, "lbeta", p[:-1], lambda: apply_lbeta(e, p[:-1], sig)))
        if parent == "letB" and len(p) == 1 and d.chain:
            target = _cpn_standard_target(d)
            return StdResult("det", step=_std_step(
                e, sig, "cpn", (), lambda: apply_cpn(e, target, sig),
                {"target": target, "source": d.chain[-1]}))
        if parent == "caseS":
            return StdResult("none", "TypeError")
        return StdResult("none", "Value")

    if isinstance(t, ConstrApp):
        case_ev = deepest_case_event(d)
        if case_ev is None:
            total = len(t.args) + _arg_count(d, None)
            cls = "Value" if total <= sig.arity(t.constr) else "TypeError"
            return StdResult("none", cls)
        cpos, cnode = case_ev
        scrut_pos = cpos + (("caseS",),)
        total = len(t.args) + _arg_count(d, scrut_pos)
        if sig.type_of(t.constr) != cnode.typename or total != sig.arity(t.constr):
            return StdResult("none", "TypeError")
        if p == scrut_pos:
            return StdResult("det", step=_std_step(
                e, sig, "case", cpos, lambda: apply_case_direct(e, cpos, sig)))
        return StdResult("det", step=_std_step(
            e, sig, "case", cpos, lambda: apply_case_chain(e, cpos, sig),
            {"chain": tuple(d.chain)}))

    raise AssertionError(f"unreachable endpoint {type(t).__name__}")


def _arg_count(d, below) -> int:
    n = 0
    for path, node in d.events():
        if isinstance(node, App):
            if below is None or (len(path) >= len(below) and path[: len(below)] == below):
                n += 1
    return n


def _cpn_standard_target(d) -> tuple:
    """Target occurrence for the standard cpn: the variable at the start of
    the maximal bare-indirection suffix of the chain."""
    last = len(d.chain) - 1
    b = last
    for i in range(last - 1, -1, -1):
        seg = d.segments[i + 1]
        if len(seg) == 1 and isinstance(seg[0][1], Var):
            b = i
        else:
            break
    if b == 0:
        return d.segments[0][-1][0]
    return d.segments[b][-1][0]


# ---------------------------------------------------------------------------
# Multi-step standard reduction

@dataclass(eq=False)
class EvalResult:
    outcome: str  # 'converged' | 'stuck' | 'exhausted'
    final: Expr
    nd_count: int
    stuck_class: str | None = None
    steps: int = 0


def standard_reduce(e: Expr, sig: Signature, nd_policy="left",
                    step_bound: int = 1000):
    """Iterate the standard reduction; returns (EvalResult, trace).

    nd_policy: 'left' | 'right' | an iterable of 'l'/'r' consumed per choice.
    """
    if step_bound <= 0:
        raise ValueError("step_bound must be positive")
    seq = None if nd_policy in ("left", "right") else iter(nd_policy)
    trace: list[ReductionStep] = []
    cur = e
    nd_count = 0
    for n in range(step_bound):
        r = standard_redex(cur, sig)
        if r.kind == "none":
            out = "converged" if r.stuck_class == "Value" else "stuck"
            return EvalResult(out, cur, nd_count, r.stuck_class, n), trace
        if r.kind == "nd":
            if seq is None:
                step = r.left if nd_policy == "left" else r.right
            else:
                try:
                    arm = next(seq)
                except StopIteration:
                    raise ValueError("nd choice sequence exhausted") from None
                step = r.left if arm == "l" else r.right
            nd_count += 1
        else:
            step = r.step
        trace.append(step)
        cur = step.after
    return EvalResult("exhausted", cur, nd_count, None, step_bound), trace


@dataclass(eq=False)
class ConvergeReport:
    """Observed nd-counts of converging standard reductions (bounded)."""

    dset: frozenset[int]
    exhausted: bool
    witnesses: dict[int, list[ReductionStep]] | None = None


def converges_set(e: Expr, sig: Signature, step_bound: int = 200,
                  keep_witnesses: bool = False) -> ConvergeReport:
    """Explore both arms of every nd choice, breadth-first, and collect the
    nd-counts of all converging branches within the step bound."""
    dset: set[int] = set()
    witnesses: dict[int, list[ReductionStep]] = {}
    exhausted = False
    queue = deque([(e, 0, 0, [] if keep_witnesses else None)])
    while queue:
        cur, nd, steps, tr = queue.popleft()
        while True:
            if steps >= step_bound:
                exhausted = True
                break
            r = standard_redex(cur, sig)
            if r.kind == "none":
                if r.stuck_class == "Value":
                    if nd not in dset:
                        dset.add(nd)
                        if keep_witnesses:
                            witnesses[nd] = tr
                break
            if r.kind == "nd":
                steps += 1
                queue.append((r.right.after, nd + 1, steps,
                              tr + [r.right] if keep_witnesses else None))
                if keep_witnesses:
                    tr = tr + [r.left]
                cur = r.left.after
                nd += 1
                continue
            steps += 1
            if keep_witnesses:
                tr = tr + [r.step]
            cur = r.step.after
    return ConvergeReport(frozenset(dset), exhausted,
                          witnesses if keep_witnesses else None)


_converge_cache: dict[tuple, tuple[frozenset[int], bool]] = {}


def converges_set_cached(e: Expr, sig: Signature, step_bound: int) -> tuple[frozenset[int], bool]:
    """Memoized convergence: keyed by alpha-canonical form and bound."""
    key = (alpha_key(e), step_bound, id(sig))
    hit = _converge_cache.get(key)
    if hit is None:
        rep = converges_set(e, sig, step_bound)
        hit = (rep.dset, rep.exhausted)
        if len(_converge_cache) > 400_000:
            _converge_cache.clear()
        _converge_cache[key] = hit
    return hit


def format_trace(trace, result: EvalResult) -> str:
    """One step per line plus the RESULT line."""
    lines = [s.describe() for s in trace]
    if result.outcome == "converged":
        tail = "Converged"
    elif result.outcome == "stuck":
        tail = f"Stuck:{result.stuck_class}"
    else:
        tail = "Exhausted"
    lines.append(f"RESULT {tail} nd={result.nd_count}")
    return "\n".join(lines)

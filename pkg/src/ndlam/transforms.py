"""Extra-calculus program transformations and step classification.

Covers garbage collection (ldel, ldelcyc1/2), indirection compression (lcv),
general abstraction copying (cp, split into cpt/cpd by surface position),
inlining of once-used bindings (ucp), the lll termination measure, and
enumeration of rule applications for every label — the latter drives the
diagram checker and the lemma property tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

from .contexts import binding_letrec_of, is_surface_context, reduction_positions
from .reduction import (
    BASE_LABELS,
    LLL_LABELS,
    ReductionStep,
    RuleError,
    apply_case_chain,
    apply_case_direct,
    apply_cpn,
    apply_lapp,
    apply_lbeta,
    apply_lcase,
    apply_llet,
    apply_nd,
    standard_redex,
)
from .syntax import (
    App,
    Case,
    Choice,
    Expr,
    Lam,
    Letrec,
    Signature,
    Var,
    alpha_key,
    children,
    mk_letrec,
    replace_at,
    subterm_at,
    subterms,
)

TRANSFORM_LABELS = ("ldel", "ldelcyc1", "ldelcyc2", "lcv", "cp", "cpt", "cpd", "ucp")


def _occurrences(e: Expr, name: str):
    """Positions of variable occurrences of name in e (no binder tracking:
    callers work on conventional terms where names are unambiguous)."""
    return [p for p, t in subterms(e) if isinstance(t, Var) and t.name == name]


def apply_ldel(e: Expr, pos, sig: Signature) -> Expr:
    """Drop the unused binding at pos (a letB position); dropping the only
    binding removes the letrec."""
    if not pos or pos[-1][0] != "letB":
        raise RuleError("ldel: position does not name a letrec binding")
    x = pos[-1][1]
    let = subterm_at(e, pos[:-1])
    keep = [(y, rhs) for y, rhs in let.bindings if y != x]
    for y, rhs in keep:
        if _occurrences(rhs, x):
            raise RuleError(f"ldel: {x} occurs in the binding of {y}")
    if _occurrences(let.body, x):
        raise RuleError(f"ldel: {x} occurs in the body")
    return replace_at(e, pos[:-1], mk_letrec(keep, let.body), sig)


def apply_ldelcyc(e: Expr, pos, drop, sig: Signature) -> Expr:
    """Drop the group of bindings `drop` (cyclic references within the group
    are fine); dropping all bindings removes the letrec."""
    let = subterm_at(e, pos)
    if not isinstance(let, Letrec):
        raise RuleError("ldelcyc: not a letrec")
    drop = set(drop)
    names = {x for x, _ in let.bindings}
    if not drop or not drop <= names:
        raise RuleError("ldelcyc: unknown binders")
    keep = [(y, rhs) for y, rhs in let.bindings if y not in drop]
    for y, rhs in keep:
        hit = drop & {t.name for _, t in subterms(rhs) if isinstance(t, Var)}
        if hit:
            raise RuleError(f"ldelcyc: {sorted(hit)[0]} occurs in the binding of {y}")
    body_hit = drop & {t.name for _, t in subterms(let.body) if isinstance(t, Var)}
    if body_hit:
        raise RuleError(f"ldelcyc: {sorted(body_hit)[0]} occurs in the body")
    return replace_at(e, pos, mk_letrec(keep, let.body), sig)


def apply_lcv(e: Expr, target, sig: Signature) -> Expr:
    """Replace the variable occurrence at target by what its binding points
    to, for variable-to-variable bindings."""
    occ = subterm_at(e, target)
    if not isinstance(occ, Var):
        raise RuleError("lcv: target is not a variable occurrence")
    lpos = binding_letrec_of(e, target)
    if lpos is None:
        raise RuleError("lcv: target variable is not letrec-bound")
    let = subterm_at(e, lpos)
    rhs = dict(let.bindings)[occ.name]
    if not isinstance(rhs, Var):
        raise RuleError("lcv: binding right-hand side is not a variable")
    if rhs.name == occ.name:
        raise RuleError("lcv: self-binding")
    if target == lpos + (("letB", occ.name),):
        raise RuleError("lcv: target is the binding itself")
    return replace_at(e, target, Var(rhs.name), sig)


def apply_cp(e: Expr, target, sig: Signature) -> tuple[Expr, str]:
    """Copy a directly bound abstraction to the occurrence at target;
    returns (result, 'cpt'|'cpd') by surface classification of the target."""
    occ = subterm_at(e, target)
    if not isinstance(occ, Var):
        raise RuleError("cp: target is not a variable occurrence")
    lpos = binding_letrec_of(e, target)
    if lpos is None:
        raise RuleError("cp: target variable is not letrec-bound")
    rhs = dict(subterm_at(e, lpos).bindings)[occ.name]
    if not isinstance(rhs, Lam):
        raise RuleError("cp: binding right-hand side is not an abstraction")
    out = apply_cpn(e, target, sig)
    kind = "cpt" if is_surface_context(e, target) else "cpd"
    return out, kind


def apply_ucp(e: Expr, pos, sig: Signature) -> Expr:
    """Inline a once-used binding at its (surface) occurrence and drop it."""
    if not pos or pos[-1][0] != "letB":
        raise RuleError("ucp: position does not name a letrec binding")
    x = pos[-1][1]
    lpos = pos[:-1]
    let = subterm_at(e, lpos)
    s = dict(let.bindings)[x]
    if _occurrences(s, x):
        raise RuleError(f"ucp: {x} occurs in its own binding")
    occs = []
    for y, rhs in let.bindings:
        if y != x:
            occs += [(("letB", y),) + p for p in _occurrences(rhs, x)]
    occs += [(("letIn",),) + p for p in _occurrences(let.body, x)]
    if len(occs) != 1:
        raise RuleError(f"ucp: {x} has {len(occs)} occurrences, need exactly 1")
    rel = occs[0]
    if any(sel[0] == "lamB" for sel in rel[1:]):
        raise RuleError("ucp: the occurrence is inside an abstraction")
    inlined = replace_at(let, rel, s, sig)
    keep = [(y, rhs) for y, rhs in inlined.bindings if y != x]
    return replace_at(e, lpos, mk_letrec(keep, inlined.body), sig)


def lll_measure(e: Expr) -> tuple[int, int]:
    """Termination measure for the letrec-rearrangement family.

    First component: number of letrec nodes.  Second: for each letrec node,
    the number of ancestors reached through an application-function or
    case-scrutinee edge.  Lexicographically strictly decreasing under every
    llet/lapp/lcase step.
    """
    count = 0
    depth_sum = 0
    stack = [(e, 0)]
    while stack:
        t, wd = stack.pop()
        if isinstance(t, Letrec):
            count += 1
            depth_sum += wd
        for sel, c in children(t):
            stack.append((c, wd + 1 if sel[0] in ("appF", "caseS") else wd))
    return count, depth_sum


# ---------------------------------------------------------------------------
# Rule application enumeration

@dataclass(eq=False)
class Application:
    """A concrete rule application at a specific redex."""

    label: str
    anchor: tuple
    _thunk: object
    params: dict = field(default_factory=dict)
    _after: Expr | None = None

    def after(self) -> Expr:
        if self._after is None:
            self._after = self._thunk()
        return self._after


def applications(label: str, e: Expr, sig: Signature) -> list[Application]:
    """All applications of the rule `label` anywhere in e, in preorder.

    Labels: base rules (lbeta, llet, lapp, lcase, case, ndl, ndr, cpn) and
    transformations (ldel, ldelcyc1, ldelcyc2, lcv, cp, cpt, cpd, ucp).
    """
    out: list[Application] = []
    positions = list(subterms(e))

    if label == "lbeta":
        for p, t in positions:
            if isinstance(t, App) and isinstance(t.fun, Lam):
                out.append(Application("lbeta", p, _bind(apply_lbeta, e, p, sig)))
    elif label == "lapp":
        for p, t in positions:
            if isinstance(t, App) and isinstance(t.fun, Letrec):
                out.append(Application("lapp", p, _bind(apply_lapp, e, p, sig)))
    elif label == "lcase":
        for p, t in positions:
            if isinstance(t, Case) and isinstance(t.scrut, Letrec):
                out.append(Application("lcase", p, _bind(apply_lcase, e, p, sig)))
    elif label == "llet":
        for p, t in positions:
            if isinstance(t, Letrec) and p and p[-1][0] in ("letIn", "letB"):
                parent = subterm_at(e, p[:-1])
                if isinstance(parent, Letrec):
                    out.append(Application(
                        "llet", p[:-1], _bind(apply_llet, e, p, sig), {"inner": p}))
    elif label == "case":
        for p, t in positions:
            if not isinstance(t, Case):
                continue
            try:
                after = apply_case_direct(e, p, sig)
                out.append(Application("case", p, lambda a=after: a))
                continue
            except RuleError:
                pass
            try:
                after = apply_case_chain(e, p, sig)
                out.append(Application("case", p, lambda a=after: a))
            except RuleError:
                pass
    elif label in ("ndl", "ndr"):
        which = "left" if label == "ndl" else "right"
        for p, t in positions:
            if isinstance(t, Choice):
                out.append(Application(label, p, _bind(apply_nd, e, p, which, sig)))
    elif label == "cpn":
        for p, t in positions:
            if isinstance(t, Var):
                lpos = binding_letrec_of(e, p)
                if lpos is None or p == lpos + (("letB", t.name),):
                    continue
                try:
                    after = apply_cpn(e, p, sig)
                except RuleError:
                    continue
                out.append(Application("cpn", lpos, lambda a=after: a,
                                       {"target": p}))
    elif label in ("cp", "cpt", "cpd"):
        for p, t in positions:
            if isinstance(t, Var):
                lpos = binding_letrec_of(e, p)
                if lpos is None or p == lpos + (("letB", t.name),):
                    continue
                try:
                    after, kind = apply_cp(e, p, sig)
                except RuleError:
                    continue
                if label in ("cp", kind):
                    out.append(Application(kind, lpos, lambda a=after: a,
                                           {"target": p}))
    elif label == "ldel":
        for p, t in positions:
            if isinstance(t, Letrec):
                for x, _ in t.bindings:
                    bp = p + (("letB", x),)
                    try:
                        after = apply_ldel(e, bp, sig)
                    except RuleError:
                        continue
                    out.append(Application("ldel", p, lambda a=after: a, {"var": x}))
    elif label in ("ldelcyc1", "ldelcyc2", "ldelcyc"):
        for p, t in positions:
            if isinstance(t, Letrec):
                names = [x for x, _ in t.bindings]
                for k in range(1, len(names) + 1):
                    for drop in combinations(names, k):
                        sub = "ldelcyc2" if k == len(names) else "ldelcyc1"
                        if label not in ("ldelcyc", sub):
                            continue
                        try:
                            after = apply_ldelcyc(e, p, drop, sig)
                        except RuleError:
                            continue
                        out.append(Application(sub, p, lambda a=after: a,
                                               {"drop": drop}))
    elif label == "lcv":
        for p, t in positions:
            if isinstance(t, Var):
                try:
                    after = apply_lcv(e, p, sig)
                except (RuleError, KeyError):
                    continue
                lpos = binding_letrec_of(e, p)
                out.append(Application("lcv", lpos, lambda a=after: a, {"target": p}))
    elif label == "ucp":
        for p, t in positions:
            if isinstance(t, Letrec):
                for x, _ in t.bindings:
                    bp = p + (("letB", x),)
                    try:
                        after = apply_ucp(e, bp, sig)
                    except RuleError:
                        continue
                    out.append(Application("ucp", p, lambda a=after: a, {"var": x}))
    else:
        raise ValueError(f"unknown rule label {label}")
    return out


def _bind(fn, *args):
    return lambda: fn(*args)


def steps_of(label: str, e: Expr, sig: Signature,
             redpos=None, std=None) -> list[ReductionStep]:
    """Applications of `label` in e as flagged ReductionSteps.

    flag 'st' for the application that coincides with the standard redex
    (same anchor, alpha-equal result), 'i' for other applications anchored
    at a reduction-context position, 'plain' otherwise.
    """
    if redpos is None:
        redpos = reduction_positions(e)
    if std is None:
        std = standard_redex(e, sig)
    std_keys = set()
    for arm in std.arms():
        if arm is not None:
            std_keys.add((arm.label, arm.pos, alpha_key(arm.after)))
    steps = []
    for app in applications(label, e, sig):
        after = app.after()
        if (app.label, app.anchor, alpha_key(after)) in std_keys or (
            app.label in ("cpt", "cpd")
            and ("cpn", app.anchor, alpha_key(after)) in std_keys
        ):
            flag = "st"
        elif app.anchor in redpos:
            flag = "i"
        else:
            flag = "plain"
        steps.append(ReductionStep(app.label, flag, app.anchor, e, after, app.params))
    return steps


def classify_step(e: Expr, label: str, pos, sig: Signature,
                  which: str | None = None) -> str:
    """Classify the rule application at pos: Standard, Internal, or
    NotInReductionContext (per the internal-reduction definition).

    pos may be the redex anchor, a copy/compression target occurrence, an
    inner letrec (llet), or a binding position (ldel/ucp)."""
    for step in steps_of(label, e, sig):
        names = {step.pos, step.detail.get("target"), step.detail.get("inner")}
        if "var" in step.detail:
            names.add(step.pos + (("letB", step.detail["var"]),))
        if pos in names:
            if which and step.label not in (label, which):
                continue
            return {"st": "Standard", "i": "Internal",
                    "plain": "NotInReductionContext"}[step.flag]
    raise RuleError(f"no {label} redex at {pos}")

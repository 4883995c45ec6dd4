"""Context classes and the maximal reduction-context descent.

Positions are paths of selectors from the root (see syntax.children).  A
position may belong to several classes:

  General    any position
  Weak       built from application-function and case-scrutinee selectors only
  Reduction  weak positions, plus (for a top-level letrec) weak positions of
             the body and of the bindings reached through the needed-variable
             chain
  Surface    any position not under a lambda binder
"""

from __future__ import annotations

from dataclasses import dataclass

from .syntax import (
    App,
    Case,
    Expr,
    Lam,
    Letrec,
    Var,
    _child,
    subterm_at,
)

WEAK_SELECTORS = ("appF", "caseS")


def is_weak_reduction_context(e: Expr, pos) -> bool:
    """True iff every selector on the path is appF or caseS."""
    subterm_at(e, pos)  # raises KeyError on invalid positions
    return all(sel[0] in WEAK_SELECTORS for sel in pos)


def is_surface_context(e: Expr, pos) -> bool:
    """True iff no selector on the path enters a lambda body."""
    subterm_at(e, pos)
    return all(sel[0] != "lamB" for sel in pos)


def weak_spine(e: Expr, prefix=()):
    """Maximal weak descent from e: list of (path, node); last is the endpoint."""
    out = [(prefix, e)]
    t = e
    path = prefix
    while True:
        if isinstance(t, App):
            path = path + (("appF",),)
            t = t.fun
        elif isinstance(t, Case):
            path = path + (("caseS",),)
            t = t.scrut
        else:
            break
        out.append((path, t))
    return out


@dataclass(eq=False)
class Descent:
    """Full record of the maximal reduction-context descent.

    segments: one weak spine per hop — the body spine first (or the root
    spine for non-letrec terms), then one spine per chain binding visited.
    chain: the letrec variables hopped through, in order.
    outcome: 'found' | 'cycle' | 'freevar'.
    """

    segments: list[list[tuple[tuple, Expr]]]
    chain: list[str]
    outcome: str
    endpoint_path: tuple = ()
    endpoint: Expr | None = None

    def events(self):
        """Flattened descent as (path, node) pairs, root to endpoint."""
        for seg in self.segments:
            yield from seg


@dataclass(eq=False)
class MaxRedexLocus:
    """Outcome of the maximal reduction-context search."""

    kind: str  # 'found' | 'cycle' | 'none'
    position: tuple = ()
    subterm: Expr | None = None
    chain: tuple[str, ...] = ()


def descend(e: Expr) -> Descent:
    """Compute the maximal reduction context per the descent rules.

    For a letrec the body's maximal weak context is computed first; if it
    ends at a letrec-bound variable, binding descent follows the chain,
    extending it maximally.  Revisiting a binder is a cycle.
    """
    if isinstance(e, Letrec):
        binds = dict(e.bindings)
        seg = weak_spine(e.body, (("letIn",),))
        segments = [seg]
        chain: list[str] = []
        visited: set[str] = set()
        path, t = seg[-1]
        while isinstance(t, Var) and t.name in binds:
            if t.name in visited:
                return Descent(segments, chain, "cycle", path, t)
            visited.add(t.name)
            chain.append(t.name)
            seg = weak_spine(binds[t.name], (("letB", t.name),))
            segments.append(seg)
            path, t = seg[-1]
        if isinstance(t, Var):
            return Descent(segments, chain, "freevar", path, t)
        return Descent(segments, chain, "found", path, t)
    seg = weak_spine(e)
    path, t = seg[-1]
    if isinstance(t, Var):
        return Descent([seg], [], "freevar", path, t)
    return Descent([seg], [], "found", path, t)


def maximal_reduction_locus(e: Expr) -> MaxRedexLocus:
    d = descend(e)
    if d.outcome == "cycle":
        return MaxRedexLocus("cycle", d.endpoint_path, d.endpoint, tuple(d.chain))
    if d.outcome == "freevar":
        return MaxRedexLocus("none", d.endpoint_path, d.endpoint, tuple(d.chain))
    return MaxRedexLocus("found", d.endpoint_path, d.endpoint, tuple(d.chain))


def reduction_positions(e: Expr) -> set[tuple]:
    """All positions that are the hole of some reduction context of e.

    Computed from the context grammar directly: the weak positions of e;
    for a top-level letrec also the weak positions of the body and, along
    the needed-variable chain, the weak positions of each visited binding
    (any chain prefix is a valid context, so every visited binding
    contributes its whole spine).
    """
    out: set[tuple] = set()
    if isinstance(e, Letrec):
        out.add(())
        binds = dict(e.bindings)
        seg = weak_spine(e.body, (("letIn",),))
        out.update(p for p, _ in seg)
        visited: set[str] = set()
        path, t = seg[-1]
        while isinstance(t, Var) and t.name in binds and t.name not in visited:
            visited.add(t.name)
            seg = weak_spine(binds[t.name], (("letB", t.name),))
            out.update(p for p, _ in seg)
            path, t = seg[-1]
        return out
    out.update(p for p, _ in weak_spine(e))
    return out


def weak_arg_count(descent: Descent, below: tuple | None = None) -> int:
    """Number of appF selectors crossed on the descent, optionally only at
    positions strictly deeper than `below` (path-prefix order)."""
    n = 0
    for path, node in descent.events():
        if isinstance(node, App):
            if below is None or (len(path) >= len(below) and path[: len(below)] == below):
                n += 1
    return n


def deepest_case_event(descent: Descent):
    """Last Case node on the descent path, or None."""
    last = None
    for path, node in descent.events():
        if isinstance(node, Case):
            last = (path, node)
    return last


def binder_of(e: Expr, pos) -> tuple | None:
    """Position of the construct binding the variable occurrence at pos.

    Innermost binder wins (conventional terms have no shadowing anyway).
    Returns the binder's position, or None for a free occurrence.
    """
    t = subterm_at(e, pos)
    if not isinstance(t, Var):
        raise ValueError("position does not hold a variable")
    name = t.name
    node = e
    walked: tuple = ()
    best = None
    for sel in pos:
        if isinstance(node, Letrec) and any(x == name for x, _ in node.bindings):
            best = walked
        elif isinstance(node, Lam) and node.binder == name:
            best = walked
        elif isinstance(node, Case) and sel[0] == "caseA":
            for alt in node.alts:
                if alt.constr == sel[1] and name in alt.params:
                    best = walked
        node = _child(node, sel)
        walked = walked + (sel,)
    return best


def binding_letrec_of(e: Expr, pos) -> tuple | None:
    """Position of the letrec binding the variable occurrence at pos, or None
    if the occurrence is free or bound by a lambda/pattern."""
    b = binder_of(e, pos)
    if b is None:
        return None
    return b if isinstance(subterm_at(e, b), Letrec) else None

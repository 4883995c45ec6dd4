"""Reduction-diagram machinery: a DSL for rewrite rules over reduction
sequences, generation of fork/commute instances over enumerated terms,
closure search, complete-set verification, and diagram proposal.

DSL, one rule per line:   LHS ~> RHS
  atoms     flag,rule[mult] joined by " . "; flags i|st|either; a bare rule
            name means the plain (unflagged) transform
  families  lll = {llet,lapp,lcase}; cp = {cpt,cpd}
  mults     + (one or more) * (any number) ? (at most one)
  metavars  any other name, constrained by an optional "| a in {...}" suffix
            (default: any base-calculus label)

Commuting rules read in application order from the transformed term:
  red . st,a1 ... ~> st,b1 ... . i,c1 ...
Forking rules list the standard steps from the fork source in application
order, then the transform atom:
  st,a1 ... . red  ~>  red-side atoms . st atoms-from-the-other-branch
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .contexts import reduction_positions
from .reduction import (
    BASE_LABELS,
    LLL_LABELS,
    ReductionStep,
    converges_set_cached,
    standard_redex,
)
from .syntax import Expr, Letrec, Signature, alpha_key, pretty, subterms
from .termgen import EnumParams, enumerate_terms
from .transforms import TRANSFORM_LABELS, steps_of

FAMILIES = {"lll": frozenset(LLL_LABELS), "cp": frozenset(("cpt", "cpd"))}
KNOWN_LABELS = frozenset(BASE_LABELS) | frozenset(TRANSFORM_LABELS)


class DiagramSyntaxError(Exception):
    pass


@dataclass(frozen=True)
class SeqAtom:
    flag: str            # 'st' | 'i' | 'either' | 'plain'
    rule: tuple          # ('lab', name) | ('fam', name) | ('var', name)
    mult: str = "1"      # '1' | '+' | '*' | '?'

    def __str__(self):
        name = self.rule[1] + {"1": "", "+": "+", "*": "*", "?": "?"}[self.mult]
        return name if self.flag == "plain" else f"{self.flag},{name}"


@dataclass(frozen=True)
class DiagramRule:
    kind: str            # 'commute' | 'fork'
    lhs: tuple[SeqAtom, ...]
    rhs: tuple[SeqAtom, ...]
    constraints: tuple = ()

    def constraint_map(self):
        return dict(self.constraints)

    def __str__(self):
        s = " . ".join(map(str, self.lhs)) + " ~> " + " . ".join(map(str, self.rhs))
        for v, labs in self.constraints:
            s += f" | {v} in {{{','.join(sorted(labs))}}}"
        return s


def _parse_atom(tok: str) -> SeqAtom:
    tok = tok.strip()
    m = re.fullmatch(r"(?:(st|i|either),)?([A-Za-z]\w*)([+*?])?", tok)
    if not m:
        raise DiagramSyntaxError(f"bad atom {tok!r}")
    flag = m.group(1) or "plain"
    name = m.group(2)
    mult = m.group(3) or "1"
    if name in FAMILIES:
        rule = ("fam", name)
    elif name in KNOWN_LABELS:
        rule = ("lab", name)
    else:
        rule = ("var", name)
    if mult in ("+", "*") and rule[0] == "lab":
        rule = ("fam", name) if name in FAMILIES else rule
    return SeqAtom(flag, rule, mult)


def parse_diagram(line: str, kind: str) -> DiagramRule:
    body = line.strip()
    constraints = []
    if "|" in body:
        body, _, cons = body.partition("|")
        m = re.fullmatch(r"\s*(\w+)\s+in\s+\{([^}]*)\}\s*", cons)
        if not m:
            raise DiagramSyntaxError(f"bad constraint in {line!r}")
        labs = frozenset(x.strip() for x in m.group(2).split(","))
        unknown = labs - KNOWN_LABELS
        if unknown:
            raise DiagramSyntaxError(f"unknown labels {sorted(unknown)} in {line!r}")
        constraints.append((m.group(1), labs))
    if "~>" not in body:
        raise DiagramSyntaxError(f"missing ~> in {line!r}")
    lhs_s, _, rhs_s = body.partition("~>")
    lhs = tuple(_parse_atom(t) for t in lhs_s.split(" . ") if t.strip())
    rhs = tuple(_parse_atom(t) for t in rhs_s.split(" . ") if t.strip())
    if not lhs:
        raise DiagramSyntaxError(f"empty lhs in {line!r}")
    rule = DiagramRule(kind, lhs, rhs, tuple(constraints))
    _validate_shape(rule, line)
    return rule


def _is_transform_atom(a: SeqAtom) -> bool:
    return a.flag != "st"


def _validate_shape(rule: DiagramRule, line: str):
    if rule.kind == "commute":
        if not _is_transform_atom(rule.lhs[0]):
            raise DiagramSyntaxError(f"commuting lhs must start with the transform: {line!r}")
        if any(_is_transform_atom(a) for a in rule.lhs[1:]):
            raise DiagramSyntaxError(f"commuting lhs tail must be standard: {line!r}")
        if rule.lhs[0].mult != "1":
            raise DiagramSyntaxError(f"transform atom cannot carry a multiplicity: {line!r}")
    else:
        if not _is_transform_atom(rule.lhs[-1]):
            raise DiagramSyntaxError(f"forking lhs must end with the transform: {line!r}")
        if any(_is_transform_atom(a) for a in rule.lhs[:-1]):
            raise DiagramSyntaxError(f"forking lhs head must be standard: {line!r}")
        seen_st = False
        for a in rule.rhs:
            if a.flag == "st":
                seen_st = True
            elif seen_st:
                raise DiagramSyntaxError(
                    f"forking rhs must list transform atoms before standard ones: {line!r}")


def parse_diagram_file(text: str, kind: str) -> list[DiagramRule]:
    rules = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            rules.append(parse_diagram(line, kind))
    return rules


def load_diagram_file(path) -> list[DiagramRule]:
    from pathlib import Path

    p = Path(path)
    kind = "fork" if p.suffix == ".fork" else "commute"
    return parse_diagram_file(p.read_text(), kind)


def shipped_diagram_path(name: str):
    from pathlib import Path

    return Path(__file__).parent / "diagrams" / name


# ---------------------------------------------------------------------------
# Atom/step matching

_FLAG_OK = {
    "st": ("st",),
    "i": ("i", "plain"),
    "either": ("st", "i", "plain"),
    "plain": ("i", "plain"),
}


def atom_matches(atom: SeqAtom, step: ReductionStep, bindings: dict,
                 constraints: dict):
    """Return extended bindings if step matches atom, else None."""
    if step.flag not in _FLAG_OK[atom.flag]:
        return None
    tag, name = atom.rule
    if tag == "lab":
        return bindings if step.label == name else None
    if tag == "fam":
        return bindings if step.label in FAMILIES[name] else None
    bound = bindings.get(name)
    if bound is not None:
        return bindings if step.label == bound else None
    allowed = constraints.get(name, BASE_LABELS)
    if step.label in allowed:
        return {**bindings, name: step.label}
    return None


def match_atom_seq(atoms, steps, bindings, constraints):
    """Yield bindings for ways `atoms` (with multiplicities) consume exactly
    `steps`."""
    if not atoms:
        if not steps:
            yield bindings
        return
    atom, rest = atoms[0], atoms[1:]
    lo, hi = {"1": (1, 1), "?": (0, 1), "+": (1, len(steps)),
              "*": (0, len(steps))}[atom.mult]
    for reps in range(lo, min(hi, len(steps)) + 1):
        b = bindings
        ok = True
        for j in range(reps):
            b = atom_matches(atom, steps[j], b, constraints)
            if b is None:
                ok = False
                break
        if ok:
            yield from match_atom_seq(rest, steps[reps:], b, constraints)


# ---------------------------------------------------------------------------
# Step generation during closure search

class _Search:
    """Shared context for one closure search: term-step caches and limits."""

    def __init__(self, sig: Signature, depth_bound: int, step_bound: int = 200):
        self.sig = sig
        self.depth_bound = depth_bound
        self.step_bound = step_bound
        self._std = {}
        self._tr = {}

    def std_steps(self, e: Expr):
        key = id(e)
        entry = self._std.get(key)
        if entry is None:
            r = standard_redex(e, self.sig)
            result = (r, [a for a in r.arms() if a is not None])
            self._std[key] = (result, e)  # keep e alive for id stability
            return result
        return entry[0]

    def transform_steps(self, e: Expr, label: str):
        key = (id(e), label)
        hit = self._tr.get(key)
        if hit is None:
            redpos = reduction_positions(e)
            std, _ = self.std_steps(e)
            steps = steps_of(label, e, self.sig, redpos, std)
            self._tr[key] = (steps, e)
            return steps
        return hit[0]

    def atom_options(self, atom: SeqAtom, e: Expr, bindings: dict,
                     constraints: dict):
        """Concrete next steps from e matching atom, with updated bindings."""
        out = []
        if atom.flag == "st":
            _, arms = self.std_steps(e)
            for s in arms:
                b = atom_matches(atom, s, bindings, constraints)
                if b is not None:
                    out.append((s, b))
            return out
        tag, name = atom.rule
        if tag == "lab":
            labels = [name]
        elif tag == "fam":
            labels = list(FAMILIES[name])
        else:
            bound = bindings.get(name)
            labels = [bound] if bound else sorted(constraints.get(name, BASE_LABELS))
        for lab in labels:
            for s in self.transform_steps(e, lab):
                b = atom_matches(atom, s, bindings, constraints)
                if b is not None:
                    out.append((s, b))
        return out


def realize_sequence(search: _Search, atoms, start: Expr, target_key,
                     bindings, constraints, budget: int,
                     forbid_identity_of=None):
    """Depth-first search for concrete steps from `start` instantiating
    `atoms` and ending alpha-equal to target_key.  Returns the step list or
    None.  forbid_identity_of: a (label-ish, after-key) the realization must
    not consist of alone (the excluded extreme case)."""

    def rec(i, term, b, acc, budget):
        if i == len(atoms):
            if alpha_key(term) != target_key:
                return None
            if forbid_identity_of is not None and len(acc) == 1:
                lab, akey = forbid_identity_of
                s = acc[0]
                if s.flag != "st" and alpha_key(s.after) == akey:
                    return None
            return list(acc)
        atom = atoms[i]
        lo, hi = {"1": (1, 1), "?": (0, 1), "+": (1, budget),
                  "*": (0, budget)}[atom.mult]

        def consume(reps_left, term2, b2, acc2, budget2, minimum):
            if minimum <= 0:
                r = rec(i + 1, term2, b2, acc2, budget2)
                if r is not None:
                    return r
            if reps_left <= 0 or budget2 <= 0:
                return None
            for s, b3 in search.atom_options(atom, term2, b2, constraints):
                r = consume(reps_left - 1, s.after, b3, acc2 + [s],
                            budget2 - 1, minimum - 1)
                if r is not None:
                    return r
            return None

        return consume(hi, term, b, acc, budget, lo)

    return rec(0, start, bindings, [], budget)


# ---------------------------------------------------------------------------
# Instances

@dataclass(eq=False)
class ForkInstance:
    """A fork: from source, one standard step and one transform step."""

    source: Expr
    std_branch: ReductionStep
    red_branch: ReductionStep

    def describe(self):
        return (f"{pretty(self.source)}  -st,{self.std_branch.label}-> "
                f"{pretty(self.std_branch.after)}   -{self.red_branch.label}-> "
                f"{pretty(self.red_branch.after)}")


@dataclass(eq=False)
class CommuteInstance:
    """A transform step followed by the standard reduction of its result."""

    source: Expr
    red_step: ReductionStep

    def describe(self):
        return (f"{pretty(self.source)}  -{self.red_step.label}-> "
                f"{pretty(self.red_step.after)}")


def internal_transform_steps(e: Expr, red: str, sig: Signature,
                             include_plain: bool = False):
    flags = ("i", "plain") if include_plain else ("i",)
    return [s for s in steps_of(red, e, sig) if s.flag in flags]


def find_forks(e: Expr, red: str, sig: Signature,
               include_plain: bool = False) -> list[ForkInstance]:
    """All (standard step, internal red step) pairs from e."""
    std = standard_redex(e, sig)
    if std.kind == "none":
        return []
    reds = internal_transform_steps(e, red, sig, include_plain)
    return [ForkInstance(e, arm, r)
            for r in reds for arm in std.arms() if arm is not None]


def find_commutes(e: Expr, red: str, sig: Signature,
                  include_plain: bool = False) -> list[CommuteInstance]:
    return [CommuteInstance(e, r)
            for r in internal_transform_steps(e, red, sig, include_plain)]


# ---------------------------------------------------------------------------
# Closure / coverage

@dataclass(eq=False)
class MatchResult:
    status: str  # 'matched' | 'counterexample' | 'bound-limited' | 'value-preserved'
    diagram: DiagramRule | None = None
    prolonged: bool = False
    witness: dict = field(default_factory=dict)
    note: str = ""


def close_fork(fork: ForkInstance, diagrams, sig: Signature,
               depth_bound: int, step_bound: int = 200) -> MatchResult:
    """Check one fork instance against a forking diagram set.

    Walks the standard continuation from the fork source (the instance's arm
    first, branching existentially-per-path at later nd steps is not enough:
    every standard path must be covered), trying at each prefix length every
    diagram whose lhs matches; prefix extension is the prolongation of the
    standard side.
    """
    diagrams = [d for d in diagrams if d.kind == "fork"]
    search = _Search(sig, depth_bound, step_bound)
    t = fork.red_branch.after

    def try_match(steps):
        for diag in diagrams:
            cons = diag.constraint_map()
            b0 = atom_matches(diag.lhs[-1], fork.red_branch, {}, cons)
            if b0 is None:
                continue
            for b in match_atom_seq(list(diag.lhs[:-1]), steps, b0, cons):
                tr_atoms = [a for a in diag.rhs if a.flag != "st"]
                st_atoms = [a for a in diag.rhs if a.flag == "st"]
                s_end = steps[-1].after
                # join: transform steps from the standard side's endpoint,
                # standard steps from the transformed term; endpoints equal
                for w_steps in _joins(search, tr_atoms, s_end, st_atoms, t,
                                      b, cons, depth_bound):
                    return MatchResult(
                        "matched", diag, prolonged=len(steps) > 1,
                        witness={"lhs": [s.label for s in steps],
                                 "s_side": [s.label for s in w_steps[0]],
                                 "t_side": [s.label for s in w_steps[1]],
                                 "lhs_steps": list(steps),
                                 "s_steps": list(w_steps[0]),
                                 "t_steps": list(w_steps[1])})
        return None

    def walk(term, steps, depth):
        m = try_match(steps)
        if m is not None:
            return m
        r, arms = search.std_steps(term)
        if r.kind == "none":
            # a finite standard prefix ended with no diagram applying and no
            # prolongation possible: the set does not cover this sequence
            return MatchResult(
                "counterexample",
                note=f"uncovered fork: standard side "
                     f"{[s.label for s in steps]} ends {r.stuck_class}")
        if depth >= depth_bound:
            return MatchResult("bound-limited", note="prolongation bound hit")
        result = None
        for arm in arms:
            m = walk(arm.after, steps + [arm], depth + 1)
            if m.status in ("counterexample", "bound-limited"):
                return m
            if result is None or (result.status != "matched" and m.status == "matched"):
                result = m
        return result

    return walk(fork.std_branch.after, [fork.std_branch], 1)


def _joins(search, tr_atoms, s_end, st_atoms, t, bindings, cons, depth_bound):
    """Yield (s-side steps, t-side steps) realizations meeting alpha-equal."""
    # realize the t-side standard runs first (they are nearly deterministic),
    # then check the transform side against the reached endpoint
    for t_steps, b in _st_runs(search, st_atoms, t, bindings, cons, depth_bound):
        target = alpha_key(t_steps[-1].after) if t_steps else alpha_key(t)
        got = realize_sequence(search, tr_atoms, s_end, target, b, cons,
                               depth_bound)
        if got is not None:
            yield (got, t_steps)


def _st_runs(search, atoms, start, bindings, cons, budget):
    """All standard-step realizations of `atoms` from start (with nd arms)."""
    if not atoms:
        yield ([], bindings)
        return
    atom, rest = atoms[0], atoms[1:]
    lo, hi = {"1": (1, 1), "?": (0, 1), "+": (1, budget), "*": (0, budget)}[atom.mult]

    def rec(reps_done, term, b, acc):
        if reps_done >= lo:
            for tail, b2 in _st_runs(search, rest, term, b, cons,
                                     budget - len(acc)):
                yield (acc + tail, b2)
        if reps_done < hi and len(acc) < budget:
            for s, b2 in search.atom_options(atom, term, b, cons):
                yield from rec(reps_done + 1, s.after, b2, acc + [s])

    yield from rec(0, start, bindings, [])


def check_commuting(source: Expr, red_step: ReductionStep, diagrams,
                    sig: Signature, depth_bound: int,
                    step_bound: int = 200,
                    forced: list[ReductionStep] | None = None) -> MatchResult:
    """Check one commuting instance: source -red-> u, then u's standard
    reduction.  `forced` optionally pins the first standard steps (a given
    sequence); beyond them the walk explores/prolongs every path."""
    diagrams = [d for d in diagrams if d.kind == "commute"]
    search = _Search(sig, depth_bound, step_bound)
    u = red_step.after
    u_key = alpha_key(u)
    red_after_key = alpha_key(red_step.after)

    def try_match(steps):
        for diag in diagrams:
            cons = diag.constraint_map()
            b0 = atom_matches(diag.lhs[0], red_step, {}, cons)
            if b0 is None:
                continue
            for b in match_atom_seq(list(diag.lhs[1:]), steps, b0, cons):
                target = alpha_key(steps[-1].after) if steps else u_key
                guard = None
                if not steps:
                    guard = (red_step.label, red_after_key)
                got = realize_sequence(search, list(diag.rhs), source, target,
                                       b, cons, depth_bound,
                                       forbid_identity_of=guard)
                if got is not None:
                    return MatchResult(
                        "matched", diag, prolonged=len(steps) > 0,
                        witness={"lhs": [s.label for s in steps],
                                 "rhs": [s.label for s in got],
                                 "lhs_steps": list(steps),
                                 "rhs_steps": list(got)})
        return None

    def walk(term, steps, depth, forced_rest):
        m = try_match(steps)
        if m is not None:
            return m
        r, arms = search.std_steps(term)
        if r.kind == "none":
            if not steps:
                # the sequence is the transform step alone and cannot be
                # prolonged: nothing for diagrams to act on.  For a value
                # endpoint the transported side must realize the nd-count.
                if r.stuck_class == "Value":
                    dset, exhausted = converges_set_cached(source, sig, step_bound)
                    if 0 in dset:
                        return MatchResult("value-preserved", note="nd-count 0")
                    if exhausted:
                        return MatchResult("bound-limited",
                                           note="convergence bound hit")
                    return MatchResult(
                        "counterexample",
                        note="result is a value; the source does not converge")
                return MatchResult("value-preserved",
                                   note=f"no standard step ({r.stuck_class})")
            return MatchResult(
                "counterexample",
                note=f"uncovered sequence: standard side "
                     f"{[s.label for s in steps]} ends {r.stuck_class}")
        if depth >= depth_bound:
            return MatchResult("bound-limited", note="prolongation bound hit")
        if forced_rest:
            nxt, rest = forced_rest[0], forced_rest[1:]
            match_arm = None
            for arm in arms:
                if arm.label == nxt.label and alpha_key(arm.after) == alpha_key(nxt.after):
                    match_arm = arm
                    break
            if match_arm is None:
                raise ValueError("forced step is not a standard step here")
            return walk(match_arm.after, steps + [match_arm], depth + 1, rest)
        result = None
        for arm in arms:
            m = walk(arm.after, steps + [arm], depth + 1, None)
            if m.status in ("counterexample", "bound-limited"):
                return m
            if result is None or (result.status != "matched" and m.status == "matched"):
                result = m
        return result

    return walk(u, [], 0, forced or [])


def check_commuting_seq(steps, diagrams, sig: Signature, depth_bound: int,
                        step_bound: int = 200) -> MatchResult:
    """Check a given reduction sequence: a transform step followed by
    standard steps.  The given standard steps are followed as written;
    coverage may prolong past them."""
    if not steps or steps[0].flag == "st":
        raise ValueError("sequence must start with a transform step")
    red, rest = steps[0], list(steps[1:])
    if any(s.flag != "st" for s in rest):
        raise ValueError("sequence tail must be standard steps")
    return check_commuting(red.before, red, diagrams, sig, depth_bound,
                           step_bound, forced=rest)


# ---------------------------------------------------------------------------
# Complete-set verification

@dataclass(eq=False)
class CheckReport:
    red: str
    kind: str
    diagrams: list
    instances_checked: int = 0
    matches: dict = field(default_factory=dict)  # diagram text -> count
    counterexamples: list = field(default_factory=list)
    bound_limited: list = field(default_factory=list)
    value_preserved: int = 0
    prolongations_used: int = 0
    terms_scanned: int = 0
    records: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.counterexamples

    def summary(self) -> str:
        lines = [
            f"red={self.red} kind={self.kind} terms={self.terms_scanned} "
            f"instances={self.instances_checked}",
        ]
        for d in self.diagrams:
            lines.append(f"  {self.matches.get(str(d), 0):7d}  {d}")
        lines.append(f"  value-preservation discharges: {self.value_preserved}")
        lines.append(f"  prolongations used: {self.prolongations_used}")
        lines.append(f"  bound-limited: {len(self.bound_limited)}")
        lines.append(f"  counterexamples: {len(self.counterexamples)}")
        return "\n".join(lines)


def _might_have(red: str, e: Expr) -> bool:
    if red in ("llet", "ldel", "ldelcyc1", "ldelcyc2", "ldelcyc", "lcv",
               "cp", "cpt", "cpd", "ucp", "cpn", "lapp", "lcase"):
        return any(isinstance(t, Letrec) for _, t in subterms(e))
    return True


def verify_complete_set(red: str, diagrams, sig: Signature, size_bound: int,
                        depth_bound: int, enum_params: EnumParams | None = None,
                        step_bound: int = 200, max_counterexamples: int = 10,
                        terms=None, record_instances: bool = False) -> CheckReport:
    """Enumerate closed terms, generate every internal fork/commute instance
    of `red`, and close each against the diagram set."""
    kind = diagrams[0].kind if diagrams else "fork"
    report = CheckReport(red, kind, list(diagrams))
    if terms is None:
        p = enum_params or EnumParams(sig, size_bound)
        terms = enumerate_terms(p)
    for e in terms:
        report.terms_scanned += 1
        if not _might_have(red, e):
            continue
        if kind == "fork":
            instances = find_forks(e, red, sig)
            for inst in instances:
                report.instances_checked += 1
                m = close_fork(inst, diagrams, sig, depth_bound, step_bound)
                _tally(report, inst, m, record_instances)
                if len(report.counterexamples) >= max_counterexamples:
                    return report
        else:
            for inst in find_commutes(e, red, sig):
                report.instances_checked += 1
                m = check_commuting(inst.source, inst.red_step, diagrams, sig,
                                    depth_bound, step_bound)
                _tally(report, inst, m, record_instances)
                if len(report.counterexamples) >= max_counterexamples:
                    return report
    return report


def _tally(report: CheckReport, inst, m: MatchResult,
           record_instances: bool = False):
    if record_instances:
        rec = {"instance": inst.describe(), "status": m.status}
        if m.status == "matched":
            rec["diagram"] = str(m.diagram)
            rec["witness"] = {k: v for k, v in m.witness.items()
                              if not k.endswith("_steps")}
        else:
            rec["note"] = m.note
        report.records.append(rec)
    if m.status == "matched":
        key = str(m.diagram)
        report.matches[key] = report.matches.get(key, 0) + 1
        if m.prolonged:
            report.prolongations_used += 1
    elif m.status == "value-preserved":
        report.value_preserved += 1
    elif m.status == "bound-limited":
        report.bound_limited.append((inst.describe(), m.note))
    else:
        report.counterexamples.append((inst.describe(), m.note))


# ---------------------------------------------------------------------------
# Proposal mode

def propose_diagrams(red: str, sig: Signature, size_bound: int,
                     depth_bound: int, kind: str = "fork",
                     enum_params: EnumParams | None = None,
                     step_bound: int = 200, rounds: int = 4) -> list[DiagramRule]:
    """Generate-and-test proposal of a complete diagram set for `red`.

    Searches a concrete closure for every instance, generalizes the observed
    closure shapes (metavariable squares, lll-family runs), then re-verifies
    and adds literal diagrams for anything still uncovered.
    """
    p = enum_params or EnumParams(sig, size_bound)
    records = []
    for e in enumerate_terms(p):
        if not _might_have(red, e):
            continue
        if kind == "fork":
            for inst in find_forks(e, red, sig):
                rec = _concrete_fork_closure(inst, sig, depth_bound, step_bound)
                if rec is not None:
                    records.append(rec)
        else:
            for inst in find_commutes(e, red, sig):
                rec = _concrete_commute_closure(inst, sig, depth_bound, step_bound)
                if rec is not None:
                    records.append(rec)
    candidates = _generalize(red, kind, records)
    for _ in range(rounds):
        rep = verify_complete_set(red, candidates, sig, size_bound, depth_bound,
                                  enum_params=p, step_bound=step_bound,
                                  max_counterexamples=50)
        if rep.ok and not rep.bound_limited:
            break
        extra = set()
        for e in enumerate_terms(p):
            if not _might_have(red, e):
                continue
            insts = (find_forks(e, red, sig) if kind == "fork"
                     else find_commutes(e, red, sig))
            for inst in insts:
                if kind == "fork":
                    m = close_fork(inst, candidates, sig, depth_bound, step_bound)
                else:
                    m = check_commuting(inst.source, inst.red_step, candidates,
                                        sig, depth_bound, step_bound)
                if m.status in ("counterexample", "bound-limited"):
                    rec = (_concrete_fork_closure(inst, sig, depth_bound, step_bound)
                           if kind == "fork" else
                           _concrete_commute_closure(inst, sig, depth_bound,
                                                     step_bound))
                    if rec is not None:
                        extra.add(_literal_rule(red, kind, rec))
        if not extra:
            break
        candidates = candidates + sorted(extra, key=str)
    return candidates


def _std_paths(search, term, acc, depth_bound):
    """Standard-step prefixes from term, shortest first (breadth-first)."""
    level = [(term, list(acc))]
    for _ in range(depth_bound + 1):
        nxt = []
        for cur, steps in level:
            yield steps, cur
            if len(steps) - len(acc) < depth_bound:
                _, arms = search.std_steps(cur)
                for arm in arms:
                    nxt.append((arm.after, steps + [arm]))
        level = nxt
        if not level:
            return


def _red_seqs(search, term, k, red_label):
    if k == 0:
        yield ([], term)
        return
    for s in search.transform_steps(term, red_label):
        for tail, end in _red_seqs(search, s.after, k - 1, red_label):
            yield ([s] + tail, end)


def _st_seqs(search, term, k):
    if k == 0:
        yield ([], term)
        return
    _, arms = search.std_steps(term)
    for arm in arms:
        for tail, end in _st_seqs(search, arm.after, k - 1):
            yield ([arm] + tail, end)


def _concrete_fork_closure(inst: ForkInstance, sig, depth_bound, step_bound):
    """A small (lhs labels, transform count, t-side labels) closing the fork."""
    search = _Search(sig, depth_bound, step_bound)
    t = inst.red_branch.after
    red_label = inst.red_branch.label
    for lhs_steps, s_end in _std_paths(search, inst.std_branch.after,
                                       [inst.std_branch], depth_bound - 1):
        for r in range(0, 3):
            for rs, rend in _red_seqs(search, s_end, r, red_label):
                rk = alpha_key(rend)
                for m in range(0, depth_bound + 1):
                    for ss, send in _st_seqs(search, t, m):
                        if alpha_key(send) == rk:
                            return ("fork", tuple(s.label for s in lhs_steps),
                                    r, tuple(s.label for s in ss))
    return None


def _concrete_commute_closure(inst: CommuteInstance, sig, depth_bound, step_bound):
    """A small closure record for a commuting instance, or None."""
    search = _Search(sig, depth_bound, step_bound)
    u = inst.red_step.after
    red_label = inst.red_step.label
    for lhs_steps, endpoint in _std_paths(search, u, [], depth_bound):
        tkey = alpha_key(endpoint)
        for m in range(0, depth_bound + 1):
            for ss, send in _st_seqs(search, inst.source, m):
                for r in range(0, 3):
                    if not lhs_steps and m == 0 and r == 1:
                        continue  # the excluded extreme case
                    for rs, rend in _red_seqs(search, send, r, red_label):
                        if alpha_key(rend) == tkey:
                            return ("commute",
                                    tuple(s.label for s in lhs_steps),
                                    tuple(s.label for s in ss), r)
    return None


def _literal_rule(red: str, kind: str, rec) -> DiagramRule:
    if kind == "fork":
        _, lhs_labels, r, t_labels = rec
        lhs = tuple(SeqAtom("st", ("lab", l)) for l in lhs_labels) + (
            SeqAtom("i", ("lab", red)),)
        rhs = tuple(SeqAtom("i", ("lab", red)) for _ in range(r)) + tuple(
            SeqAtom("st", ("lab", l)) for l in t_labels)
        return DiagramRule("fork", lhs, rhs)
    _, lhs_labels, st_labels, r = rec
    lhs = (SeqAtom("i", ("lab", red)),) + tuple(
        SeqAtom("st", ("lab", l)) for l in lhs_labels)
    rhs = tuple(SeqAtom("st", ("lab", l)) for l in st_labels) + tuple(
        SeqAtom("i", ("lab", red)) for _ in range(r if isinstance(r, int) else 0))
    return DiagramRule("commute", lhs, rhs)


def _generalize(red: str, kind: str, records) -> list[DiagramRule]:
    """Fold concrete closure records into candidate diagram rules."""
    rules: list[DiagramRule] = []
    seen = set()

    def add(rule):
        if str(rule) not in seen:
            seen.add(str(rule))
            rules.append(rule)

    red_atom_i = SeqAtom("i", ("lab", red))
    squares = False
    lll_abs = False
    lll_sq = False
    literals = []
    for rec in records:
        if kind == "fork":
            _, lhs_labels, r, t_labels = rec
            if (len(lhs_labels) == 1 and r == 1 and len(t_labels) == 1
                    and lhs_labels[0] == t_labels[0]):
                squares = True
                continue
            if lhs_labels and all(l in LLL_LABELS for l in lhs_labels):
                if r == 1 and not t_labels:
                    lll_abs = True
                    continue
                if r == 1 and all(l in LLL_LABELS for l in t_labels):
                    lll_sq = True
                    continue
            literals.append(rec)
        else:
            _, lhs_labels, st_labels, r = rec
            if (len(lhs_labels) == 1 and r == 1 and len(st_labels) == 1
                    and lhs_labels[0] == st_labels[0]):
                squares = True
                continue
            if not lhs_labels and st_labels and all(
                    l in LLL_LABELS for l in st_labels) and r == 1:
                lll_abs = True
                continue
            if (lhs_labels and all(l in LLL_LABELS for l in lhs_labels)
                    and all(l in LLL_LABELS for l in st_labels) and r == 1):
                lll_sq = True
                continue
            literals.append(rec)

    var_a = SeqAtom("st", ("var", "a"))
    lll_plus = SeqAtom("st", ("fam", "lll"), "+")
    lll_star = SeqAtom("st", ("fam", "lll"), "*")
    if kind == "fork":
        if squares:
            add(DiagramRule("fork", (var_a, red_atom_i), (red_atom_i, var_a)))
        if lll_sq:
            add(DiagramRule("fork", (lll_plus, red_atom_i), (red_atom_i, lll_star)))
        if lll_abs:
            add(DiagramRule("fork", (lll_plus, red_atom_i), (red_atom_i,)))
    else:
        if squares:
            add(DiagramRule("commute", (red_atom_i, var_a), (var_a, red_atom_i)))
        if lll_abs:
            add(DiagramRule("commute", (red_atom_i,), (lll_plus, red_atom_i)))
        if lll_sq:
            add(DiagramRule("commute", (red_atom_i, lll_plus), (lll_star, red_atom_i)))
    for rec in literals:
        add(_literal_rule(red, kind, rec))
    return rules


# ---------------------------------------------------------------------------
# Meta-rewriting of reduction sequences

def normalize_sequence(source: Expr, steps: list[ReductionStep], diagrams,
                       sig: Signature, depth_bound: int,
                       max_applications: int = 50):
    """Iteratively rewrite a reduction sequence with a commuting diagram set
    until no transform step precedes a standard step.

    Returns (steps, applications, normalized, measure_violations); the
    measure is (number of transform steps, sequence length) and violations
    are recorded, not fatal.
    """
    diagrams = [d for d in diagrams if d.kind == "commute"]
    search = _Search(sig, depth_bound)
    cur = list(steps)
    apps = 0
    violations = []

    def measure(ss):
        return (sum(1 for s in ss if s.flag != "st"), len(ss))

    while apps < max_applications:
        idx = next((i for i, s in enumerate(cur)
                    if s.flag != "st" and i + 1 < len(cur)
                    and cur[i + 1].flag == "st"), None)
        if idx is None:
            return cur, apps, True, violations
        red_step = cur[idx]
        rewritten = None
        for take in range(len(cur) - idx - 1, -1, -1):
            segment = cur[idx + 1: idx + 1 + take]
            for diag in diagrams:
                cons = diag.constraint_map()
                b0 = atom_matches(diag.lhs[0], red_step, {}, cons)
                if b0 is None:
                    continue
                for b in match_atom_seq(list(diag.lhs[1:]), segment, b0, cons):
                    target = alpha_key(segment[-1].after) if segment else \
                        alpha_key(red_step.after)
                    guard = (red_step.label, alpha_key(red_step.after)) \
                        if not segment else None
                    got = realize_sequence(search, list(diag.rhs),
                                           red_step.before, target, b, cons,
                                           depth_bound,
                                           forbid_identity_of=guard)
                    if got is not None:
                        rewritten = cur[:idx] + got + cur[idx + 1 + take:]
                        break
                if rewritten:
                    break
            if rewritten:
                break
        if rewritten is None:
            return cur, apps, False, violations
        if measure(rewritten) >= measure(cur):
            violations.append((apps, measure(cur), measure(rewritten)))
        cur = rewritten
        apps += 1
    return cur, apps, False, violations

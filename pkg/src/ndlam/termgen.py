"""Exhaustive enumeration of closed, well-formed terms up to a size bound.

Size is AST node count: a letrec counts 1 plus one per binding.  Binder
names are assigned by scope depth from a fixed pool, so alpha-duplicates can
only arise from letrec binding permutations; those are deduplicated locally
when letrec subterms are built.  Emitted terms are made conventional
(globally distinct binders) on the way out.

Generation is closed by construction: variables are only drawn from the
binders in scope.  The stream is deterministic and restartable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .syntax import (
    Alt,
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
    make_conventional,
)

ALL_FEATURES = frozenset({"choice", "case", "letrec", "constructors"})


@dataclass(eq=False)
class EnumParams:
    """Bounds and toggles for term enumeration.

    max_binders bounds the number of binders in scope at once (lambda,
    letrec and pattern binders together).  Lambdas and applications are
    always enabled; the toggles cover choice, case, letrec, constructors.
    """

    sig: Signature
    max_size: int
    max_letrec_bindings: int = 2
    max_binders: int = 2
    features: frozenset[str] = ALL_FEATURES
    _memo: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.max_size < 1:
            raise ValueError("max_size must be >= 1")
        self.features = frozenset(self.features)
        unknown = self.features - ALL_FEATURES
        if unknown:
            raise ValueError(f"unknown features: {sorted(unknown)}")

    @property
    def pool(self):
        return tuple(f"x{i}" for i in range(1, self.max_binders + 1))


def _splits(total: int, parts: int):
    """All compositions of total into `parts` positive summands."""
    if parts == 1:
        if total >= 1:
            yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _splits(total - first, parts - 1):
            yield (first,) + rest


def terms_of_size(p: EnumParams, n: int, scope: tuple[str, ...]) -> list[Expr]:
    """All terms of exactly size n with free variables drawn from scope."""
    key = (n, scope)
    hit = p._memo.get(key)
    if hit is not None:
        return hit
    sig = p.sig
    out: list[Expr] = []
    if n == 1:
        out.extend(Var(x) for x in scope)
        if "constructors" in p.features:
            for cons in sig.types.values():
                out.extend(ConstrApp(c, ()) for c, _ in cons)
    else:
        if "constructors" in p.features:
            for cons in sig.types.values():
                for c, ar in cons:
                    for k in range(1, ar + 1):
                        if n - 1 < k:
                            continue
                        for sizes in _splits(n - 1, k):
                            _product_into(
                                out, p, sizes, scope,
                                lambda args, c=c: ConstrApp(c, tuple(args)))
        if len(scope) < p.max_binders:
            binder = p.pool[len(scope)]
            for body in terms_of_size(p, n - 1, scope + (binder,)):
                out.append(Lam(binder, body))
        if "choice" in p.features and n >= 3:
            for sizes in _splits(n - 1, 2):
                _product_into(out, p, sizes, scope, lambda ab: Choice(*ab))
        if "case" in p.features:
            for tname, cons in sig.types.items():
                params_needed = max(ar for _, ar in cons)
                if len(scope) + params_needed > p.max_binders:
                    continue
                parts = 1 + len(cons)
                if n - 1 < parts:
                    continue
                for sizes in _splits(n - 1, parts):
                    scruts = terms_of_size(p, sizes[0], scope)
                    if not scruts:
                        continue
                    alt_choices = []
                    for (c, ar), sz in zip(cons, sizes[1:]):
                        pvars = p.pool[len(scope):len(scope) + ar]
                        rhss = terms_of_size(p, sz, scope + pvars)
                        alt_choices.append([(c, pvars, r) for r in rhss])
                    if not all(alt_choices):
                        continue
                    _cross_alts(out, tname, scruts, alt_choices)
        if n >= 3:
            for sizes in _splits(n - 1, 2):
                for f in terms_of_size(p, sizes[0], scope):
                    if isinstance(f, ConstrApp):
                        continue  # constructor application is its own form
                    for a in terms_of_size(p, sizes[1], scope):
                        out.append(App(f, a))
        if "letrec" in p.features:
            lets: list[Expr] = []
            for k in range(1, p.max_letrec_bindings + 1):
                if len(scope) + k > p.max_binders or n < 1 + k + k + 1:
                    continue
                binders = p.pool[len(scope):len(scope) + k]
                inner = scope + binders
                for sizes in _splits(n - 1 - k, k + 1):
                    _product_into(
                        lets, p, sizes, inner,
                        lambda parts, b=binders: Letrec(
                            tuple(zip(b, parts[:-1])), parts[-1]))
            seen = set()
            for t in lets:
                kk = alpha_key(t)
                if kk not in seen:
                    seen.add(kk)
                    out.append(t)
    p._memo[key] = out
    return out


def _product_into(out, p, sizes, scope, build):
    parts = [terms_of_size(p, s, scope) for s in sizes]
    if not all(parts):
        return
    idx = [0] * len(parts)
    while True:
        out.append(build([parts[i][idx[i]] for i in range(len(parts))]))
        for i in range(len(parts) - 1, -1, -1):
            idx[i] += 1
            if idx[i] < len(parts[i]):
                break
            idx[i] = 0
        else:
            return


def _cross_alts(out, tname, scruts, alt_choices):
    def rec(i, acc):
        if i == len(alt_choices):
            alts = tuple(Alt(c, pv, r) for c, pv, r in acc)
            for s in scruts:
                out.append(Case(tname, s, alts))
            return
        for choice in alt_choices[i]:
            rec(i + 1, acc + [choice])
    rec(0, [])


def enumerate_terms(p: EnumParams):
    """Stream every closed well-formed term within the bounds, smallest
    sizes first, exactly once up to alpha equality."""
    for n in range(1, p.max_size + 1):
        for t in terms_of_size(p, n, ()):
            yield make_conventional(t)


def count_terms(p: EnumParams) -> int:
    return sum(1 for _ in enumerate_terms(p))

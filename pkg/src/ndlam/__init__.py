"""Workbench for a call-by-need lambda calculus with letrec, case,
constructors and erratic choice: evaluator, program transformations,
reduction-diagram checking and a bounded contextual-equivalence falsifier."""

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
    alpha_eq,
    alpha_key,
    free_vars,
    freshen,
    parse,
    parse_signature,
    pretty,
)

__all__ = [
    "Alt", "App", "Case", "Choice", "ConstrApp", "Expr", "Hole", "Lam",
    "Letrec", "Signature", "Var", "alpha_eq", "alpha_key", "free_vars",
    "freshen", "parse", "parse_signature", "pretty",
]

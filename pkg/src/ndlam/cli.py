"""Command-line driver.

Subcommands: parse, reduce, apply, enumerate, check-diagrams, check-equiv.
Exit codes: 0 success / no counterexample, 1 counterexample found,
2 usage or parse error, 3 verdict limited by a step/depth bound.

A JSON config file (path in $NDLAM_CONFIG or --config) provides defaults:
signature, step_bound, size_bound, depth_bound, ctx_size, diagram_dir,
workers, format.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import diagrams as dia
from . import equiv as eq
from .reduction import (
    EvalResult,
    RuleError,
    converges_set,
    format_trace,
    standard_reduce,
)
from .syntax import (
    Signature,
    SyntaxError_,
    free_vars,
    parse,
    parse_signature,
    position_str,
    pretty,
)
from .termgen import ALL_FEATURES, EnumParams, enumerate_terms
from .transforms import (
    apply_cp,
    apply_lcv,
    apply_ldel,
    apply_ldelcyc,
    apply_ucp,
    applications,
    classify_step,
    steps_of,
)

EXIT_OK = 0
EXIT_COUNTEREXAMPLE = 1
EXIT_USAGE = 2
EXIT_BOUND_LIMITED = 3


@dataclass
class Config:
    signature: str | None = None
    step_bound: int = 200
    size_bound: int = 7
    depth_bound: int = 6
    ctx_size: int = 7
    diagram_dir: str | None = None
    workers: int = 1
    format: str = "text"


def load_config(path: str | None) -> Config:
    cfg = Config()
    path = path or os.environ.get("NDLAM_CONFIG")
    if path:
        data = json.loads(Path(path).read_text())
        for k, v in data.items():
            if not hasattr(cfg, k):
                raise SystemExit(f"config: unknown key {k!r}")
            setattr(cfg, k, v)
        for k in ("step_bound", "size_bound", "depth_bound", "ctx_size", "workers"):
            if getattr(cfg, k) <= 0:
                raise SystemExit(f"config: {k} must be positive")
        for k in ("signature", "diagram_dir"):
            v = getattr(cfg, k)
            if v is not None and not Path(v).exists():
                raise SystemExit(f"config: {k} path {v} does not exist")
    return cfg


def parse_position(text: str):
    """Inverse of position_str: `letB(x1).appF` -> selector path."""
    text = text.strip()
    if text in ("", "ε", "eps", "root"):
        return ()
    sels = []
    for tok in text.split("."):
        tok = tok.strip()
        if "(" in tok:
            name, _, arg = tok.partition("(")
            arg = arg.rstrip(")")
            if name == "cArg":
                sels.append((name, int(arg)))
            else:
                sels.append((name, arg))
        else:
            sels.append((tok,))
    return tuple(sels)


def _load_sig(args, cfg: Config) -> Signature:
    path = args.sig or cfg.signature
    if not path:
        raise SystemExit("no signature: pass --sig FILE or set it in the config")
    return parse_signature(Path(path).read_text())


def _read_term(fname: str, sig: Signature):
    text = sys.stdin.read() if fname == "-" else Path(fname).read_text()
    return parse(text, sig)


def _emit_record(obj):
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _step_record(step):
    return {
        "label": step.label,
        "flag": step.flag,
        "pos": position_str(step.pos),
        "before": pretty(step.before),
        "after": pretty(step.after),
    }


# ---------------------------------------------------------------------------
# Subcommands

def cmd_parse(args, cfg):
    sig = _load_sig(args, cfg)
    try:
        e = _read_term(args.file, sig)
    except SyntaxError_ as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(pretty(e))
    return EXIT_OK


def cmd_reduce(args, cfg):
    sig = _load_sig(args, cfg)
    e = _read_term(args.file, sig)
    if free_vars(e):
        print(f"open term: free {sorted(free_vars(e))}", file=sys.stderr)
        return EXIT_USAGE
    bound = args.max_steps or cfg.step_bound
    records = args.records or cfg.format == "records"
    if args.nd == "all":
        rep = converges_set(e, sig, bound, keep_witnesses=True)
        if records:
            for d in sorted(rep.dset):
                _emit_record({"nd": d,
                              "steps": [_step_record(s) for s in rep.witnesses[d]]})
            _emit_record({"exhausted": rep.exhausted})
        else:
            for d in sorted(rep.dset):
                labels = ",".join(s.label for s in rep.witnesses[d])
                print(f"nd={d} witness: {labels}")
            print(f"converging nd-counts: {sorted(rep.dset)}"
                  + (" (bound-limited)" if rep.exhausted else ""))
        return EXIT_BOUND_LIMITED if rep.exhausted else EXIT_OK
    res, trace = standard_reduce(e, sig, args.nd, bound)
    if records:
        for s in trace:
            _emit_record(_step_record(s))
        _emit_record({"result": res.outcome, "class": res.stuck_class,
                      "nd": res.nd_count})
    else:
        print(format_trace(trace, res))
    return EXIT_BOUND_LIMITED if res.outcome == "exhausted" else EXIT_OK


def cmd_apply(args, cfg):
    sig = _load_sig(args, cfg)
    e = _read_term(args.file, sig)
    pos = parse_position(args.pos)
    rule = args.rule
    try:
        if rule == "ldel":
            out = apply_ldel(e, pos, sig)
        elif rule in ("ldelcyc", "ldelcyc1", "ldelcyc2"):
            if not args.binders:
                raise SystemExit("ldelcyc needs --binders a,b,...")
            out = apply_ldelcyc(e, pos, set(args.binders.split(",")), sig)
        elif rule == "lcv":
            out = apply_lcv(e, pos, sig)
        elif rule == "cp":
            out, kind = apply_cp(e, pos, sig)
            rule = kind
        elif rule == "ucp":
            out = apply_ucp(e, pos, sig)
        elif rule in ("ndl", "ndr"):
            from .reduction import apply_nd
            out = apply_nd(e, pos, "left" if rule == "ndl" else "right", sig)
        elif rule == "lbeta":
            from .reduction import apply_lbeta
            out = apply_lbeta(e, pos, sig)
        elif rule == "lapp":
            from .reduction import apply_lapp
            out = apply_lapp(e, pos, sig)
        elif rule == "lcase":
            from .reduction import apply_lcase
            out = apply_lcase(e, pos, sig)
        elif rule == "llet":
            from .reduction import apply_llet
            out = apply_llet(e, pos, sig)
        elif rule == "case":
            from .reduction import apply_case_chain, apply_case_direct
            try:
                out = apply_case_direct(e, pos, sig)
            except RuleError:
                out = apply_case_chain(e, pos, sig)
        elif rule == "cpn":
            from .reduction import apply_cpn
            out = apply_cpn(e, pos, sig)
        else:
            raise SystemExit(f"unknown rule {rule!r}")
    except RuleError as exc:
        print(f"not applicable: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cls = classify_step(e, args.rule if args.rule != "cp" else rule, pos, sig)
    except RuleError:
        cls = "?"
    if args.records or cfg.format == "records":
        _emit_record({"rule": rule, "pos": position_str(pos),
                      "result": pretty(out), "class": cls})
    else:
        print(pretty(out))
        print(f"rule: {rule}  classification: {cls}")
    return EXIT_OK


def cmd_enumerate(args, cfg):
    sig = _load_sig(args, cfg)
    feats = (frozenset(args.features.split(","))
             if args.features else ALL_FEATURES)
    p = EnumParams(sig, args.size or cfg.size_bound,
                   max_letrec_bindings=args.max_letrec_bindings,
                   max_binders=args.max_binders, features=feats)
    n = 0
    for e in enumerate_terms(p):
        print(pretty(e))
        n += 1
    print(f"# {n} terms", file=sys.stderr)
    return EXIT_OK


def _verify_chunk(payload):
    red, rules_text, kind, sig_text, chunk_texts, depth, step_bound = payload
    sig = parse_signature(sig_text)
    rules = dia.parse_diagram_file(rules_text, kind)
    terms = [parse(t_, sig) for t_ in chunk_texts]
    rep = dia.verify_complete_set(red, rules, sig, 0, depth, terms=terms,
                                  step_bound=step_bound)
    return {
        "instances": rep.instances_checked,
        "matches": rep.matches,
        "counterexamples": rep.counterexamples,
        "bound_limited": rep.bound_limited,
        "value_preserved": rep.value_preserved,
        "prolongations": rep.prolongations_used,
        "terms": rep.terms_scanned,
    }


def cmd_check_diagrams(args, cfg):
    sig = _load_sig(args, cfg)
    size = args.size or cfg.size_bound
    depth = args.depth or cfg.depth_bound
    feats = (frozenset(args.features.split(","))
             if args.features else ALL_FEATURES)
    p = EnumParams(sig, size, max_letrec_bindings=args.max_letrec_bindings,
                   max_binders=args.max_binders, features=feats)
    if args.mode == "propose":
        kind = args.kind
        cands = dia.propose_diagrams(args.red, sig, size, depth, kind=kind,
                                     enum_params=p, step_bound=cfg.step_bound)
        for c in cands:
            print(c)
        return EXIT_OK
    path = Path(args.diagrams) if args.diagrams else (
        Path(args.diagram_dir or cfg.diagram_dir or
             dia.shipped_diagram_path("")) / f"{args.red}.{args.mode}")
    try:
        rules = dia.load_diagram_file(path)
    except dia.DiagramSyntaxError as exc:
        print(f"diagram parse error in {path}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    workers = args.workers or cfg.workers
    if workers > 1:
        texts = [pretty(e) for e in enumerate_terms(p)]
        chunks = [texts[i::workers] for i in range(workers)]
        sig_text = "\n".join(
            f"type {t_} = " + " | ".join(f"{c}/{a}" for c, a in cons)
            for t_, cons in sig.types.items())
        payloads = [(args.red, path.read_text(), rules[0].kind, sig_text,
                     ch, depth, cfg.step_bound) for ch in chunks if ch]
        rep = dia.CheckReport(args.red, rules[0].kind, list(rules))
        with ProcessPoolExecutor(max_workers=workers) as ex:
            for part in ex.map(_verify_chunk, payloads):
                rep.instances_checked += part["instances"]
                rep.terms_scanned += part["terms"]
                rep.value_preserved += part["value_preserved"]
                rep.prolongations_used += part["prolongations"]
                for k, v in part["matches"].items():
                    rep.matches[k] = rep.matches.get(k, 0) + v
                rep.counterexamples.extend(part["counterexamples"])
                rep.bound_limited.extend(part["bound_limited"])
    else:
        rep = dia.verify_complete_set(
            args.red, rules, sig, size, depth, enum_params=p,
            step_bound=cfg.step_bound,
            record_instances=args.records or cfg.format == "records")
    if args.records or cfg.format == "records":
        for rec in rep.records:
            _emit_record(rec)
        _emit_record({"red": rep.red, "kind": rep.kind,
                      "instances": rep.instances_checked,
                      "matches": rep.matches,
                      "counterexamples": rep.counterexamples,
                      "bound_limited": rep.bound_limited})
    else:
        print(rep.summary())
        for inst, note in rep.counterexamples:
            print(f"COUNTEREXAMPLE {inst}\n  {note}")
    if rep.counterexamples:
        return EXIT_COUNTEREXAMPLE
    if rep.bound_limited:
        return EXIT_BOUND_LIMITED
    return EXIT_OK


def cmd_check_equiv(args, cfg):
    sig = _load_sig(args, cfg)
    s = _read_term(args.s, sig)
    t = _read_term(args.t, sig)
    mode = eq.REDUCTION_CONTEXTS if args.reduction_contexts else eq.ALL_CONTEXTS
    spec = eq.CtxSpec(sig, args.ctx_size or cfg.ctx_size, mode,
                      max_letrec_bindings=args.max_letrec_bindings,
                      max_binders=args.max_binders)
    bound = args.max_steps or cfg.step_bound
    fwd, bwd = eq.check_sim_c(s, t, spec, bound)
    if args.records or cfg.format == "records":
        for name, v in (("s<=t", fwd), ("t<=s", bwd)):
            _emit_record({"direction": name, "ok": v.ok,
                          "contexts": v.contexts_checked,
                          "exhaustion": v.exhaustion,
                          "context": pretty(v.context) if v.context else None,
                          "D": v.D, "detail": v.detail})
    else:
        print(f"s <= t: {fwd.describe()}")
        print(f"t <= s: {bwd.describe()}")
    if not fwd.ok or not bwd.ok:
        return EXIT_COUNTEREXAMPLE
    if fwd.exhaustion or bwd.exhaustion:
        return EXIT_BOUND_LIMITED
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ndlam",
        description="call-by-need lambda calculus workbench with letrec, "
                    "case, constructors and erratic choice")
    ap.add_argument("--sig", help="signature file")
    ap.add_argument("--config", help="JSON config file (default $NDLAM_CONFIG)")
    ap.add_argument("--workers", type=int, default=0, help="worker processes")
    ap.add_argument("--records", action="store_true",
                    help="machine-readable line-delimited JSON output")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("parse", help="parse and echo canonically")
    p.add_argument("file", nargs="?", default="-")
    p.set_defaults(fn=cmd_parse)

    p = sub.add_parser("reduce", help="standard reduction trace")
    p.add_argument("file", nargs="?", default="-")
    p.add_argument("--nd", choices=["left", "right", "all"], default="left")
    p.add_argument("--max-steps", type=int, default=0)
    p.set_defaults(fn=cmd_reduce)

    p = sub.add_parser("apply", help="apply one rule at a position")
    p.add_argument("file", nargs="?", default="-")
    p.add_argument("--rule", required=True)
    p.add_argument("--pos", default="")
    p.add_argument("--binders", help="binder group for ldelcyc")
    p.set_defaults(fn=cmd_apply)

    p = sub.add_parser("enumerate", help="stream closed terms up to a size")
    p.add_argument("--size", type=int, default=0)
    p.add_argument("--max-binders", type=int, default=2)
    p.add_argument("--max-letrec-bindings", type=int, default=2)
    p.add_argument("--features", help="comma list: choice,case,letrec,constructors")
    p.set_defaults(fn=cmd_enumerate)

    p = sub.add_parser("check-diagrams", help="verify or propose a diagram set")
    p.add_argument("--red", required=True)
    p.add_argument("--diagrams", help="diagram file (default from --mode)")
    p.add_argument("--diagram-dir")
    p.add_argument("--size", type=int, default=0)
    p.add_argument("--depth", type=int, default=0)
    p.add_argument("--mode", choices=["fork", "commute", "propose"],
                   default="fork")
    p.add_argument("--kind", choices=["fork", "commute"], default="fork",
                   help="diagram kind for --mode propose")
    p.add_argument("--max-binders", type=int, default=2)
    p.add_argument("--max-letrec-bindings", type=int, default=2)
    p.add_argument("--features")
    p.set_defaults(fn=cmd_check_diagrams)

    p = sub.add_parser("check-equiv", help="bounded contextual-equivalence falsifier")
    p.add_argument("s")
    p.add_argument("t")
    p.add_argument("--ctx-size", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=0)
    p.add_argument("--reduction-contexts", action="store_true")
    p.add_argument("--max-binders", type=int, default=1)
    p.add_argument("--max-letrec-bindings", type=int, default=1)
    p.set_defaults(fn=cmd_check_equiv)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.workers:
            cfg.workers = args.workers
        return args.fn(args, cfg)
    except SyntaxError_ as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""``dualnum`` command-line driver.

Exit codes: 0 success, 1 user error (bad input, parse or type error),
2 a check failed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Sequence

from dualnum.ad import ADError, SignMode, ad_transform
from dualnum.corpus import Program, corpus_path, load_corpus, load_program
from dualnum.diffcalc import ShapeError
from dualnum.evaluator import (
    DEFAULT_FUEL, UNIT_V, PairV, RuntimeValue, Scalar, Tangent, TangentV,
    Value, apply_value, evaluate, format_outcome,
)
from dualnum.harness import CheckConfig, check_cross, check_forward, check_registry, check_reverse, check_sign_modes
from dualnum.prims import DEFAULT_REGISTRY
from dualnum.surface import ParseError, SourceFile, parse_term_with_spans, print_term, print_type
from dualnum.syntax import Arrow, Prod, Real, TangentT, Term, Type, Unit, is_target_only, subterms
from dualnum import suites
from dualnum.typecheck import Lang, TypeCheckError, typecheck

EXIT_OK, EXIT_USER, EXIT_CHECK = 0, 1, 2


class UserError(Exception):
    pass


def _read(path: str | None) -> SourceFile:
    if path is None or path == "-":
        return SourceFile.from_bytes(sys.stdin.buffer.read())
    if not Path(path).exists():
        # bundled programs: "relu", "relu.dn" or "corpus/relu.dn"
        name = path.removeprefix("corpus/")
        for cand in (corpus_path(name), corpus_path(f"{name}.dn")):
            if cand.is_file():
                path = str(cand)
                break
    try:
        return SourceFile.read(path)
    except OSError as exc:
        raise UserError(f"{path}: {exc.strerror}") from None


def uses_target(t: Term) -> bool:
    return is_target_only(t) or any(uses_target(s) for _, s in subterms(t))


def _load(path: str | None) -> tuple[SourceFile, Term, dict]:
    src = _read(path)
    term, spans = parse_term_with_spans(src)
    return src, term, spans


def _typed(term: Term, spans=None) -> tuple[Type, Lang]:
    lang = Lang.TARGET if uses_target(term) else Lang.SOURCE
    return typecheck(term, None, lang, spans=spans).type, lang


def _k(text: str) -> int | None:
    if text == "inf":
        return None
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a positive integer or 'inf'") from None
    if k < 1:
        raise argparse.ArgumentTypeError("k must be >= 1")
    return k


# -- subcommands ------------------------------------------------------------


def cmd_parse(args) -> int:
    _, term, _ = _load(args.file)
    print(print_term(term))
    return EXIT_OK


def cmd_check(args) -> int:
    _, term, spans = _load(args.file)
    ty, lang = _typed(term, spans)
    print(print_type(ty) if lang is Lang.SOURCE else f"{print_type(ty)}  (target)")
    return EXIT_OK


def cmd_ad(args) -> int:
    _, term, spans = _load(args.file)
    ty, lang = _typed(term, spans)
    if lang is Lang.TARGET:
        raise UserError("input already uses target-language constructs")
    print(print_term(ad_transform(term, DEFAULT_REGISTRY, args.sign_mode)))
    return EXIT_OK


class _Filler:
    """Builds an argument value of a given type from a flat list of reals."""

    def __init__(self, values: Sequence[float], k: int | None):
        self.values = list(values)
        self.pos = 0
        self.k = k
        self.slot = 0

    def take(self) -> float:
        if self.pos >= len(self.values):
            raise UserError("--input has too few values for the argument type")
        self.pos += 1
        return self.values[self.pos - 1]

    def build(self, ty: Type) -> RuntimeValue:
        match ty:
            case Real():
                return Scalar(self.take())
            case Unit():
                return UNIT_V
            case Prod(a, b):
                left = self.build(a)
                return PairV(left, self.build(b))
            case TangentT():
                self.slot += 1
                if self.k is None:
                    # one coefficient c per tangent slot, read as c * e_slot
                    return TangentV(Tangent.from_entries(None, {self.slot: self.take()}))
                return TangentV(Tangent(self.k, tuple(self.take() for _ in range(self.k))))
        raise UserError(f"--input cannot describe a value of type {print_type(ty)}")

    def finish(self) -> None:
        if self.pos != len(self.values):
            raise UserError(f"--input has {len(self.values) - self.pos} values too many")


def _parse_input(text: str) -> list[float]:
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise UserError(f"--input must be comma-separated reals, got {text!r}") from None


def cmd_eval(args) -> int:
    _, term, spans = _load(args.file)
    ty, lang = _typed(term, spans)
    if args.ad:
        if lang is Lang.TARGET:
            raise UserError("--ad needs a source program")
        term = ad_transform(term, DEFAULT_REGISTRY, args.sign_mode)
        ty, lang = _typed(term)
    if args.input is None:
        out = evaluate(term, fuel=args.fuel, k=args.k)
    else:
        if not isinstance(ty, Arrow):
            raise UserError(f"--input given but the program has type {print_type(ty)}")
        filler = _Filler(_parse_input(args.input), args.k)
        arg = filler.build(ty.dom)
        filler.finish()
        fn = evaluate(term, fuel=args.fuel, k=args.k)
        out = apply_value(fn.value, arg, args.fuel, args.k) if isinstance(fn, Value) else fn
    print(format_outcome(out))
    return EXIT_OK


_CHECKS = {"forward": check_forward, "reverse": check_reverse, "cross": check_cross, "signmode": check_sign_modes}


def cmd_verify(args) -> int:
    if args.corpus:
        programs = load_corpus()
    elif args.files:
        programs = [_program(f) for f in args.files]
    else:
        raise UserError("verify needs program files or --corpus")
    seed = args.seed
    if os.environ.get("DUALNUM_SEED"):
        try:
            seed = int(os.environ["DUALNUM_SEED"])
        except ValueError:
            raise UserError("DUALNUM_SEED must be an integer") from None
    kind = args.k if args.mode == "forward" else "inf"
    try:
        cfg = CheckConfig(
            k=kind, n=args.n, h=args.h, tol=args.tol, fuel=args.fuel, seed=seed,
            depth=args.depth, sign_mode=args.sign_mode,
        )
    except ValueError as exc:
        raise UserError(str(exc)) from None
    reports = [_CHECKS[args.mode](p, cfg) for p in programs]
    log = sys.stderr if args.json == "-" else sys.stdout
    for r in reports:
        print(r.summary(), file=log)
    if args.json:
        doc = reports[0].to_json() if len(reports) == 1 else [r.to_json() for r in reports]
        text = json.dumps(doc, indent=2) + "\n"
        if args.json == "-":
            sys.stdout.write(text)
        else:
            Path(args.json).write_text(text)
    return EXIT_OK if all(r.ok for r in reports) else EXIT_CHECK


def _program(path: str) -> Program:
    src = _read(path)
    try:
        return load_program(src, name=Path(src.origin).stem)
    except (ParseError, TypeCheckError, ShapeError) as exc:
        raise UserError(f"{path}: {exc}") from None
    except ValueError as exc:
        raise UserError(str(exc)) from None


def cmd_selftest(args) -> int:
    ok = True
    for chk in check_registry(n=args.n, seed=args.seed):
        print(f"prim {chk.symbol:<6} {chk.passed:>4} pass  {chk.failed} fail  max_err={chk.max_rel_err:.1e}")
        ok = ok and chk.ok
    results = [
        suites.handler_roundtrips(seed=args.seed),
        suites.type_preservation(args.n, args.seed, SignMode.NAIVE),
        suites.type_preservation(args.n, args.seed, SignMode.EFFICIENT),
        suites.substitution_commutation(args.n, args.seed),
        suites.print_parse_roundtrip(args.n, args.seed),
        suites.fuel_monotonicity(load_corpus(), seed=args.seed),
        suites.divergence_probe(),
    ]
    for r in results:
        print(r.line())
        for f in r.failures[:5]:
            print(f"    {f}")
        ok = ok and r.ok
    print("selftest passed" if ok else "selftest FAILED")
    return EXIT_OK if ok else EXIT_CHECK


# -- argument parsing ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dualnum", description="Dual-numbers AD for a small functional language.")
    sub = ap.add_subparsers(dest="command", required=True)

    def file_arg(p):
        p.add_argument("file", nargs="?", help="program file (.dn); stdin when omitted or '-'")

    def sign_arg(p):
        p.add_argument("--sign-mode", choices=[m.value for m in SignMode], default="naive")

    p = sub.add_parser("parse", help="parse and pretty-print a program")
    file_arg(p)
    p.set_defaults(fn=cmd_parse)

    p = sub.add_parser("check", help="print the inferred type")
    file_arg(p)
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("ad", help="print the transformed program")
    file_arg(p)
    sign_arg(p)
    p.set_defaults(fn=cmd_ad)

    p = sub.add_parser("eval", help="evaluate a program, optionally applied to an input")
    file_arg(p)
    p.add_argument("--k", type=_k, default=1, help="tangent dimension, or 'inf' (default 1)")
    p.add_argument("--fuel", type=int, default=DEFAULT_FUEL)
    p.add_argument("--input", help="argument as comma-separated reals")
    p.add_argument("--ad", action="store_true", help="transform the program first")
    sign_arg(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("verify", help="check derivatives against finite differences")
    p.add_argument("files", nargs="*", help="program files or corpus names")
    p.add_argument("--corpus", action="store_true", help="every program in the bundled corpus")
    p.add_argument("--mode", choices=sorted(_CHECKS), default="forward")
    p.add_argument("--k", choices=["1", "s"], default="1", help="forward tangent dimension")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--fuel", type=int, default=DEFAULT_FUEL)
    p.add_argument("--depth", type=int, default=6, help="recursive unfoldings per input shape")
    p.add_argument("--json", metavar="OUT", help="write the report(s) as JSON ('-' for stdout)")
    sign_arg(p)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("selftest", help="registry soundness, handler round trips, invariant suites")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_selftest)
    return ap


def run(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors; those are user errors here
        return EXIT_OK if exc.code in (0, None) else EXIT_USER
    try:
        return args.fn(args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except (ParseError, TypeCheckError, ADError) as exc:
        print(f"{getattr(args, 'file', None) or '<stdin>'}:{exc}", file=sys.stderr)
        return EXIT_USER


def main() -> None:
    sys.exit(run())

"""Concrete syntax (``.dn`` files): tokenizer, parser and pretty-printer.

Operator precedence, tightest first: application and prefix keywords,
``* /``, ``+ -``, ``<*>``, ``<+>``.  All binary operators associate to the left.
Binding forms (``fun``, ``let``, ``rec``, ``iterate``, ``if``, ``case``) extend
as far right as possible.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterator

from dualnum.prims import DEFAULT_REGISTRY, INFIX, Registry
from dualnum.syntax import (
    Annot, App, Arrow, CasePair, CaseRoll, CaseSum, CaseVoid, Const, Fst, If,
    Inl, Inr, Iterate, Lam, Let, Meta, Mu, Pair, PrimOp, Prod, Real, Rec, Roll,
    Sign, Snd, Sum, TangentAdd, TangentBasis, TangentProj, TangentScale,
    TangentT, TangentZero, Term, TVar, Type, Unit, UnitVal, Var, Void, letrec,
)

__all__ = ["SourceFile", "ParseError", "parse_term", "parse_type", "print_term", "print_type", "format_float"]


@dataclass(frozen=True)
class SourceFile:
    text: str
    origin: str = "<stdin>"

    @classmethod
    def read(cls, path: str) -> "SourceFile":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read(), path)

    @classmethod
    def from_bytes(cls, data: bytes, origin: str = "<stdin>") -> "SourceFile":
        try:
            return cls(data.decode("utf-8"), origin)
        except UnicodeDecodeError as exc:
            line = data[: exc.start].count(b"\n") + 1
            col = exc.start - (data[: exc.start].rfind(b"\n") + 1) + 1
            raise ParseError("input is not valid UTF-8", line, col) from None


class ParseError(Exception):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{line}:{column}: {message}")
        self.message = message
        self.line = line
        self.column = column


KEYWORDS = frozenset(
    "let rec in fun case of inl inr absurd sign iterate from roll dzero dbasis "
    "dproj if then else fst snd mu real unit void tangent".split()
)

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|--[^\n]*)
  | (?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)
  | (?P<tvar>'[A-Za-z_][A-Za-z0-9_]*)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<sym><\+>|<\*>|->|[(){}\[\],|=:+\-*/.])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # num | tvar | ident | kw | sym | eof
    text: str
    line: int
    col: int


def tokenize(src: str) -> list[Token]:
    toks: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise ParseError(f"unexpected character {src[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        text = m.group()
        if kind != "ws":
            if kind == "ident" and text in KEYWORDS:
                kind = "kw"
            toks.append(Token(kind, text, line, pos - line_start + 1))
        nl = text.count("\n")
        if nl:
            line += nl
            line_start = pos + text.rfind("\n") + 1
        pos = m.end()
    toks.append(Token("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, src: str, registry: Registry):
        self.toks = tokenize(src)
        self.i = 0
        self.registry = registry
        self.spans: dict[int, tuple[int, int]] = {}

    # -- helpers

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.tok
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        return ParseError(f"{msg} (found {found})", tok.line, tok.col)

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("kw", "sym")

    def eat(self, text: str) -> Token:
        if not self.at(text):
            raise self.error(f"expected {text!r}")
        tok = self.tok
        self.i += 1
        return tok

    def ident(self, allow_wild: bool = False) -> str:
        tok = self.tok
        if tok.kind != "ident" or (tok.text == "_" and not allow_wild):
            raise self.error("expected identifier")
        if tok.text in self.registry:
            raise self.error(f"{tok.text!r} names a primitive operation")
        self.i += 1
        return tok.text

    def index(self) -> int:
        tok = self.tok
        if tok.kind != "num" or not tok.text.isdigit() or int(tok.text) < 1:
            raise self.error("expected a positive integer index")
        self.i += 1
        return int(tok.text)

    def mark(self, t: Term, tok: Token) -> Term:
        self.spans.setdefault(id(t), (tok.line, tok.col))
        return t

    # -- types

    def type_(self) -> Type:
        lhs = self.sum_type()
        if self.at("->"):
            self.i += 1
            return Arrow(lhs, self.type_())
        return lhs

    def sum_type(self) -> Type:
        ty = self.prod_type()
        while self.at("+"):
            self.i += 1
            ty = Sum(ty, self.prod_type())
        return ty

    def prod_type(self) -> Type:
        ty = self.atom_type()
        while self.at("*"):
            self.i += 1
            ty = Prod(ty, self.atom_type())
        return ty

    def atom_type(self) -> Type:
        tok = self.tok
        if tok.kind == "kw" and tok.text in ("real", "unit", "void", "tangent"):
            self.i += 1
            return {"real": Real, "unit": Unit, "void": Void, "tangent": TangentT}[tok.text]()
        if tok.kind == "tvar":
            self.i += 1
            return TVar(tok.text[1:])
        if self.at("mu"):
            self.i += 1
            var = self.tok
            if var.kind != "tvar":
                raise self.error("expected a type variable after 'mu'")
            self.i += 1
            self.eat(".")
            return Mu(var.text[1:], self.type_())
        if self.at("("):
            self.i += 1
            ty = self.type_()
            self.eat(")")
            return ty
        raise self.error("expected a type")

    # -- terms

    def expr(self) -> Term:
        tok = self.tok
        if self.at("fun"):
            self.i += 1
            name, ann = self.binder()
            self.eat("->")
            return self.mark(Lam(name, self.expr(), ann), tok)
        if self.at("let"):
            self.i += 1
            if self.at("rec"):
                self.i += 1
                fname = self.ident()
                param, ann = self.binder()
                self.eat("=")
                fbody = self.expr()
                self.eat("in")
                return self.mark(letrec(fname, param, fbody, self.expr(), ann), tok)
            name = self.ident(allow_wild=True)
            self.eat("=")
            bound = self.expr()
            self.eat("in")
            return self.mark(Let(name, bound, self.expr()), tok)
        if self.at("rec"):
            self.i += 1
            name = self.ident()
            self.eat("->")
            return self.mark(Rec(name, self.expr()), tok)
        if self.at("iterate"):
            self.i += 1
            body = self.expr()
            self.eat("from")
            name = self.ident(allow_wild=True)
            self.eat("=")
            return self.mark(Iterate(body, name, self.expr()), tok)
        if self.at("if"):
            self.i += 1
            cond = self.expr()
            self.eat("then")
            a = self.expr()
            self.eat("else")
            return self.mark(If(cond, a, self.expr()), tok)
        if self.at("case"):
            return self.case()
        return self.tadd()

    def binder(self) -> tuple[str, Type | None]:
        if self.at("("):
            self.i += 1
            name = self.ident(allow_wild=True)
            self.eat(":")
            ann = self.type_()
            self.eat(")")
            return name, ann
        return self.ident(allow_wild=True), None

    def case(self) -> Term:
        tok = self.eat("case")
        scrut = self.expr()
        self.eat("of")
        self.eat("{")
        if self.at("inl"):
            self.i += 1
            x = self.ident(allow_wild=True)
            self.eat("->")
            left = self.expr()
            self.eat("|")
            self.eat("inr")
            y = self.ident(allow_wild=True)
            self.eat("->")
            t: Term = CaseSum(scrut, x, left, y, self.expr())
        elif self.at("("):
            self.i += 1
            x = self.ident(allow_wild=True)
            self.eat(",")
            y = self.ident(allow_wild=True)
            self.eat(")")
            self.eat("->")
            t = CasePair(scrut, x, y, self.expr())
        elif self.at("roll"):
            self.i += 1
            x = self.ident(allow_wild=True)
            self.eat("->")
            t = CaseRoll(scrut, x, self.expr())
        else:
            raise self.error("expected 'inl', 'roll' or '(' pattern")
        self.eat("}")
        return self.mark(t, tok)

    def tadd(self) -> Term:
        t = self.tscale()
        while self.at("<+>"):
            tok = self.eat("<+>")
            t = self.mark(TangentAdd(t, self.tscale()), tok)
        return t

    def tscale(self) -> Term:
        t = self.arith()
        while self.at("<*>"):
            tok = self.eat("<*>")
            t = self.mark(TangentScale(t, self.arith()), tok)
        return t

    def arith(self) -> Term:
        t = self.term()
        while self.at("+") or self.at("-"):
            tok = self.tok
            self.i += 1
            op = "add" if tok.text == "+" else "sub"
            t = self.mark(PrimOp(op, (t, self.term())), tok)
        return t

    def term(self) -> Term:
        t = self.app()
        while self.at("*") or self.at("/"):
            tok = self.tok
            self.i += 1
            op = "mul" if tok.text == "*" else "div"
            t = self.mark(PrimOp(op, (t, self.app())), tok)
        return t

    _PREFIX = {"sign": Sign, "inl": Inl, "inr": Inr, "absurd": CaseVoid, "fst": Fst, "snd": Snd}

    def app(self) -> Term:
        tok = self.tok
        if tok.kind == "kw" and tok.text in self._PREFIX:
            self.i += 1
            return self.mark(self._PREFIX[tok.text](self.app()), tok)
        if self.at("roll"):
            self.i += 1
            ann = None
            if self.at("["):
                self.i += 1
                ann = self.type_()
                self.eat("]")
            return self.mark(Roll(self.app(), ann), tok)
        if self.at("dproj"):
            self.i += 1
            idx = self.index()
            return self.mark(TangentProj(idx, self.app()), tok)
        if self.at("-"):
            self.i += 1
            if self.tok.kind == "num":
                return self.mark(Const(-self.number()), tok)
            return self.mark(PrimOp("neg", (self.app(),)), tok)
        t = self.atom()
        while self.starts_atom():
            arg_tok = self.tok
            t = self.mark(App(t, self.atom()), arg_tok)
        return t

    def starts_atom(self) -> bool:
        tok = self.tok
        if tok.kind in ("num", "ident"):
            return True
        return (tok.kind == "sym" and tok.text == "(") or (tok.kind == "kw" and tok.text in ("dzero", "dbasis"))

    def number(self) -> float:
        tok = self.tok
        self.i += 1
        val = float(tok.text)
        if not math.isfinite(val):
            raise ParseError("numeric literal out of range", tok.line, tok.col)
        return val

    def atom(self) -> Term:
        tok = self.tok
        if tok.kind == "num":
            return self.mark(Const(self.number()), tok)
        if tok.kind == "ident":
            if tok.text in self.registry:
                return self.prim_call()
            return self.mark(Var(self.ident()), tok)
        if self.at("dzero"):
            self.i += 1
            return self.mark(TangentZero(), tok)
        if self.at("dbasis"):
            self.i += 1
            return self.mark(TangentBasis(self.index()), tok)
        if self.at("("):
            self.i += 1
            if self.at(")"):
                self.i += 1
                return self.mark(UnitVal(), tok)
            t = self.expr()
            if self.at(":"):
                self.i += 1
                ty = self.type_()
                self.eat(")")
                return self.mark(Annot(t, ty), tok)
            while self.at(","):
                self.i += 1
                t = self.mark(Pair(t, self.expr()), tok)
            self.eat(")")
            return t
        raise self.error("expected an expression")

    def prim_call(self) -> Term:
        tok = self.tok
        spec = self.registry[tok.text]
        self.i += 1
        self.eat("(")
        args: list[Term] = []
        if not self.at(")"):
            args.append(self.expr())
            while self.at(","):
                self.i += 1
                args.append(self.expr())
        self.eat(")")
        if len(args) != spec.arity:
            raise ParseError(f"{spec.symbol} expects {spec.arity} argument(s), got {len(args)}", tok.line, tok.col)
        return self.mark(PrimOp(spec.symbol, tuple(args)), tok)

    def finish(self) -> None:
        if self.tok.kind != "eof":
            raise self.error("unexpected trailing input")


def _as_source(src: SourceFile | str) -> str:
    return src.text if isinstance(src, SourceFile) else src


def parse_term(src: SourceFile | str, registry: Registry = DEFAULT_REGISTRY) -> Term:
    return parse_term_with_spans(src, registry)[0]


def parse_term_with_spans(src: SourceFile | str, registry: Registry = DEFAULT_REGISTRY) -> tuple[Term, dict[int, tuple[int, int]]]:
    """Parse a term; also return ``id(node) -> (line, col)`` for located nodes."""
    p = _Parser(_as_source(src), registry)
    try:
        t = p.expr()
        p.finish()
    except RecursionError:
        raise ParseError("input nested too deeply", p.tok.line, p.tok.col) from None
    return t, p.spans


def parse_type(src: SourceFile | str) -> Type:
    p = _Parser(_as_source(src), DEFAULT_REGISTRY)
    try:
        ty = p.type_()
        p.finish()
    except RecursionError:
        raise ParseError("input nested too deeply", p.tok.line, p.tok.col) from None
    return ty


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------


def format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot print non-finite literal {x}")
    return repr(float(x))


def print_type(ty: Type) -> str:
    return _pt(ty, 0)


def _pt(ty: Type, ctx: int) -> str:
    match ty:
        case Arrow(a, b):
            s, lvl = f"{_pt(a, 1)} -> {_pt(b, 0)}", 0
        case Sum(a, b):
            s, lvl = f"{_pt(a, 1)} + {_pt(b, 2)}", 1
        case Prod(a, b):
            s, lvl = f"{_pt(a, 2)} * {_pt(b, 3)}", 2
        case Mu(var, body):
            s, lvl = f"mu '{var}. {_pt(body, 0)}", 0
        case TVar(name):
            return f"'{name}"
        case Meta(i):
            return f"?{i}"
        case Real():
            return "real"
        case Unit():
            return "unit"
        case Void():
            return "void"
        case TangentT():
            return "tangent"
        case _:
            raise TypeError(f"not a type: {ty!r}")
    return f"({s})" if lvl < ctx else s


_BIN_LEVEL = {"add": 3, "sub": 3, "mul": 4, "div": 4}
_APP = 5
_ATOM = 6


def print_term(t: Term) -> str:
    return _pp(t, 0)


def _wrap(s: str, lvl: int, ctx: int) -> str:
    return f"({s})" if lvl < ctx else s


def _pp(t: Term, ctx: int) -> str:
    match t:
        case Var(name):
            return name
        case Const(v):
            s = format_float(v)
            return f"({s})" if math.copysign(1.0, v) < 0 else s
        case UnitVal():
            return "()"
        case TangentZero():
            return "dzero"
        case TangentBasis(i):
            return f"dbasis {i}"
        case Pair(a, b):
            return f"({_pp(a, 0)}, {_pp(b, 0)})"
        case Annot(e, ty):
            return f"({_pp(e, 0)} : {print_type(ty)})"
        case PrimOp(op, args) if op in INFIX and len(args) == 2:
            lvl = _BIN_LEVEL[op]
            return _wrap(f"{_pp(args[0], lvl)} {INFIX[op]} {_pp(args[1], lvl + 1)}", lvl, ctx)
        case PrimOp(op, args):
            return f"{op}({', '.join(_pp(a, 0) for a in args)})"
        case TangentAdd(a, b):
            return _wrap(f"{_pp(a, 1)} <+> {_pp(b, 2)}", 1, ctx)
        case TangentScale(a, b):
            return _wrap(f"{_pp(a, 2)} <*> {_pp(b, 3)}", 2, ctx)
        case App(f, a):
            fs = _pp(f, _APP) if isinstance(f, App) else _pp(f, _ATOM)
            return _wrap(f"{fs} {_pp(a, _ATOM)}", _APP, ctx)
        case Sign(a) | Inl(a) | Inr(a) | CaseVoid(a) | Fst(a) | Snd(a):
            kw = {Sign: "sign", Inl: "inl", Inr: "inr", CaseVoid: "absurd", Fst: "fst", Snd: "snd"}[type(t)]
            return _wrap(f"{kw} {_pp(a, _APP)}", _APP, ctx)
        case Roll(a, ann):
            kw = "roll" if ann is None else f"roll[{print_type(ann)}]"
            return _wrap(f"{kw} {_pp(a, _APP)}", _APP, ctx)
        case TangentProj(i, a):
            return _wrap(f"dproj {i} {_pp(a, _APP)}", _APP, ctx)
        case Lam(x, body, ann):
            b = x if ann is None else f"({x} : {print_type(ann)})"
            return _wrap(f"fun {b} -> {_pp(body, 0)}", 0, ctx)
        case Let(x, e, body):
            return _wrap(f"let {x} = {_pp(e, 0)} in {_pp(body, 0)}", 0, ctx)
        case Rec(x, body):
            return _wrap(f"rec {x} -> {_pp(body, 0)}", 0, ctx)
        case Iterate(body, x, seed):
            return _wrap(f"iterate {_pp(body, 0)} from {x} = {_pp(seed, 0)}", 0, ctx)
        case If(c, a, b):
            return _wrap(f"if {_pp(c, 0)} then {_pp(a, 0)} else {_pp(b, 0)}", 0, ctx)
        case CaseSum(s, x, a, y, b):
            return _wrap(f"case {_pp(s, 0)} of {{ inl {x} -> {_pp(a, 0)} | inr {y} -> {_pp(b, 0)} }}", 0, ctx)
        case CasePair(s, x, y, body):
            return _wrap(f"case {_pp(s, 0)} of {{ ({x}, {y}) -> {_pp(body, 0)} }}", 0, ctx)
        case CaseRoll(s, x, body):
            return _wrap(f"case {_pp(s, 0)} of {{ roll {x} -> {_pp(body, 0)} }}", 0, ctx)
    raise TypeError(f"cannot print {t!r}")


def iter_tokens(src: str) -> Iterator[Token]:
    yield from tokenize(src)

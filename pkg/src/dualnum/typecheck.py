"""Type checking for the source and target languages.

Inference is syntax-directed with unification variables (``Meta``) for binder
types that are only fixed by later uses.  No generalization happens: every
binder gets one monomorphic type.  Recursive types are iso-recursive, so two
``mu`` types are equal only up to renaming of the bound variable.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from dualnum.prims import DEFAULT_REGISTRY, Registry
from dualnum.syntax import (
    REAL, TANGENT, UNIT, VOID, Annot, App, Arrow, CasePair, CaseRoll, CaseSum,
    CaseVoid, Const, Fst, If, Inl, Inr, Iterate, Lam, Let, Meta, Mu, Pair,
    PrimOp, Prod, Rec, Roll, Sign, Snd, Sum, TangentAdd, TangentBasis,
    TangentProj, TangentScale, TangentZero, Term, TVar, Type,
    UnitVal, Var, contains_tangent, free_tvars, real_pow, unfold_mu,
)

__all__ = ["Lang", "TypingContext", "TypeCheckError", "Typing", "infer", "typecheck", "type_equal"]


class Lang(enum.Enum):
    SOURCE = "source"
    TARGET = "target"


@dataclass(frozen=True)
class TypingContext:
    """Gamma (ordered variable bindings) and Delta (type variables in scope)."""

    vars: tuple[tuple[str, Type], ...] = ()
    tvars: tuple[str, ...] = ()

    def __post_init__(self):
        names = [n for n, _ in self.vars]
        if len(set(names)) != len(names):
            raise ValueError("duplicate variable in typing context")

    @classmethod
    def of(cls, bindings: Mapping[str, Type] | Iterable[tuple[str, Type]] = (), tvars: Iterable[str] = ()) -> "TypingContext":
        items = bindings.items() if isinstance(bindings, Mapping) else bindings
        return cls(tuple(items), tuple(tvars))


class TypeCheckError(Exception):
    def __init__(self, message: str, term: Term | None = None, location: tuple[int, int] | None = None):
        where = f"{location[0]}:{location[1]}: " if location else ""
        super().__init__(where + message)
        self.message = message
        self.term = term
        self.location = location


def _parts(ty: Type) -> tuple[Type, Type]:
    return (ty.dom, ty.cod) if isinstance(ty, Arrow) else (ty.left, ty.right)


def type_equal(a: Type, b: Type) -> bool:
    """Alpha-equivalence; no fold/unfold of ``mu``."""
    return a == b


@dataclass
class Typing:
    """Result of a successful check.

    ``sign_contexts`` maps ``id(sign_node)`` to the types of the free variables
    of that node's argument.  The efficient sign transform needs them.
    """

    type: Type
    sign_contexts: dict[int, dict[str, Type]] = field(default_factory=dict)


class _Checker:
    def __init__(self, lang: Lang, registry: Registry, tvars: Iterable[str], spans: Mapping[int, tuple[int, int]] | None):
        self.lang = lang
        self.registry = registry
        self.tvars = frozenset(tvars)
        self.spans = spans or {}
        self.subst: dict[int, Type] = {}
        self.counter = itertools.count()
        self.path: list[Term] = []
        self.sign_contexts: dict[int, dict[str, Type]] = {}

    # -- unification

    def fresh(self) -> Meta:
        return Meta(next(self.counter))

    def head(self, ty: Type) -> Type:
        while isinstance(ty, Meta) and ty.id in self.subst:
            ty = self.subst[ty.id]
        return ty

    def resolve(self, ty: Type) -> Type:
        ty = self.head(ty)
        match ty:
            case Prod(a, b):
                return Prod(self.resolve(a), self.resolve(b))
            case Sum(a, b):
                return Sum(self.resolve(a), self.resolve(b))
            case Arrow(a, b):
                return Arrow(self.resolve(a), self.resolve(b))
            case Mu(v, b):
                return Mu(v, self.resolve(b))
        return ty

    def occurs(self, m: Meta, ty: Type) -> bool:
        ty = self.head(ty)
        match ty:
            case Meta(i):
                return i == m.id
            case Prod(a, b) | Sum(a, b) | Arrow(a, b):
                return self.occurs(m, a) or self.occurs(m, b)
            case Mu(_, b):
                return self.occurs(m, b)
        return False

    def unify(self, a: Type, b: Type, node: Term) -> None:
        a, b = self.head(a), self.head(b)
        if isinstance(a, Meta) and isinstance(b, Meta) and a.id == b.id:
            return
        if isinstance(a, Meta) or isinstance(b, Meta):
            m, other = (a, b) if isinstance(a, Meta) else (b, a)
            if self.occurs(m, other):
                self.fail(f"infinite type {self.show(m)} ~ {self.show(other)}", node)
            self.subst[m.id] = other
            return
        if type(a) is not type(b):
            self.fail(f"type mismatch: expected {self.show(b)}, got {self.show(a)}", node)
        match a:
            case Prod() | Sum() | Arrow():
                for x, y in zip(_parts(a), _parts(b)):
                    self.unify(x, y, node)
            case Mu():
                ra, rb = self.resolve(a), self.resolve(b)
                if ra != rb:
                    self.fail(f"type mismatch: expected {self.show(rb)}, got {self.show(ra)}", node)
            case TVar(name):
                if name != b.name:
                    self.fail(f"type mismatch: expected '{b.name}, got '{name}", node)

    def show(self, ty: Type) -> str:
        return str(self.resolve(ty))

    def fail(self, msg: str, node: Term | None = None):
        loc = None
        for t in ([node] if node is not None else []) + self.path[::-1]:
            if t is not None and id(t) in self.spans:
                loc = self.spans[id(t)]
                break
        raise TypeCheckError(msg, node, loc)

    def check_annotation(self, ty: Type, node: Term) -> Type:
        if self.lang is Lang.SOURCE and contains_tangent(ty):
            self.fail("tangent type in a source program", node)
        unbound = free_tvars(ty) - self.tvars
        if unbound:
            self.fail(f"unbound type variable(s) {', '.join(sorted(unbound))}", node)
        return ty

    # -- inference

    def infer(self, t: Term, env: dict[str, Type], hint: Type | None = None) -> Type:
        self.path.append(t)
        try:
            return self._infer(t, env, hint)
        finally:
            self.path.pop()

    def expect(self, t: Term, env: dict[str, Type], ty: Type) -> None:
        self.unify(self.infer(t, env, ty), ty, t)

    def _infer(self, t: Term, env: dict[str, Type], hint: Type | None) -> Type:
        match t:
            case Var(name):
                if name not in env:
                    self.fail(f"unbound variable {name}", t)
                return env[name]
            case Let(x, bound, body):
                bty = self.infer(bound, env)
                return self.infer(body, {**env, x: bty}, hint)
            case Const():
                return REAL
            case PrimOp(op, args):
                spec = self.registry.get(op)
                if spec is None:
                    self.fail(f"unknown primitive {op}", t)
                if len(args) != spec.arity:
                    self.fail(f"{op} expects {spec.arity} argument(s), got {len(args)}", t)
                for a in args:
                    self.expect(a, env, REAL)
                return REAL
            case Sign(a):
                self.sign_contexts[id(t)] = {v: env[v] for v in a.fv if v in env}
                self.expect(a, env, REAL)
                return Sum(UNIT, UNIT)
            case If(c, a, b):
                self.expect(c, env, REAL)
                ta = self.infer(a, env, hint)
                self.expect(b, env, ta)
                return ta
            case Inl(a) | Inr(a):
                h = self.head(hint) if hint is not None else None
                left, right = (h.left, h.right) if isinstance(h, Sum) else (self.fresh(), self.fresh())
                if isinstance(t, Inl):
                    self.expect(a, env, left)
                else:
                    self.expect(a, env, right)
                return Sum(left, right)
            case CaseSum(s, x, a, y, b):
                left, right = self.fresh(), self.fresh()
                self.unify(self.infer(s, env), Sum(left, right), s)
                ta = self.infer(a, {**env, x: left}, hint)
                tb = self.infer(b, {**env, y: right}, ta if hint is None else hint)
                self.unify(tb, ta, b)
                return ta
            case CaseVoid(a):
                self.expect(a, env, VOID)
                return hint if hint is not None else self.fresh()
            case UnitVal():
                return UNIT
            case Pair(a, b):
                h = self.head(hint) if hint is not None else None
                ha, hb = (h.left, h.right) if isinstance(h, Prod) else (None, None)
                return Prod(self.infer(a, env, ha), self.infer(b, env, hb))
            case CasePair(s, x, y, body):
                left, right = self.fresh(), self.fresh()
                self.unify(self.infer(s, env), Prod(left, right), s)
                return self.infer(body, {**env, x: left, y: right}, hint)
            case Fst(a) | Snd(a):
                left, right = self.fresh(), self.fresh()
                self.unify(self.infer(a, env), Prod(left, right), a)
                return left if isinstance(t, Fst) else right
            case Lam(x, body, ann):
                h = self.head(hint) if hint is not None else None
                if ann is not None:
                    dom = self.check_annotation(ann, t)
                    if isinstance(h, Arrow):
                        self.unify(dom, h.dom, t)
                else:
                    dom = h.dom if isinstance(h, Arrow) else self.fresh()
                cod = self.infer(body, {**env, x: dom}, h.cod if isinstance(h, Arrow) else None)
                return Arrow(dom, cod)
            case App(f, a):
                fty = self.head(self.infer(f, env))
                if isinstance(fty, Arrow):
                    self.expect(a, env, fty.dom)
                    return fty.cod
                dom, cod = self.fresh(), self.fresh()
                self.unify(fty, Arrow(dom, cod), f)
                self.expect(a, env, dom)
                return cod
            case Iterate(body, x, seed):
                sty = self.infer(seed, env)
                out = hint if hint is not None else self.fresh()
                self.expect(body, {**env, x: sty}, Sum(sty, out))
                return out
            case Rec(f, body):
                fty = hint if hint is not None else self.fresh()
                bty = self.infer(body, {**env, f: fty}, fty)
                self.unify(bty, fty, body)
                h = self.head(fty)
                if isinstance(h, Meta):
                    self.unify(h, Arrow(self.fresh(), self.fresh()), t)
                elif not isinstance(h, Arrow):
                    self.fail(f"rec at non-arrow type {self.show(h)}", t)
                return fty
            case Roll(a, ann):
                mu = self.check_annotation(ann, t) if ann is not None else None
                if hint is not None:
                    h = self.head(hint)
                    if mu is None:
                        mu = self.resolve(h)
                    elif not isinstance(h, Meta):
                        self.unify(mu, h, t)
                if not isinstance(mu, Mu):
                    self.fail("cannot determine the recursive type of roll; write roll[mu 'a. ...]", t)
                self.expect(a, env, unfold_mu(mu))
                return mu
            case CaseRoll(s, x, body):
                sty = self.resolve(self.infer(s, env))
                if not isinstance(sty, Mu):
                    self.fail(f"case-roll scrutinee must have a recursive type, got {sty}", s)
                return self.infer(body, {**env, x: unfold_mu(sty)}, hint)
            case Annot(e, ty):
                ty = self.check_annotation(ty, t)
                self.expect(e, env, ty)
                return ty
        if self.lang is Lang.SOURCE:
            self.fail(f"target-language construct in a source program: {type(t).__name__}", t)
        match t:
            case TangentZero() | TangentBasis():
                return TANGENT
            case TangentAdd(a, b):
                self.expect(a, env, TANGENT)
                self.expect(b, env, TANGENT)
                return TANGENT
            case TangentScale(v, s):
                self.expect(v, env, TANGENT)
                self.expect(s, env, REAL)
                return TANGENT
            case TangentProj(i, a):
                self.expect(a, env, TANGENT)
                return real_pow(i)
        raise TypeError(f"not a term: {t!r}")

    def finalize(self, ty: Type) -> Type:
        """Resolve, then turn leftover metas into type variables."""
        ty = self.resolve(ty)
        match ty:
            case Meta(i):
                return TVar(f"t{i}")
            case Prod(a, b):
                return Prod(self.finalize(a), self.finalize(b))
            case Sum(a, b):
                return Sum(self.finalize(a), self.finalize(b))
            case Arrow(a, b):
                return Arrow(self.finalize(a), self.finalize(b))
            case Mu(v, b):
                return Mu(v, self.finalize(b))
        return ty


def typecheck(
    t: Term,
    ctx: TypingContext | None = None,
    lang: Lang = Lang.SOURCE,
    *,
    registry: Registry = DEFAULT_REGISTRY,
    spans: Mapping[int, tuple[int, int]] | None = None,
    expected: Type | None = None,
) -> Typing:
    ctx = ctx or TypingContext()
    chk = _Checker(lang, registry, ctx.tvars, spans)
    env = {}
    for name, ty in ctx.vars:
        env[name] = chk.check_annotation(ty, t)
    try:
        ty = chk.infer(t, env, expected)
        if expected is not None:
            chk.unify(ty, expected, t)
    except RecursionError:
        raise TypeCheckError("term nested too deeply", t) from None
    contexts = {k: {v: chk.finalize(ty_) for v, ty_ in m.items()} for k, m in chk.sign_contexts.items()}
    return Typing(chk.finalize(ty), contexts)


def infer(t: Term, ctx: TypingContext | None = None, lang: Lang = Lang.SOURCE, **kw) -> Type:
    return typecheck(t, ctx, lang, **kw).type

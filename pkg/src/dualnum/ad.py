"""The dual-numbers AD macro, the reverse-mode wrapper, and proj/zero terms.

A single transform serves both modes: what changes between forward and reverse
mode is only the dimension ``k`` chosen for ``tangent`` at evaluation time.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping

from dualnum.prims import DEFAULT_REGISTRY, Registry
from dualnum.syntax import (
    REAL, TANGENT, Annot, App, Arrow, CasePair, CaseRoll, CaseSum, CaseVoid,
    Const, Inl, Inr, Iterate, Lam, Let, Meta, Mu, NameSupply, Pair, PrimOp,
    Prod, Rec, Roll, Sign, Sum, TangentAdd, TangentBasis, TangentScale,
    TangentT, TangentZero, Term, TVar, Type, UnitVal, Var, Real, Unit, Void,
    all_names, desugar, free_tvars, map_children, real_pow, substitute_many, substitute_type,
)
from dualnum.typecheck import Lang, TypingContext, typecheck

__all__ = [
    "SignMode", "ADError", "ad_transform", "ad_transform_type", "ad_context",
    "wrap_term", "typeproj_term", "typezero_term",
]


class SignMode(enum.Enum):
    NAIVE = "naive"
    EFFICIENT = "efficient"


class ADError(Exception):
    pass


def ad_transform_type(ty: Type) -> Type:
    """real becomes real * tangent; every other former is mapped homomorphically."""
    match ty:
        case Real():
            return Prod(REAL, TANGENT)
        case Unit() | Void() | TVar():
            return ty
        case Prod(a, b):
            return Prod(ad_transform_type(a), ad_transform_type(b))
        case Sum(a, b):
            return Sum(ad_transform_type(a), ad_transform_type(b))
        case Arrow(a, b):
            return Arrow(ad_transform_type(a), ad_transform_type(b))
        case Mu(v, b):
            return Mu(v, ad_transform_type(b))
        case TangentT():
            raise ADError("tangent is not a source type")
        case Meta():
            raise ADError("cannot transform an unresolved type")
    raise TypeError(f"not a type: {ty!r}")


def ad_context(ctx: TypingContext) -> TypingContext:
    return TypingContext(tuple((x, ad_transform_type(t)) for x, t in ctx.vars), ctx.tvars)


class _Transform:
    def __init__(self, t: Term, registry: Registry, mode: SignMode, sign_contexts: Mapping[int, Mapping[str, Type]], tvars):
        self.registry = registry
        self.mode = mode
        self.sign_contexts = sign_contexts
        self.fresh = NameSupply(all_names(t))
        self.tvars = tvars
        self.proj_cache: dict[Type, Term] = {}

    def go(self, t: Term) -> Term:
        match t:
            case Var():
                return t
            case Const():
                return Pair(t, TangentZero())
            case PrimOp(op, args):
                return self.prim(op, args)
            case Sign(a):
                if self.mode is SignMode.NAIVE:
                    p = self.fresh("p")
                    return Sign(CasePair(self.go(a), p, "_", Var(p)))
                return self.efficient_sign(t)
            case Lam(x, body, ann):
                return Lam(x, self.go(body), None if ann is None else ad_transform_type(ann))
            case Roll(a, ann):
                return Roll(self.go(a), None if ann is None else ad_transform_type(ann))
            case Annot(e, ty):
                return Annot(self.go(e), ad_transform_type(ty))
            case Let() | Inl() | Inr() | CaseSum() | CaseVoid() | UnitVal() | Pair() | CasePair() | App() | Iterate() | Rec() | CaseRoll():
                return map_children(t, self.go)
        raise ADError(f"cannot transform {type(t).__name__} (not a source construct)")

    def prim(self, op: str, args: tuple[Term, ...]) -> Term:
        spec = self.registry.get(op)
        if spec is None:
            raise ADError(f"unknown primitive {op}")
        xs = [self.fresh("x") for _ in args]
        dxs = [self.fresh("dx") for _ in args]
        y = self.fresh("y")
        zs = [self.fresh("z") for _ in args]
        rename = {p: Var(x) for p, x in zip(spec.params, xs)}
        tangent: Term = TangentZero()
        for i, (dx, z) in enumerate(zip(dxs, zs)):
            term = TangentScale(Var(dx), Var(z))
            tangent = term if i == 0 else TangentAdd(tangent, term)
        out: Term = Pair(Var(y), tangent)
        for z, partial in reversed(list(zip(zs, spec.partials))):
            out = Let(z, substitute_many(partial, rename), out)
        out = Let(y, PrimOp(op, tuple(Var(x) for x in xs)), out)
        for a, x, dx in reversed(list(zip(args, xs, dxs))):
            out = CasePair(self.go(a), x, dx, out)
        return out

    def efficient_sign(self, t: Sign) -> Term:
        ctx = self.sign_contexts.get(id(t))
        if ctx is None:
            raise ADError("efficient sign mode needs the types of the variables in scope")
        out: Term = t
        for x in sorted(t.arg.fv, reverse=True):
            if x not in ctx:
                raise ADError(f"no type recorded for {x}")
            out = Let(x, App(self.proj(ctx[x]), Var(x)), out)
        return out

    def proj(self, ty: Type) -> Term:
        if ty not in self.proj_cache:
            self.proj_cache[ty] = typeproj_term(ty, self.tvars)
        return self.proj_cache[ty]


def ad_transform(
    t: Term,
    registry: Registry = DEFAULT_REGISTRY,
    sign_mode: SignMode | str = SignMode.NAIVE,
    ctx: TypingContext | None = None,
) -> Term:
    """D[t].  Sugar is expanded first; ``ctx`` types free variables (efficient mode)."""
    mode = SignMode(sign_mode)
    core = desugar(t)
    contexts: Mapping[int, Mapping[str, Type]] = {}
    tvars: tuple[str, ...] = ctx.tvars if ctx else ()
    if mode is SignMode.EFFICIENT:
        contexts = typecheck(core, ctx, Lang.SOURCE, registry=registry).sign_contexts
    return _Transform(core, registry, mode, contexts, tvars).go(core)


def wrap_term(s: int) -> Term:
    """fun x -> case x of (x1, ..., xs) -> ((x1, dbasis 1), ..., (xs, dbasis s))"""
    if s < 1:
        raise ValueError("wrap_term needs s >= 1")
    xs = [f"x{i}" for i in range(1, s + 1)]
    body: Term = Pair(Var(xs[0]), TangentBasis(1))
    for i in range(2, s + 1):
        body = Pair(body, Pair(Var(xs[i - 1]), TangentBasis(i)))
    if s == 1:
        return Lam(xs[0], body, REAL)
    # real^i = real^(i-1) * real, so peel the last component first
    steps = []
    scrut = "x"
    for i in range(s, 1, -1):
        left = f"r{i - 1}" if i > 2 else xs[0]
        steps.append((scrut, left, xs[i - 1]))
        scrut = left
    for scrut, left, right in reversed(steps):
        body = CasePair(Var(scrut), left, right, body)
    return Lam("x", body, real_pow(s))


# ---------------------------------------------------------------------------
# proj_tau : D[tau] -> tau and zero_tau : tau -> D[tau]
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _MuInfo:
    proj: Term
    zero: Term
    src: Type
    dual: Type


class _ProjBuilder:
    def __init__(self, tvars):
        self.tvars = frozenset(tvars)
        self.fresh = NameSupply()

    @staticmethod
    def close_src(ty: Type, env: Mapping[str, _MuInfo]) -> Type:
        for a, info in env.items():
            ty = substitute_type(ty, a, info.src)
        return ty

    @staticmethod
    def close_dual(ty: Type, env: Mapping[str, _MuInfo]) -> Type:
        ty = ad_transform_type(ty)
        for a, info in env.items():
            ty = substitute_type(ty, a, info.dual)
        return ty

    def lam(self, x: str, body: Term, ann: Type) -> Term:
        # leftover inference variables surface as type variables outside Delta
        return Lam(x, body, ann if free_tvars(ann) <= self.tvars else None)

    def ident(self, ann: Type) -> Term:
        x = self.fresh("x")
        return self.lam(x, Var(x), ann)

    def build(self, ty: Type, env: Mapping[str, _MuInfo], want_proj: bool) -> Term:
        """proj (``want_proj``) or zero for ``ty`` with mu-bound variables in ``env``."""
        dom = self.close_dual(ty, env) if want_proj else self.close_src(ty, env)
        match ty:
            case Real():
                x = self.fresh("x")
                if want_proj:
                    a = self.fresh("a")
                    return self.lam(x, CasePair(Var(x), a, "_", Var(a)), dom)
                return self.lam(x, Pair(Var(x), TangentZero()), dom)
            case Unit() | Void():
                return self.ident(dom)
            case TVar(name):
                if name in env:
                    return env[name].proj if want_proj else env[name].zero
                return self.ident(dom)
            case Prod(a, b):
                x, y, z = self.fresh("x"), self.fresh("y"), self.fresh("z")
                fa, fb = self.build(a, env, want_proj), self.build(b, env, want_proj)
                return self.lam(x, CasePair(Var(x), y, z, Pair(App(fa, Var(y)), App(fb, Var(z)))), dom)
            case Sum(a, b):
                x, y, z = self.fresh("x"), self.fresh("y"), self.fresh("z")
                fa, fb = self.build(a, env, want_proj), self.build(b, env, want_proj)
                return self.lam(x, CaseSum(Var(x), y, Inl(App(fa, Var(y))), z, Inr(App(fb, Var(z)))), dom)
            case Arrow(a, b):
                # contravariant in the domain: proj_{a->b} f = proj_b . f . zero_a
                f, x = self.fresh("f"), self.fresh("x")
                fa = self.build(a, env, not want_proj)
                fb = self.build(b, env, want_proj)
                return self.lam(f, Lam(x, App(fb, App(Var(f), App(fa, Var(x))))), dom)
            case Mu(var, body):
                return self.mu(var, body, env, want_proj)
        raise ADError(f"no projection for type {ty}")

    def mu(self, var: str, body: Type, env: Mapping[str, _MuInfo], want_proj: bool) -> Term:
        src = self.close_src(Mu(var, body), env)
        dual = self.close_dual(Mu(var, body), env)
        p = self.fresh("p" if want_proj else "q")
        q = self.fresh("q" if want_proj else "p")
        # the counterpart map one level deep, for negative occurrences of var
        inner_env = {**env, var: _MuInfo(Var(p), Var(q), src, dual) if want_proj else _MuInfo(Var(q), Var(p), src, dual)}
        counterpart = self._mu_rec(q, var, body, inner_env, not want_proj, src, dual)
        outer_env = {**env, var: _MuInfo(Var(p), counterpart, src, dual) if want_proj else _MuInfo(counterpart, Var(p), src, dual)}
        return self._mu_rec(p, var, body, outer_env, want_proj, src, dual)

    def _mu_rec(self, name: str, var: str, body: Type, env, want_proj: bool, src: Type, dual: Type) -> Term:
        x, y = self.fresh("x"), self.fresh("y")
        inner = self.build(body, env, want_proj)
        out_ty = src if want_proj else dual
        in_ty = dual if want_proj else src
        return Rec(name, Lam(x, CaseRoll(Var(x), y, Roll(App(inner, Var(y)), out_ty)), in_ty))


def typeproj_term(ty: Type, tvars=()) -> Term:
    """Closed term of type D[ty] -> ty."""
    return _ProjBuilder(tvars).build(ty, {}, True)


def typezero_term(ty: Type, tvars=()) -> Term:
    """Closed term of type ty -> D[ty]."""
    return _ProjBuilder(tvars).build(ty, {}, False)

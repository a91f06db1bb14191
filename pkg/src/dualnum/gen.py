"""Random well-typed source terms for property tests.

Generation is type-directed.  Lambda binders and rolls are always annotated,
and subterms whose type inference could not recover on its own (let-bound
terms, scrutinees, recursive definitions) are wrapped in an ascription, so
every generated term type checks without guessing.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from dualnum.prims import DEFAULT_REGISTRY, Registry
from dualnum.syntax import (
    REAL, UNIT, Annot, App, Arrow, CasePair, CaseRoll, CaseSum, Const, Inl,
    Inr, Iterate, Lam, Let, Mu, Pair, PrimOp, Prod, Rec, Roll, Sign, Sum,
    Term, TVar, Type, UnitVal, Var, unfold_mu,
)

__all__ = ["LIST", "TREE", "GenConfig", "TermGen", "random_typed_term", "random_subst_triple"]

LIST = Mu("a", Sum(UNIT, Prod(REAL, TVar("a"))))
TREE = Mu("a", Sum(REAL, Prod(TVar("a"), TVar("a"))))

NAMES = ("x", "y", "z", "f", "g", "u", "v")


@dataclass(frozen=True)
class GenConfig:
    type_depth: int = 2
    term_depth: int = 4
    max_arity_env: int = 3


class TermGen:
    def __init__(self, rng: random.Random, cfg: GenConfig = GenConfig(), registry: Registry = DEFAULT_REGISTRY):
        self.rng = rng
        self.cfg = cfg
        self.ops = sorted(registry.items())

    def name(self) -> str:
        return self.rng.choice(NAMES)

    # -- types

    def type(self, depth: int | None = None) -> Type:
        d = self.cfg.type_depth if depth is None else depth
        r = self.rng.random()
        if d == 0 or r < 0.3:
            return self.rng.choice([REAL, REAL, UNIT, LIST, TREE])
        kind = self.rng.choice(["prod", "sum", "arrow"])
        a, b = self.type(d - 1), self.type(d - 1)
        return {"prod": Prod, "sum": Sum, "arrow": Arrow}[kind](a, b)

    # -- terms

    def term(self, ty: Type, env: dict[str, Type], depth: int | None = None) -> Term:
        d = self.cfg.term_depth if depth is None else depth
        vars_ = [x for x, t in env.items() if t == ty]
        if d <= 0:
            if vars_ and self.rng.random() < 0.5:
                return Var(self.rng.choice(vars_))
            return self.base(ty, env)
        choices = ["intro"] * 4 + ["let", "case_sum", "case_pair", "app", "case_roll", "iterate", "sign"]
        if vars_:
            choices += ["var"] * 3
        if isinstance(ty, Arrow):
            choices.append("rec")
        kind = self.rng.choice(choices)
        return getattr(self, f"g_{kind}")(ty, env, d)

    def base(self, ty: Type, env: dict[str, Type]) -> Term:
        """A small closed-form term of type ``ty`` (no recursion on depth)."""
        match ty:
            case Prod(a, b):
                return Pair(self.base(a, env), self.base(b, env))
            case Sum(a, b):
                return Inl(self.base(a, env)) if self.rng.random() < 0.5 else Inr(self.base(b, env))
            case Arrow(a, b):
                x = self.name()
                return Lam(x, self.term(b, {**env, x: a}, 0), a)
            case Mu(_, Sum()):
                # the left summand of LIST and TREE is the non-recursive one
                return Roll(Inl(self.base(unfold_mu(ty).left, env)), ty)
        if ty == UNIT:
            return UnitVal()
        return Const(self.const())

    def const(self) -> float:
        return self.rng.choice([0.0, 1.0, -1.5, 2.0, 0.25, round(self.rng.uniform(-3, 3), 3)])

    def asc(self, t: Term, ty: Type) -> Term:
        return Annot(t, ty)

    def g_var(self, ty, env, d):
        return Var(self.rng.choice([x for x, t in env.items() if t == ty]))

    def g_intro(self, ty, env, d):
        match ty:
            case Prod(a, b):
                return Pair(self.term(a, env, d - 1), self.term(b, env, d - 1))
            case Sum(a, b):
                return Inl(self.term(a, env, d - 1)) if self.rng.random() < 0.5 else Inr(self.term(b, env, d - 1))
            case Arrow(a, b):
                x = self.name()
                return Lam(x, self.term(b, {**env, x: a}, d - 1), a)
            case Mu():
                return Roll(self.term(unfold_mu(ty), env, d - 1), ty)
        if ty == UNIT:
            return UnitVal()
        if self.rng.random() < 0.3:
            return Const(self.const())
        name, spec = self.rng.choice(self.ops)
        return PrimOp(name, tuple(self.term(REAL, env, d - 1) for _ in range(spec.arity)))

    def g_let(self, ty, env, d):
        x, s = self.name(), self.type(1)
        return Let(x, self.asc(self.term(s, env, d - 1), s), self.term(ty, {**env, x: s}, d - 1))

    def g_case_sum(self, ty, env, d):
        a, b = self.type(1), self.type(1)
        x, y = self.name(), self.rng.choice(NAMES + ("_",))
        scrut = self.asc(self.term(Sum(a, b), env, d - 1), Sum(a, b))
        env_y = env if y == "_" else {**env, y: b}
        return CaseSum(scrut, x, self.term(ty, {**env, x: a}, d - 1), y, self.term(ty, env_y, d - 1))

    def g_sign(self, ty, env, d):
        c = self.term(REAL, env, d - 1)
        return CaseSum(Sign(c), "_", self.term(ty, env, d - 1), "_", self.term(ty, env, d - 1))

    def g_case_pair(self, ty, env, d):
        a, b = self.type(1), self.type(1)
        x, y = self.name(), self.name()
        scrut = self.asc(self.term(Prod(a, b), env, d - 1), Prod(a, b))
        inner = {**env, x: a, y: b} if x != y else {**env, y: b}
        return CasePair(scrut, x, y, self.term(ty, inner, d - 1))

    def g_app(self, ty, env, d):
        a = self.type(1)
        fn = self.asc(self.term(Arrow(a, ty), env, d - 1), Arrow(a, ty))
        return App(fn, self.term(a, env, d - 1))

    def g_case_roll(self, ty, env, d):
        mu = self.rng.choice([LIST, TREE])
        x = self.name()
        scrut = self.asc(self.term(mu, env, d - 1), mu)
        return CaseRoll(scrut, x, self.term(ty, {**env, x: unfold_mu(mu)}, d - 1))

    def g_iterate(self, ty, env, d):
        s = self.type(1)
        x = self.name()
        body = self.term(Sum(s, ty), {**env, x: s}, d - 1)
        return Iterate(body, x, self.asc(self.term(s, env, d - 1), s))

    def g_rec(self, ty, env, d):
        f, x = self.name(), self.name()
        inner = {**env, f: ty}
        body = self.term(ty.cod, {**inner, x: ty.dom}, d - 1)
        return self.asc(Rec(f, Lam(x, body, ty.dom)), ty)

    def value(self, ty: Type, env: dict[str, Type], depth: int = 2) -> Term:
        """A syntactic value (possibly mentioning variables of ``env``)."""
        vars_ = [x for x, t in env.items() if t == ty]
        if vars_ and self.rng.random() < 0.4:
            return Var(self.rng.choice(vars_))
        match ty:
            case Prod(a, b):
                return Pair(self.value(a, env, depth - 1), self.value(b, env, depth - 1))
            case Sum(a, b):
                return Inl(self.value(a, env, depth - 1)) if self.rng.random() < 0.5 else Inr(self.value(b, env, depth - 1))
            case Arrow(a, b):
                x = self.name()
                return Lam(x, self.term(b, {**env, x: a}, max(depth, 0)), a)
            case Mu():
                return Roll(self.value(unfold_mu(ty), env, depth - 1), ty) if depth > 0 else self.base(ty, env)
        if ty == UNIT:
            return UnitVal()
        return Const(self.const())


def random_typed_term(seed: int, cfg: GenConfig = GenConfig()) -> tuple[dict[str, Type], Term, Type]:
    """(Gamma, t, tau) with Gamma |- t : tau."""
    g = TermGen(random.Random(seed), cfg)
    env = {g.name(): g.type(1) for _ in range(g.rng.randint(0, cfg.max_arity_env))}
    ty = g.type()
    return env, g.term(ty, env), ty


def random_subst_triple(seed: int, cfg: GenConfig = GenConfig()) -> tuple[dict[str, Type], Term, str, Term]:
    """(Gamma, t, x, v) with v a value of Gamma(x), and t typed under Gamma."""
    g = TermGen(random.Random(seed), cfg)
    env = {g.name(): g.type(1) for _ in range(g.rng.randint(1, cfg.max_arity_env + 1))}
    x = g.rng.choice(sorted(env))
    t = g.term(g.type(), env)
    v = g.value(env[x], env)
    return env, t, x, v

"""Abstract syntax for the source and target languages.

Types and terms are frozen dataclasses.  Equality on both is alpha-equivalence:
``__eq__`` and ``__hash__`` go through a nameless key in which bound variables
are replaced by de Bruijn indices.
"""

from __future__ import annotations

import dataclasses
import itertools
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, ClassVar, Iterable, Iterator

__all__ = [
    "Type", "Real", "Unit", "Void", "Prod", "Sum", "Arrow", "TVar", "Mu",
    "TangentT", "Meta", "REAL", "UNIT", "VOID", "TANGENT", "real_pow",
    "Term", "Var", "Let", "Const", "PrimOp", "Sign", "Inl", "Inr", "CaseSum",
    "CaseVoid", "UnitVal", "Pair", "CasePair", "Lam", "App", "Iterate", "Rec",
    "Roll", "CaseRoll", "Annot", "TangentZero", "TangentAdd", "TangentScale",
    "TangentBasis", "TangentProj", "If", "Fst", "Snd",
    "free_vars", "free_tvars", "substitute", "substitute_many",
    "substitute_type", "unfold_mu", "alpha_eq", "fresh_name", "NameSupply",
    "all_names", "is_value", "is_target_only", "desugar", "letrec", "unroll",
    "beta_step", "normalize", "NoRedex", "map_children", "subterms",
    "contains_tangent",
]


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Type:
    def __eq__(self, other: object) -> bool:
        return isinstance(other, Type) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    @cached_property
    def key(self) -> tuple:
        return _type_key(self, ())

    def __str__(self) -> str:
        from dualnum.surface import print_type

        return print_type(self)


@dataclass(frozen=True, eq=False)
class Real(Type):
    pass


@dataclass(frozen=True, eq=False)
class Unit(Type):
    pass


@dataclass(frozen=True, eq=False)
class Void(Type):
    pass


@dataclass(frozen=True, eq=False)
class TangentT(Type):
    pass


@dataclass(frozen=True, eq=False)
class Prod(Type):
    left: Type
    right: Type


@dataclass(frozen=True, eq=False)
class Sum(Type):
    left: Type
    right: Type


@dataclass(frozen=True, eq=False)
class Arrow(Type):
    dom: Type
    cod: Type


@dataclass(frozen=True, eq=False)
class TVar(Type):
    name: str


@dataclass(frozen=True, eq=False)
class Mu(Type):
    var: str
    body: Type


@dataclass(frozen=True, eq=False)
class Meta(Type):
    """Unification variable; only produced by the type checker."""

    id: int


REAL = Real()
UNIT = Unit()
VOID = Void()
TANGENT = TangentT()


def real_pow(n: int) -> Type:
    """``real^1 = real`` and ``real^(i+1) = real^i * real``."""
    if n < 1:
        raise ValueError("real_pow needs n >= 1")
    ty: Type = REAL
    for _ in range(n - 1):
        ty = Prod(ty, REAL)
    return ty


def _type_key(ty: Type, bound: tuple[str, ...]) -> tuple:
    match ty:
        case TVar(name):
            for depth, b in enumerate(reversed(bound)):
                if b == name:
                    return ("bv", depth)
            return ("tv", name)
        case Mu(var, body):
            return ("mu", _type_key(body, bound + (var,)))
        case Prod(a, b) | Sum(a, b) | Arrow(a, b):
            return (type(ty).__name__, _type_key(a, bound), _type_key(b, bound))
        case Meta(i):
            return ("meta", i)
        case _:
            return (type(ty).__name__,)


def free_tvars(ty: Type) -> frozenset[str]:
    match ty:
        case TVar(name):
            return frozenset([name])
        case Mu(var, body):
            return free_tvars(body) - {var}
        case Prod(a, b) | Sum(a, b) | Arrow(a, b):
            return free_tvars(a) | free_tvars(b)
        case _:
            return frozenset()


def _type_names(ty: Type) -> set[str]:
    match ty:
        case TVar(name):
            return {name}
        case Mu(var, body):
            return {var} | _type_names(body)
        case Prod(a, b) | Sum(a, b) | Arrow(a, b):
            return _type_names(a) | _type_names(b)
        case _:
            return set()


def substitute_type(ty: Type, tvar: str, replacement: Type) -> Type:
    """Capture-avoiding ``ty[replacement/tvar]``."""
    match ty:
        case TVar(name):
            return replacement if name == tvar else ty
        case Mu(var, body):
            if var == tvar or tvar not in free_tvars(body):
                return ty
            if var in free_tvars(replacement):
                avoid = free_tvars(replacement) | _type_names(body) | {tvar}
                new = fresh_name(var, avoid)
                body = substitute_type(body, var, TVar(new))
                var = new
            return Mu(var, substitute_type(body, tvar, replacement))
        case Prod(a, b):
            return Prod(substitute_type(a, tvar, replacement), substitute_type(b, tvar, replacement))
        case Sum(a, b):
            return Sum(substitute_type(a, tvar, replacement), substitute_type(b, tvar, replacement))
        case Arrow(a, b):
            return Arrow(substitute_type(a, tvar, replacement), substitute_type(b, tvar, replacement))
        case _:
            return ty


def unfold_mu(ty: Mu) -> Type:
    return substitute_type(ty.body, ty.var, ty)


def contains_tangent(ty: Type) -> bool:
    match ty:
        case TangentT():
            return True
        case Mu(_, body):
            return contains_tangent(body)
        case Prod(a, b) | Sum(a, b) | Arrow(a, b):
            return contains_tangent(a) or contains_tangent(b)
        case _:
            return False


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Term:
    # subterm field -> binder fields whose names scope over it
    _binds: ClassVar[dict[str, tuple[str, ...]]] = {}
    _binder_fields: ClassVar[frozenset[str]] = frozenset()

    def __init_subclass__(cls, **kw):
        super().__init_subclass__(**kw)
        cls._binder_fields = frozenset(itertools.chain.from_iterable(cls._binds.values()))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Term) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    @cached_property
    def key(self) -> tuple:
        return _term_key(self, ())

    @cached_property
    def fv(self) -> frozenset[str]:
        return _free_vars(self)

    def __str__(self) -> str:
        from dualnum.surface import print_term

        return print_term(self)


@dataclass(frozen=True, eq=False)
class Var(Term):
    name: str


@dataclass(frozen=True, eq=False)
class Let(Term):
    name: str
    bound: Term
    body: Term
    _binds = {"body": ("name",)}


@dataclass(frozen=True, eq=False)
class Const(Term):
    value: float


@dataclass(frozen=True, eq=False)
class PrimOp(Term):
    op: str
    args: tuple[Term, ...]

    def __post_init__(self):
        if not isinstance(self.args, tuple):
            object.__setattr__(self, "args", tuple(self.args))


@dataclass(frozen=True, eq=False)
class Sign(Term):
    arg: Term


@dataclass(frozen=True, eq=False)
class Inl(Term):
    arg: Term


@dataclass(frozen=True, eq=False)
class Inr(Term):
    arg: Term


@dataclass(frozen=True, eq=False)
class CaseSum(Term):
    scrut: Term
    lname: str
    left: Term
    rname: str
    right: Term
    _binds = {"left": ("lname",), "right": ("rname",)}


@dataclass(frozen=True, eq=False)
class CaseVoid(Term):
    arg: Term


@dataclass(frozen=True, eq=False)
class UnitVal(Term):
    pass


@dataclass(frozen=True, eq=False)
class Pair(Term):
    fst: Term
    snd: Term


@dataclass(frozen=True, eq=False)
class CasePair(Term):
    scrut: Term
    x: str
    y: str
    body: Term
    _binds = {"body": ("x", "y")}


@dataclass(frozen=True, eq=False)
class Lam(Term):
    name: str
    body: Term
    ann: Type | None = None
    _binds = {"body": ("name",)}


@dataclass(frozen=True, eq=False)
class App(Term):
    fn: Term
    arg: Term


@dataclass(frozen=True, eq=False)
class Iterate(Term):
    """``iterate body from name = seed``: rerun ``body`` while it yields ``inl``."""

    body: Term
    name: str
    seed: Term
    _binds = {"body": ("name",)}


@dataclass(frozen=True, eq=False)
class Rec(Term):
    name: str
    body: Term
    _binds = {"body": ("name",)}


@dataclass(frozen=True, eq=False)
class Roll(Term):
    arg: Term
    ann: Type | None = None


@dataclass(frozen=True, eq=False)
class CaseRoll(Term):
    scrut: Term
    name: str
    body: Term
    _binds = {"body": ("name",)}


@dataclass(frozen=True, eq=False)
class Annot(Term):
    term: Term
    ty: Type


@dataclass(frozen=True, eq=False)
class TangentZero(Term):
    pass


@dataclass(frozen=True, eq=False)
class TangentAdd(Term):
    left: Term
    right: Term


@dataclass(frozen=True, eq=False)
class TangentScale(Term):
    tangent: Term
    scalar: Term


@dataclass(frozen=True, eq=False)
class TangentBasis(Term):
    index: int


@dataclass(frozen=True, eq=False)
class TangentProj(Term):
    index: int
    arg: Term


# sugar; removed by desugar()


@dataclass(frozen=True, eq=False)
class If(Term):
    """``if c then a else b`` takes ``a`` when ``c < 0``."""

    cond: Term
    then: Term
    else_: Term


@dataclass(frozen=True, eq=False)
class Fst(Term):
    arg: Term


@dataclass(frozen=True, eq=False)
class Snd(Term):
    arg: Term


_TARGET_ONLY = (TangentZero, TangentAdd, TangentScale, TangentBasis, TangentProj)


def is_target_only(t: Term) -> bool:
    return isinstance(t, _TARGET_ONLY)


# -- generic traversal -------------------------------------------------------


def _term_fields(t: Term) -> Iterator[tuple[str, object]]:
    for f in dataclasses.fields(t):
        yield f.name, getattr(t, f.name)


def subterms(t: Term) -> Iterator[tuple[str, Term]]:
    """Immediate subterms in left-to-right order, with their field names."""
    for name, val in _term_fields(t):
        if isinstance(val, Term):
            yield name, val
        elif isinstance(val, tuple):
            for i, v in enumerate(val):
                yield f"{name}[{i}]", v


def map_children(t: Term, fn: Callable[[Term], Term], tyfn: Callable[[Type], Type] | None = None) -> Term:
    """Rebuild ``t`` with ``fn`` applied to each immediate subterm."""
    changes = {}
    for name, val in _term_fields(t):
        if isinstance(val, Term):
            new = fn(val)
            if new is not val:
                changes[name] = new
        elif isinstance(val, tuple):
            new_t = tuple(fn(v) for v in val)
            if any(a is not b for a, b in zip(new_t, val)):
                changes[name] = new_t
        elif tyfn is not None and isinstance(val, Type):
            changes[name] = tyfn(val)
    return dataclasses.replace(t, **changes) if changes else t


def _term_key(t: Term, bound: tuple[str, ...]) -> tuple:
    if isinstance(t, Var):
        for depth, b in enumerate(reversed(bound)):
            if b == t.name:
                return ("bv", depth)
        return ("fv", t.name)
    parts: list = [type(t).__name__]
    binds = t._binds
    for name, val in _term_fields(t):
        if name in t._binder_fields:
            continue
        if isinstance(val, Term):
            inner = bound + tuple(getattr(t, b) for b in binds.get(name, ()))
            parts.append(_term_key(val, inner))
        elif isinstance(val, tuple):
            parts.append(tuple(_term_key(v, bound) for v in val))
        elif isinstance(val, Type):
            parts.append(val.key)
        else:
            parts.append(val)
    return tuple(parts)


def _free_vars(t: Term) -> frozenset[str]:
    if isinstance(t, Var):
        return frozenset([t.name])
    out: set[str] = set()
    for name, val in _term_fields(t):
        if isinstance(val, Term):
            fv = val.fv
            bs = t._binds.get(name)
            if bs:
                fv = fv - {getattr(t, b) for b in bs}
            out |= fv
        elif isinstance(val, tuple):
            for v in val:
                out |= v.fv
    return frozenset(out)


def free_vars(t: Term) -> frozenset[str]:
    return t.fv


def all_names(t: Term) -> set[str]:
    """Every variable name occurring in ``t``, bound or free."""
    names: set[str] = set()
    stack = [t]
    while stack:
        cur = stack.pop()
        if isinstance(cur, Var):
            names.add(cur.name)
            continue
        for b in cur._binder_fields:
            names.add(getattr(cur, b))
        stack.extend(v for _, v in subterms(cur))
    return names


def alpha_eq(a: Term, b: Term) -> bool:
    return a.key == b.key


_TRAILING_DIGITS = re.compile(r"\d+$")


def fresh_name(base: str, avoid: Iterable[str]) -> str:
    avoid = set(avoid)
    stem = _TRAILING_DIGITS.sub("", base) or "v"
    if stem == "_":
        stem = "w"
    for i in itertools.count(1):
        cand = f"{stem}{i}"
        if cand not in avoid:
            return cand
    raise AssertionError  # pragma: no cover


class NameSupply:
    """Monotone counter producing names outside a reserved set."""

    def __init__(self, reserved: Iterable[str] = (), prefix: str = "d"):
        self.reserved = set(reserved)
        self.prefix = prefix
        self.counter = 0

    def __call__(self, hint: str | None = None) -> str:
        stem = hint or self.prefix
        while True:
            self.counter += 1
            cand = f"{stem}_{self.counter}"
            if cand not in self.reserved:
                self.reserved.add(cand)
                return cand


# -- substitution -------------------------------------------------------------


def substitute(term: Term, var: str, replacement: Term) -> Term:
    """Capture-avoiding ``term[replacement/var]``."""
    return substitute_many(term, {var: replacement})


def substitute_many(term: Term, sub: dict[str, Term]) -> Term:
    """Simultaneous capture-avoiding substitution."""
    sub = {k: v for k, v in sub.items() if k in term.fv}
    if not sub:
        return term
    return _subst(term, sub)


def _subst(t: Term, sub: dict[str, Term]) -> Term:
    if isinstance(t, Var):
        return sub.get(t.name, t)
    sub = {k: v for k, v in sub.items() if k in t.fv}
    if not sub:
        return t
    if not t._binds:
        return map_children(t, lambda c: _subst(c, sub))

    repl_fv = frozenset().union(*(v.fv for v in sub.values()))
    changes: dict[str, object] = {}
    renamed: dict[str, str] = {}
    for name, val in _term_fields(t):
        if name in t._binder_fields:
            continue
        if isinstance(val, tuple):
            changes[name] = tuple(_subst(v, sub) for v in val)
            continue
        if not isinstance(val, Term):
            continue
        binders = t._binds.get(name, ())
        local = {k: v for k, v in sub.items() if k not in {getattr(t, b) for b in binders} and k in val.fv}
        if not local:
            continue
        local_fv = frozenset().union(*(local[k].fv for k in local))
        extra: dict[str, Term] = {}
        for b in binders:
            bname = getattr(t, b)
            if bname in local_fv:
                new = fresh_name(bname, repl_fv | all_names(val) | set(sub))
                renamed[b] = new
                if bname in val.fv:
                    extra[bname] = Var(new)
        changes[name] = _subst(val, {**local, **extra})
    changes.update(renamed)
    return dataclasses.replace(t, **changes)


# -- values, sugar ------------------------------------------------------------


def is_value(t: Term) -> bool:
    match t:
        case Var() | Const() | UnitVal() | Lam() | TangentZero() | TangentBasis():
            return True
        case Rec(_, body):
            return is_value(body)
        case Inl(a) | Inr(a) | Roll(a, _) | Annot(a, _):
            return is_value(a)
        case Pair(a, b):
            return is_value(a) and is_value(b)
        case _:
            return False


def letrec(fname: str, param: str, fbody: Term, body: Term, ann: Type | None = None) -> Term:
    """``let rec f x = fbody in body``."""
    return Let(fname, Rec(fname, Lam(param, fbody, ann)), body)


def unroll(t: Term, supply: Callable[[], str] | None = None) -> Term:
    name = supply() if supply else fresh_name("u", t.fv)
    return CaseRoll(t, name, Var(name))


def _expand_sugar(t: Term) -> Term:
    match t:
        case If(c, a, b):
            return CaseSum(Sign(c), "_", a, "_", b)
        case Fst(a):
            return CasePair(a, "x", "_", Var("x"))
        case Snd(a):
            return CasePair(a, "_", "y", Var("y"))
    return t


def _iterate_to_rec(t: Iterate) -> Term:
    """(rec z. fun x. case body of inl x' -> z x' | inr x'' -> x'') seed"""
    avoid = all_names(t.body) | t.seed.fv | {t.name}
    z = fresh_name("z", avoid)
    x1 = fresh_name(t.name, avoid | {z})
    x2 = fresh_name(t.name, avoid | {z, x1})
    loop = CaseSum(t.body, x1, App(Var(z), Var(x1)), x2, Var(x2))
    return App(Rec(z, Lam(t.name, loop)), t.seed)


def _rec_to_roll(t: Rec) -> Term:
    """Term recursion through the recursive type ``mu a. a -> tau``."""
    avoid = all_names(t.body) | {t.name}
    body_n = fresh_name("body", avoid)
    y = fresh_name("y", avoid | {body_n})
    z = fresh_name("z", avoid | {body_n, y})
    u = fresh_name("u", avoid | {body_n, y, z})
    inner = Lam(y, Lam(z, Let(t.name, App(CaseRoll(Var(y), u, Var(u)), Var(y)), App(t.body, Var(z)))))
    return Let(body_n, inner, App(Var(body_n), Roll(Var(body_n))))


def desugar(term: Term, *, iterate: bool = False, rec: bool = False) -> Term:
    """Expand if/fst/snd; optionally also iterate (into rec) and rec (into roll)."""

    def go(t: Term) -> Term:
        t = _expand_sugar(t)
        t = map_children(t, go)
        if iterate and isinstance(t, Iterate):
            t = go(_iterate_to_rec(t))
        if rec and isinstance(t, Rec):
            t = _rec_to_roll(t)
        return t

    return go(term)


# -- beta ---------------------------------------------------------------------


class NoRedex(Exception):
    pass


def _contract(t: Term) -> Term | None:
    match t:
        case Let(x, v, body) if is_value(v):
            return substitute(body, x, v)
        case CaseSum(Inl(v), x, left, _, _) if is_value(v):
            return substitute(left, x, v)
        case CaseSum(Inr(v), _, _, y, right) if is_value(v):
            return substitute(right, y, v)
        case CasePair(Pair(a, b), x, y, body) if is_value(a) and is_value(b):
            if x == y:
                return substitute(body, y, b)
            return substitute_many(body, {x: a, y: b})
        case App(Lam(x, body, _), v) if is_value(v):
            return substitute(body, x, v)
        case CaseRoll(Roll(v, _), x, body) if is_value(v):
            return substitute(body, x, v)
    return None


def beta_step(term: Term) -> Term:
    """One leftmost-outermost value-beta rewrite; raises NoRedex if none fires."""
    out = _contract(term)
    if out is not None:
        return out
    for name, child in subterms(term):
        try:
            new_child = beta_step(child)
        except NoRedex:
            continue
        return _replace_child(term, name, new_child)
    raise NoRedex


def _replace_child(t: Term, name: str, new: Term) -> Term:
    if "[" in name:
        base, idx = name[:-1].split("[")
        vals = list(getattr(t, base))
        vals[int(idx)] = new
        return dataclasses.replace(t, **{base: tuple(vals)})
    return dataclasses.replace(t, **{name: new})


def normalize(term: Term, limit: int = 10_000) -> Term:
    """Apply beta_step until no redex remains (or ``limit`` steps)."""
    for _ in range(limit):
        try:
            term = beta_step(term)
        except NoRedex:
            return term
    raise RuntimeError(f"no beta normal form within {limit} steps")

"""Fuel-bounded big-step call-by-value evaluator.

Source programs and transformed target programs run on the same machine.  The
``tangent`` type denotes R^k, where ``k`` is a positive integer or ``None`` for
the dynamically sized sparse space (used by reverse mode).
"""

from __future__ import annotations

import math
import sys
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence, TypeVar, Union

from dualnum.prims import DEFAULT_REGISTRY, Registry
from dualnum.syntax import (
    Annot, App, CasePair, CaseRoll, CaseSum, CaseVoid, Const, Fst, If, Inl,
    Inr, Iterate, Lam, Let, Pair, PrimOp, Rec, Roll, Sign, Snd, TangentAdd,
    TangentBasis, TangentProj, TangentScale, TangentZero, Term, UnitVal, Var,
)

__all__ = [
    "Tangent", "RuntimeValue", "Scalar", "UnitV", "PairV", "InlV", "InrV",
    "ClosureV", "RecClosureV", "RollV", "TangentV", "Diverged", "Undefined",
    "Value", "Bottom", "EvalOutcome", "evaluate", "apply_value",
    "handler_project", "handler_inject", "handler_roundtrip_check",
    "format_value", "format_outcome", "bitwise_equal", "tuple_value", "DEFAULT_FUEL",
]

DEFAULT_FUEL = 1_000_000


# ---------------------------------------------------------------------------
# Tangent vectors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Tangent:
    """An element of R^k.

    Finite ``k`` stores a dense tuple of length k.  ``k=None`` stores sorted
    ``(index, value)`` pairs with indices >= 1 and no zero entries.
    """

    k: int | None
    data: tuple

    def __post_init__(self):
        if self.k is not None and len(self.data) != self.k:
            raise ValueError(f"dense tangent needs {self.k} entries, got {len(self.data)}")

    @classmethod
    def zero(cls, k: int | None) -> "Tangent":
        return cls(k, () if k is None else (0.0,) * k)

    @classmethod
    def basis(cls, k: int | None, i: int) -> "Tangent":
        if k is None:
            return cls(None, ((i, 1.0),))
        if i > k:
            return cls.zero(k)
        return cls(k, tuple(1.0 if j == i else 0.0 for j in range(1, k + 1)))

    @classmethod
    def from_entries(cls, k: int | None, entries: Mapping[int, float]) -> "Tangent":
        if k is None:
            return cls(None, tuple(sorted((i, float(v)) for i, v in entries.items() if v != 0.0)))
        dense = [0.0] * k
        for i, v in entries.items():
            if 1 <= i <= k:
                dense[i - 1] = float(v)
        return cls(k, tuple(dense))

    def entries(self) -> dict[int, float]:
        if self.k is None:
            return dict(self.data)
        return {i + 1: v for i, v in enumerate(self.data) if v != 0.0}

    def __add__(self, other: "Tangent") -> "Tangent":
        if self.k != other.k:
            raise ValueError("adding tangents of different dimension")
        if self.k is not None:
            return Tangent(self.k, tuple(a + b for a, b in zip(self.data, other.data)))
        acc = dict(self.data)
        for i, v in other.data:
            acc[i] = acc.get(i, 0.0) + v
        return Tangent(None, tuple(sorted((i, v) for i, v in acc.items() if v != 0.0)))

    def scale(self, r: float) -> "Tangent":
        if self.k is not None:
            return Tangent(self.k, tuple(a * r for a in self.data))
        return Tangent(None, tuple((i, v * r) for i, v in self.data if v * r != 0.0))

    def is_finite(self) -> bool:
        vals = self.data if self.k is not None else [v for _, v in self.data]
        return all(math.isfinite(v) for v in vals)


def handler_project(k: int | None, i: int, v: Tangent) -> tuple[float, ...]:
    """p_i : R^k -> R^i.  Projection when i <= k, zero padding otherwise."""
    if v.k != k:
        raise ValueError("tangent does not live in R^k")
    if k is None:
        d = dict(v.data)
        return tuple(d.get(j, 0.0) for j in range(1, i + 1))
    head = v.data[:i]
    return tuple(head) + (0.0,) * (i - len(head))


def handler_inject(s: int, k: int | None, vec: Sequence[float]) -> Tangent:
    """The opposite map R^s -> R^k (pad or truncate)."""
    if len(vec) != s:
        raise ValueError(f"expected {s} entries")
    return Tangent.from_entries(k, {j + 1: x for j, x in enumerate(vec)})


def handler_roundtrip_check(s: int, k: int | None, vectors: Iterable[Sequence[float]]) -> bool:
    """Inject-then-project is the identity on R^s whenever s <= k."""
    if k is not None and s > k:
        raise ValueError("round trip only holds for s <= k")
    return all(handler_project(k, s, handler_inject(s, k, v)) == tuple(float(x) for x in v) for v in vectors)


# ---------------------------------------------------------------------------
# Runtime values and outcomes
# ---------------------------------------------------------------------------


class RuntimeValue:
    __slots__ = ()


@dataclass(frozen=True)
class Scalar(RuntimeValue):
    r: float


@dataclass(frozen=True)
class UnitV(RuntimeValue):
    pass


@dataclass(frozen=True)
class PairV(RuntimeValue):
    fst: RuntimeValue
    snd: RuntimeValue


@dataclass(frozen=True)
class InlV(RuntimeValue):
    v: RuntimeValue


@dataclass(frozen=True)
class InrV(RuntimeValue):
    v: RuntimeValue


@dataclass(frozen=True)
class RollV(RuntimeValue):
    v: RuntimeValue


@dataclass(frozen=True)
class TangentV(RuntimeValue):
    t: Tangent


@dataclass(frozen=True, eq=False)
class ClosureV(RuntimeValue):
    name: str
    body: Term
    env: Mapping[str, RuntimeValue]


@dataclass(frozen=True, eq=False)
class RecClosureV(RuntimeValue):
    """``rec name -> body`` closed over ``env``; unfolds when applied."""

    name: str
    body: Term
    env: Mapping[str, RuntimeValue]


UNIT_V = UnitV()


@dataclass(frozen=True)
class Diverged:
    def __str__(self) -> str:
        return "diverged (fuel exhausted)"


@dataclass(frozen=True)
class Undefined:
    op: str

    def __str__(self) -> str:
        return f"undefined ({self.op})"


@dataclass(frozen=True)
class Value:
    value: RuntimeValue


@dataclass(frozen=True)
class Bottom:
    reason: Union[Diverged, Undefined]


EvalOutcome = Union[Value, Bottom]


class _BottomSignal(Exception):
    def __init__(self, reason):
        self.reason = reason


class EvalInvariantError(RuntimeError):
    """Raised when evaluation gets stuck; typed programs never do this."""


# ---------------------------------------------------------------------------
# The machine
# ---------------------------------------------------------------------------


class _Machine:
    def __init__(self, fuel: int, k: int | None, registry: Registry, trace: list | None):
        self.fuel = fuel
        self.k = k
        self.registry = registry
        self.trace = trace

    def tick(self) -> None:
        self.fuel -= 1
        if self.fuel < 0:
            raise _BottomSignal(Diverged())

    def ev(self, t: Term, env: Mapping[str, RuntimeValue]) -> RuntimeValue:
        match t:
            case Var(name):
                try:
                    return env[name]
                except KeyError:
                    raise EvalInvariantError(f"unbound variable {name}") from None
            case Const(c):
                return Scalar(float(c))
            case Let(x, bound, body):
                v = self.ev(bound, env)
                return self.ev(body, {**env, x: v})
            case PrimOp(op, args):
                vals = [self.real(self.ev(a, env)) for a in args]
                out = self.registry[op].apply(vals)
                if out is None:
                    raise _BottomSignal(Undefined(op))
                return Scalar(out)
            case Sign(a):
                return InlV(UNIT_V) if self.sign(self.real(self.ev(a, env))) else InrV(UNIT_V)
            case If(c, a, b):
                self.tick()
                neg = self.sign(self.real(self.ev(c, env)))
                return self.ev(a if neg else b, env)
            case Inl(a):
                return InlV(self.ev(a, env))
            case Inr(a):
                return InrV(self.ev(a, env))
            case CaseSum(s, x, a, y, b):
                v = self.ev(s, env)
                self.tick()
                if isinstance(v, InlV):
                    return self.ev(a, {**env, x: v.v})
                if isinstance(v, InrV):
                    return self.ev(b, {**env, y: v.v})
                raise EvalInvariantError(f"case on non-sum {v!r}")
            case CaseVoid(a):
                self.ev(a, env)
                raise EvalInvariantError("absurd reached a value")
            case UnitVal():
                return UNIT_V
            case Pair(a, b):
                va = self.ev(a, env)
                return PairV(va, self.ev(b, env))
            case CasePair(s, x, y, body):
                v = self.ev(s, env)
                self.tick()
                if not isinstance(v, PairV):
                    raise EvalInvariantError(f"pair pattern on {v!r}")
                return self.ev(body, {**env, x: v.fst, y: v.snd})
            case Fst(a) | Snd(a):
                v = self.ev(a, env)
                self.tick()
                if not isinstance(v, PairV):
                    raise EvalInvariantError(f"projection of {v!r}")
                return v.fst if isinstance(t, Fst) else v.snd
            case Lam(x, body, _):
                return ClosureV(x, body, env)
            case App(f, a):
                fv = self.ev(f, env)
                av = self.ev(a, env)
                return self.apply(fv, av)
            case Iterate(body, x, seed):
                cur = self.ev(seed, env)
                while True:
                    self.tick()
                    v = self.ev(body, {**env, x: cur})
                    if isinstance(v, InrV):
                        return v.v
                    if not isinstance(v, InlV):
                        raise EvalInvariantError(f"iterate body returned {v!r}")
                    cur = v.v
            case Rec(f, body):
                return self.unfold(RecClosureV(f, body, env))
            case Roll(a, _):
                return RollV(self.ev(a, env))
            case CaseRoll(s, x, body):
                v = self.ev(s, env)
                self.tick()
                if not isinstance(v, RollV):
                    raise EvalInvariantError(f"case-roll on {v!r}")
                return self.ev(body, {**env, x: v.v})
            case Annot(e, _):
                return self.ev(e, env)
            case TangentZero():
                return TangentV(Tangent.zero(self.k))
            case TangentBasis(i):
                return TangentV(Tangent.basis(self.k, i))
            case TangentAdd(a, b):
                return self.tangent_result(self.tangent(self.ev(a, env)) + self.tangent(self.ev(b, env)), "<+>")
            case TangentScale(a, s):
                v = self.tangent(self.ev(a, env))
                return self.tangent_result(v.scale(self.real(self.ev(s, env))), "<*>")
            case TangentProj(i, a):
                return tuple_value([Scalar(x) for x in handler_project(self.k, i, self.tangent(self.ev(a, env)))])
        raise EvalInvariantError(f"cannot evaluate {type(t).__name__}")

    def unfold(self, rc: RecClosureV) -> RuntimeValue:
        self.tick()
        return self.ev(rc.body, {**rc.env, rc.name: rc})

    def apply(self, fv: RuntimeValue, av: RuntimeValue) -> RuntimeValue:
        self.tick()
        while isinstance(fv, RecClosureV):
            fv = self.unfold(fv)
        if not isinstance(fv, ClosureV):
            raise EvalInvariantError(f"applying a non-function {fv!r}")
        return self.ev(fv.body, {**fv.env, fv.name: av})

    def sign(self, r: float) -> bool:
        """True for the left (negative) branch."""
        if r == 0.0:
            raise _BottomSignal(Undefined("sign"))
        if self.trace is not None:
            self.trace.append(r < 0.0)
        return r < 0.0

    @staticmethod
    def real(v: RuntimeValue) -> float:
        if not isinstance(v, Scalar):
            raise EvalInvariantError(f"expected a real, got {v!r}")
        return v.r

    def tangent(self, v: RuntimeValue) -> Tangent:
        if not isinstance(v, TangentV):
            raise EvalInvariantError(f"expected a tangent, got {v!r}")
        return v.t

    @staticmethod
    def tangent_result(t: Tangent, op: str) -> TangentV:
        if not t.is_finite():
            raise _BottomSignal(Undefined(op))
        return TangentV(t)


def tuple_value(items: Sequence[RuntimeValue]) -> RuntimeValue:
    """Left-nested tuple: one item is itself, ``(a, b, c)`` is ``((a, b), c)``."""
    if not items:
        return UNIT_V
    out = items[0]
    for v in items[1:]:
        out = PairV(out, v)
    return out


_T = TypeVar("_T")
_deep = threading.local()
_STACK_BYTES = 512 * 1024 * 1024
_RECURSION_LIMIT = 200_000


def _run_deep(fn: Callable[[], _T]) -> _T:
    """Run ``fn`` on a thread with a large stack so deep terms do not overflow."""
    if getattr(_deep, "active", False):
        return fn()
    box: dict[str, object] = {}

    def target():
        _deep.active = True
        try:
            box["out"] = fn()
        except BaseException as exc:  # re-raised in the caller
            box["err"] = exc

    # the limit is process-wide: raise it only while the big-stack thread runs,
    # otherwise deep recursion elsewhere on the main thread overflows the C stack
    old_limit = sys.getrecursionlimit()
    old_size = threading.stack_size()
    sys.setrecursionlimit(max(old_limit, _RECURSION_LIMIT))
    try:
        threading.stack_size(_STACK_BYTES)
        try:
            th = threading.Thread(target=target)
            th.start()
        finally:
            threading.stack_size(old_size)
        th.join()
    finally:
        sys.setrecursionlimit(old_limit)
    if "err" in box:
        raise box["err"]  # type: ignore[misc]
    return box["out"]  # type: ignore[return-value]


def _outcome(m: _Machine, thunk: Callable[[], RuntimeValue]) -> EvalOutcome:
    def run() -> EvalOutcome:
        try:
            return Value(thunk())
        except _BottomSignal as sig:
            return Bottom(sig.reason)
        except RecursionError:
            return Bottom(Diverged())

    return _run_deep(run)


def evaluate(
    t: Term,
    env: Mapping[str, RuntimeValue] | None = None,
    fuel: int = DEFAULT_FUEL,
    k: int | None = 1,
    *,
    registry: Registry = DEFAULT_REGISTRY,
    trace: list | None = None,
) -> EvalOutcome:
    """Evaluate ``t``; ``k=None`` selects the sparse (unbounded) tangent space.

    Each application, case elimination, loop iteration and recursion unfolding
    costs one unit of fuel.  When ``trace`` is given, every sign test appends
    whether it took the negative branch.
    """
    if fuel < 0:
        raise ValueError("fuel must be non-negative")
    m = _Machine(fuel, k, registry, trace)
    return _outcome(m, lambda: m.ev(t, dict(env or {})))


def apply_value(
    fn: RuntimeValue,
    arg: RuntimeValue,
    fuel: int = DEFAULT_FUEL,
    k: int | None = 1,
    *,
    registry: Registry = DEFAULT_REGISTRY,
    trace: list | None = None,
) -> EvalOutcome:
    m = _Machine(fuel, k, registry, trace)
    return _outcome(m, lambda: m.apply(fn, arg))


# ---------------------------------------------------------------------------
# Printing and comparison
# ---------------------------------------------------------------------------


def format_value(v: RuntimeValue) -> str:
    match v:
        case Scalar(r):
            return repr(r)
        case UnitV():
            return "()"
        case PairV(a, b):
            return f"({format_value(a)}, {format_value(b)})"
        case InlV(a):
            return f"inl {format_value(a)}"
        case InrV(a):
            return f"inr {format_value(a)}"
        case RollV(a):
            return f"roll {format_value(a)}"
        case TangentV(t):
            return "{" + ", ".join(f"{i}: {x!r}" for i, x in sorted(t.entries().items())) + "}"
        case ClosureV() | RecClosureV():
            return "<fun>"
    raise TypeError(f"not a runtime value: {v!r}")


def format_outcome(o: EvalOutcome) -> str:
    if isinstance(o, Value):
        return format_value(o.value)
    return f"bottom: {o.reason}"


def _bits(v: RuntimeValue):
    match v:
        case Scalar(r):
            return ("r", r.hex())
        case PairV(a, b):
            return ("p", _bits(a), _bits(b))
        case InlV(a) | InrV(a) | RollV(a):
            return (type(v).__name__, _bits(a))
        case TangentV(t):
            vals = t.data if t.k is not None else tuple(x for pair in t.data for x in pair)
            return ("t", t.k, tuple(float(x).hex() for x in vals))
        case UnitV():
            return ("u",)
    return ("closure", id(v))


def bitwise_equal(a: EvalOutcome | RuntimeValue, b: EvalOutcome | RuntimeValue) -> bool:
    """Structural equality comparing floats by bit pattern (so 0.0 != -0.0)."""
    if isinstance(a, Bottom) or isinstance(b, Bottom):
        return a == b
    if isinstance(a, Value):
        a = a.value
    if isinstance(b, Value):
        b = b.value
    return _bits(a) == _bits(b)

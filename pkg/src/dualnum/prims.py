"""Primitive operations with their value functions and partial-derivative terms."""

from __future__ import annotations

import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Callable, Mapping, Sequence

from dualnum.syntax import Const, PrimOp, Term, Var


@dataclass(frozen=True)
class PrimSpec:
    """An n-ary primitive ``op``.

    ``partials[i]`` is a source term over the free variables ``params`` computing
    the partial derivative with respect to argument ``i``.
    """

    symbol: str
    arity: int
    domain: Callable[[Sequence[float]], bool]
    value: Callable[[Sequence[float]], float]
    partials: tuple[Term, ...]

    @property
    def params(self) -> tuple[str, ...]:
        return tuple(f"x{i + 1}" for i in range(self.arity))

    def apply(self, args: Sequence[float]) -> float | None:
        """Value at ``args``, or None outside the domain (or on overflow)."""
        if len(args) != self.arity or not self.domain(args):
            return None
        try:
            out = self.value(args)
        except (OverflowError, ValueError, ZeroDivisionError):
            return None
        return out if math.isfinite(out) else None


class Registry(Mapping[str, PrimSpec]):
    """Immutable symbol -> PrimSpec map."""

    def __init__(self, specs: Sequence[PrimSpec]):
        table = {}
        for s in specs:
            if len(s.partials) != s.arity:
                raise ValueError(f"{s.symbol}: need {s.arity} partials, got {len(s.partials)}")
            table[s.symbol] = s
        self._table = MappingProxyType(table)

    def __getitem__(self, key: str) -> PrimSpec:
        return self._table[key]

    def __iter__(self):
        return iter(self._table)

    def __len__(self) -> int:
        return len(self._table)

    def extend(self, *specs: PrimSpec) -> "Registry":
        return Registry([*self._table.values(), *specs])


def _x(i: int) -> Term:
    return Var(f"x{i}")


def _op(name: str, *args: Term) -> Term:
    return PrimOp(name, tuple(args))


def _total(_args) -> bool:
    return True


ONE = Const(1.0)

BUILTINS: tuple[PrimSpec, ...] = (
    PrimSpec("add", 2, _total, lambda a: a[0] + a[1], (ONE, ONE)),
    PrimSpec("sub", 2, _total, lambda a: a[0] - a[1], (ONE, Const(-1.0))),
    PrimSpec("mul", 2, _total, lambda a: a[0] * a[1], (_x(2), _x(1))),
    PrimSpec(
        "div", 2, lambda a: a[1] != 0.0, lambda a: a[0] / a[1],
        (_op("div", ONE, _x(2)), _op("neg", _op("div", _x(1), _op("mul", _x(2), _x(2))))),
    ),
    PrimSpec("neg", 1, _total, lambda a: -a[0], (Const(-1.0),)),
    PrimSpec("exp", 1, _total, lambda a: math.exp(a[0]), (_op("exp", _x(1)),)),
    PrimSpec("log", 1, lambda a: a[0] > 0.0, lambda a: math.log(a[0]), (_op("div", ONE, _x(1)),)),
    PrimSpec("sin", 1, _total, lambda a: math.sin(a[0]), (_op("cos", _x(1)),)),
    PrimSpec("cos", 1, _total, lambda a: math.cos(a[0]), (_op("neg", _op("sin", _x(1))),)),
    PrimSpec(
        "sqrt", 1, lambda a: a[0] > 0.0, lambda a: math.sqrt(a[0]),
        (_op("div", Const(0.5), _op("sqrt", _x(1))),),
    ),
)

DEFAULT_REGISTRY = Registry(BUILTINS)

# infix spellings in the surface syntax
INFIX = {"add": "+", "sub": "-", "mul": "*", "div": "/"}

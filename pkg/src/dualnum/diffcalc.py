"""Numerical side of the correctness statement.

Data-type values are flattened to a *shape* (the sequence of sum choices made
while walking the value, unrolling ``mu`` as needed) plus the vector of reals
found in its slots.  Finite-difference oracles work on those vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from dualnum.evaluator import (
    UNIT_V, InlV, InrV, PairV, RollV, RuntimeValue, Scalar, Tangent, TangentV, UnitV,
)
from dualnum.syntax import Arrow, Meta, Mu, Prod, Real, Sum, TangentT, TVar, Type, Unit, Void, unfold_mu

__all__ = [
    "Point", "interleave", "deinterleave", "FlatShape", "ShapeError",
    "enumerate_shapes", "flatten", "flatten_dual", "check_data_type",
    "Probe", "OutOfDomain", "fd_jvp", "fd_jacobian", "JacobianRecord", "rel_err",
]

Point = tuple[float, ...]


def rel_err(a: float, b: float) -> float:
    """|a - b| / max(1, |a|, |b|): absolute near zero, relative for large values."""
    return abs(a - b) / max(1.0, abs(a), abs(b))


# ---------------------------------------------------------------------------
# Interleaving
# ---------------------------------------------------------------------------


def interleave(n: int, k: int | None, x: Sequence[float], w: Sequence[Tangent]) -> list[tuple[float, Tangent]]:
    if len(x) != n or len(w) != n:
        raise ValueError(f"interleave: expected {n} coordinates and {n} tangents, got {len(x)} and {len(w)}")
    for t in w:
        if t.k != k:
            raise ValueError("interleave: tangent outside R^k")
    return [(float(a), t) for a, t in zip(x, w)]


def deinterleave(pairs: Sequence[tuple[float, Tangent]]) -> tuple[Point, list[Tangent]]:
    return tuple(p[0] for p in pairs), [p[1] for p in pairs]


# ---------------------------------------------------------------------------
# Shapes
# ---------------------------------------------------------------------------


class ShapeError(ValueError):
    pass


def check_data_type(ty: Type, bound: frozenset[str] = frozenset()) -> None:
    """Reject function types, tangents and free type variables."""
    match ty:
        case Real() | Unit() | Void():
            return
        case Prod(a, b) | Sum(a, b):
            check_data_type(a, bound)
            check_data_type(b, bound)
        case Mu(v, b):
            check_data_type(b, bound | {v})
        case TVar(name):
            if name not in bound:
                raise ShapeError(f"free type variable '{name} in data type")
        case Arrow():
            raise ShapeError(f"not a data type (contains a function type): {ty}")
        case TangentT() | Meta():
            raise ShapeError(f"not a source data type: {ty}")
        case _:
            raise ShapeError(f"not a type: {ty!r}")


def _walk(ty: Type, v: RuntimeValue, path: list[int], slots: list[RuntimeValue]) -> None:
    match ty:
        case Real():
            slots.append(v)
        case Unit():
            if not isinstance(v, UnitV):
                raise ShapeError(f"expected (), got {v!r}")
        case Prod(a, b):
            if not isinstance(v, PairV):
                raise ShapeError(f"expected a pair, got {v!r}")
            _walk(a, v.fst, path, slots)
            _walk(b, v.snd, path, slots)
        case Sum(a, b):
            if isinstance(v, InlV):
                path.append(0)
                _walk(a, v.v, path, slots)
            elif isinstance(v, InrV):
                path.append(1)
                _walk(b, v.v, path, slots)
            else:
                raise ShapeError(f"expected an injection, got {v!r}")
        case Mu():
            if not isinstance(v, RollV):
                raise ShapeError(f"expected a rolled value, got {v!r}")
            _walk(unfold_mu(ty), v.v, path, slots)
        case _:
            raise ShapeError(f"cannot flatten a value of type {ty}")


def flatten(ty: Type, v: RuntimeValue) -> tuple[tuple[int, ...], Point]:
    """Shape path and real payload of a source value of data type ``ty``."""
    path: list[int] = []
    slots: list[RuntimeValue] = []
    _walk(ty, v, path, slots)
    out = []
    for s in slots:
        if not isinstance(s, Scalar):
            raise ShapeError(f"expected a real, got {s!r}")
        out.append(s.r)
    return tuple(path), tuple(out)


def flatten_dual(ty: Type, v: RuntimeValue) -> tuple[tuple[int, ...], Point, list[Tangent]]:
    """Like ``flatten`` for a value of type D[ty]; each real slot holds (primal, tangent)."""
    path: list[int] = []
    slots: list[RuntimeValue] = []
    _walk(ty, v, path, slots)
    prim, tans = [], []
    for s in slots:
        if not (isinstance(s, PairV) and isinstance(s.fst, Scalar) and isinstance(s.snd, TangentV)):
            raise ShapeError(f"expected a (real, tangent) pair, got {s!r}")
        prim.append(s.fst.r)
        tans.append(s.snd.t)
    return tuple(path), tuple(prim), tans


def _build(ty: Type, path: Iterator[int], slots: Iterator[RuntimeValue]) -> RuntimeValue:
    match ty:
        case Real():
            return next(slots)
        case Unit():
            return UNIT_V
        case Prod(a, b):
            left = _build(a, path, slots)
            return PairV(left, _build(b, path, slots))
        case Sum(a, b):
            choice = next(path)
            return InlV(_build(a, path, slots)) if choice == 0 else InrV(_build(b, path, slots))
        case Mu():
            return RollV(_build(unfold_mu(ty), path, slots))
    raise ShapeError(f"cannot build a value of type {ty}")


@dataclass(frozen=True)
class FlatShape:
    """One summand of the coproduct-of-powers normal form of a data type."""

    type: Type
    path: tuple[int, ...]
    arity: int

    def _assemble(self, slots: Sequence[RuntimeValue]) -> RuntimeValue:
        if len(slots) != self.arity:
            raise ShapeError(f"shape needs {self.arity} reals, got {len(slots)}")
        it_path, it_slots = iter(self.path), iter(slots)
        v = _build(self.type, it_path, it_slots)
        if next(it_path, None) is not None or next(it_slots, None) is not None:
            raise ShapeError("path does not describe a value of this type")
        return v

    def encode(self, x: Sequence[float]) -> RuntimeValue:
        return self._assemble([Scalar(float(r)) for r in x])

    def encode_dual(self, x: Sequence[float], w: Sequence[Tangent]) -> RuntimeValue:
        """The interleaved dual value: slot j holds (x_j, w_j)."""
        pairs = interleave(self.arity, w[0].k if w else None, x, w)
        return self._assemble([PairV(Scalar(a), TangentV(t)) for a, t in pairs])

    def decode(self, v: RuntimeValue) -> Point:
        path, x = flatten(self.type, v)
        if path != self.path:
            raise ShapeError("value has a different shape")
        return x

    def describe(self) -> str:
        return "".join("lr"[c] for c in self.path) or "-"


def enumerate_shapes(ty: Type, depth: int = 6) -> list[FlatShape]:
    """All shapes using at most ``depth`` recursive unfoldings.

    Unfolding a ``mu`` where it is first met is free; each recursive occurrence
    of its variable costs one unit.  For lists this gives lengths 0..depth.
    """
    check_data_type(ty)
    if depth < 0:
        raise ValueError("depth must be >= 0")
    out = []
    for path, arity, _ in _shapes(ty, {}, depth):
        out.append(FlatShape(ty, path, arity))
    return sorted(out, key=lambda s: (s.arity, len(s.path), s.path))


def _shapes(ty: Type, env: Mapping[str, Type], budget: int) -> Iterator[tuple[tuple[int, ...], int, int]]:
    """Yield (path, arity, remaining budget)."""
    match ty:
        case Real():
            yield (), 1, budget
        case Unit():
            yield (), 0, budget
        case Void():
            return
        case Prod(a, b):
            for pa, na, ra in _shapes(a, env, budget):
                for pb, nb, rb in _shapes(b, env, ra):
                    yield pa + pb, na + nb, rb
        case Sum(a, b):
            for p, n, r in _shapes(a, env, budget):
                yield (0,) + p, n, r
            for p, n, r in _shapes(b, env, budget):
                yield (1,) + p, n, r
        case Mu(v, body):
            yield from _shapes(body, {**env, v: ty}, budget)
        case TVar(name):
            if budget == 0:
                return
            mu = env[name]
            yield from _shapes(mu.body, {**env, mu.var: mu}, budget - 1)


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Probe:
    """A successful evaluation, flattened: output shape, reals, and sign trace."""

    path: tuple[int, ...]
    values: Point
    trace: tuple[bool, ...] = ()


@dataclass(frozen=True)
class OutOfDomain:
    reason: str

    def __bool__(self) -> bool:
        return False


Function = Callable[[Point], "Probe | None"]


def _probe_pair(f: Function, x: np.ndarray, v: np.ndarray, h: float, center: Probe) -> np.ndarray | OutOfDomain:
    plus = f(tuple((x + h * v).tolist()))
    minus = f(tuple((x - h * v).tolist()))
    if plus is None or minus is None:
        return OutOfDomain("a probe evaluated to bottom")
    if plus.path != center.path or minus.path != center.path:
        return OutOfDomain("probes land in different output shapes")
    if plus.trace != center.trace or minus.trace != center.trace:
        return OutOfDomain("probes take different sign branches")
    return (np.asarray(plus.values, dtype=float) - np.asarray(minus.values, dtype=float)) / (2.0 * h)


def fd_jvp(
    f: Function,
    x: Sequence[float],
    v: Sequence[float],
    h: float = 1e-5,
    *,
    center: Probe | None = None,
    consistency_tol: float | None = None,
) -> np.ndarray | OutOfDomain:
    """Central difference (F(x+hv) - F(x-hv)) / 2h of the flattened output.

    With ``consistency_tol`` the estimate is repeated at h/2 and the point is
    rejected when the two disagree by more than that (the oracle itself is then
    not trustworthy, e.g. next to a pole).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    xa, va = np.asarray(x, dtype=float), np.asarray(v, dtype=float)
    if xa.shape != va.shape:
        raise ValueError("x and v differ in dimension")
    if center is None:
        center = f(tuple(xa.tolist()))
        if center is None:
            return OutOfDomain("the point itself evaluates to bottom")
    d = _probe_pair(f, xa, va, h, center)
    if isinstance(d, OutOfDomain) or consistency_tol is None:
        return d
    d2 = _probe_pair(f, xa, va, h / 2.0, center)
    if isinstance(d2, OutOfDomain):
        return d2
    if not np.all(np.isfinite(d)) or any(rel_err(a, b) > consistency_tol for a, b in zip(d, d2)):
        return OutOfDomain("finite differences at h and h/2 disagree")
    return d


@dataclass(frozen=True)
class JacobianRecord:
    x: Point
    in_shape: tuple[int, ...]
    out_shape: tuple[int, ...]
    J: np.ndarray = field(compare=False)
    valid: bool = True


def fd_jacobian(
    f: Function,
    x: Sequence[float],
    h: float = 1e-5,
    *,
    in_shape: tuple[int, ...] = (),
    center: Probe | None = None,
    consistency_tol: float | None = None,
) -> JacobianRecord | OutOfDomain:
    """Columns are ``fd_jvp`` along the coordinate directions."""
    xa = np.asarray(x, dtype=float)
    if center is None:
        center = f(tuple(xa.tolist()))
        if center is None:
            return OutOfDomain("the point itself evaluates to bottom")
    s, l = len(xa), len(center.values)
    J = np.zeros((l, s))
    for j in range(s):
        e = np.zeros(s)
        e[j] = 1.0
        col = fd_jvp(f, xa, e, h, center=center, consistency_tol=consistency_tol)
        if isinstance(col, OutOfDomain):
            return col
        J[:, j] = col
    return JacobianRecord(tuple(xa.tolist()), in_shape, center.path, J, True)

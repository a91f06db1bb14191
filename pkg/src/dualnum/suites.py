"""Invariant suites shared by ``selftest`` and the acceptance tests.

Each suite returns a ``SuiteResult`` listing the counterexamples it found.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from dualnum.ad import SignMode, ad_context, ad_transform, ad_transform_type
from dualnum.corpus import Program
from dualnum.diffcalc import enumerate_shapes
from dualnum.evaluator import (
    Diverged, Value, apply_value, bitwise_equal, evaluate, handler_roundtrip_check,
)
from dualnum.gen import random_subst_triple, random_typed_term
from dualnum.prims import DEFAULT_REGISTRY, Registry
from dualnum.surface import parse_term, print_term
from dualnum.syntax import alpha_eq, substitute
from dualnum.typecheck import Lang, TypeCheckError, TypingContext, type_equal, typecheck

__all__ = [
    "SuiteResult", "type_preservation", "substitution_commutation", "print_parse_roundtrip",
    "handler_roundtrips", "fuel_monotonicity", "divergence_probe",
]


@dataclass
class SuiteResult:
    name: str
    cases: int = 0
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.cases > 0 and not self.failures

    def line(self) -> str:
        status = "ok" if self.ok else "FAILED"
        return f"{self.name:<26} {self.cases:>5} cases  {len(self.failures)} violations  {status}"


def type_preservation(
    n: int = 1000, seed: int = 0, sign_mode: SignMode | str = SignMode.NAIVE, registry: Registry = DEFAULT_REGISTRY,
) -> SuiteResult:
    """D[Gamma] |- D[t] : D[tau] on random well-typed terms."""
    res = SuiteResult(f"type preservation/{SignMode(sign_mode).value}")
    for i in range(n):
        env, t, ty = random_typed_term(seed * 1_000_003 + i)
        ctx = TypingContext.of(env)
        res.cases += 1
        try:
            dt = ad_transform(t, registry, sign_mode, ctx)
            want = ad_transform_type(ty)
            # checking mode: injections leave summands open until unified with want
            got = typecheck(dt, ad_context(ctx), Lang.TARGET, registry=registry, expected=want).type
        except TypeCheckError as exc:
            res.failures.append(f"case {i}: {exc}")
            continue
        if not type_equal(got, want):
            res.failures.append(f"case {i}: got {got}, expected {want}")
    return res


def substitution_commutation(n: int = 1000, seed: int = 0, registry: Registry = DEFAULT_REGISTRY) -> SuiteResult:
    """D[t[v/x]] and D[t][D[v]/x] agree up to renaming of bound variables."""
    res = SuiteResult("substitution commutation")
    for i in range(n):
        _env, t, x, v = random_subst_triple(seed * 1_000_003 + i)
        res.cases += 1
        lhs = ad_transform(substitute(t, x, v), registry)
        rhs = substitute(ad_transform(t, registry), x, ad_transform(v, registry))
        if not alpha_eq(lhs, rhs):
            res.failures.append(f"case {i}: x={x}")
    return res


def print_parse_roundtrip(n: int = 1000, seed: int = 0, registry: Registry = DEFAULT_REGISTRY) -> SuiteResult:
    res = SuiteResult("print/parse round trip")
    for i in range(n):
        for term in (random_typed_term(seed * 1_000_003 + i)[1],):
            res.cases += 1
            for t in (term, ad_transform(term, registry)):
                back = parse_term(print_term(t), registry)
                if not alpha_eq(back, t):
                    res.failures.append(f"case {i}: {print_term(t)[:60]}")
                    break
    return res


def handler_roundtrips(n: int = 100, seed: int = 0, max_dim: int = 8) -> SuiteResult:
    """Inject then project is exact for s <= k <= max_dim, and for k = inf."""
    res = SuiteResult("handler round trips")
    rng = np.random.default_rng(seed)
    for s in range(1, max_dim + 1):
        for k in [*range(s, max_dim + 1), None]:
            vectors = rng.standard_normal((n, s)).tolist()
            res.cases += 1
            if not handler_roundtrip_check(s, k, vectors):
                res.failures.append(f"s={s} k={'inf' if k is None else k}")
    return res


def fuel_monotonicity(
    programs: Iterable[Program], fuels: Iterable[int] = (10, 100, 1000, 10_000), points: int = 3, seed: int = 0,
    registry: Registry = DEFAULT_REGISTRY,
) -> SuiteResult:
    """Once an evaluation at fuel F yields a Value, fuel 2F yields the same value."""
    res = SuiteResult("fuel monotonicity")
    fuels = tuple(fuels)
    for prog in programs:
        rng = random.Random(f"{seed}:{prog.name}")
        for shape in enumerate_shapes(prog.in_type, 3):
            for _ in range(points if shape.arity else 1):
                x = [rng.uniform(-2.0, 2.0) for _ in range(shape.arity)]
                arg = shape.encode(x)
                for F in fuels:
                    fn = evaluate(prog.term, fuel=F, registry=registry)
                    if not isinstance(fn, Value):
                        continue
                    a = apply_value(fn.value, arg, F, registry=registry)
                    b = apply_value(fn.value, arg, 2 * F, registry=registry)
                    res.cases += 1
                    if isinstance(a, Value) and not bitwise_equal(a, b):
                        res.failures.append(f"{prog.name} {shape.describe()} x={x} F={F}")
    return res


def divergence_probe(fuel: int = 10, registry: Registry = DEFAULT_REGISTRY) -> SuiteResult:
    """``(rec f -> f) 0.0`` must run out of fuel."""
    res = SuiteResult("divergence probe", cases=1)
    out = evaluate(parse_term("(rec f -> f) 0.0", registry), fuel=fuel, registry=registry)
    if not (not isinstance(out, Value) and isinstance(out.reason, Diverged)):
        res.failures.append(f"got {out}")
    return res

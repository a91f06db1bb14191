import math

import pytest
from hypothesis import given, strategies as st

from dualnum.ad import ad_transform
from dualnum.corpus import load_corpus, load_program
from dualnum.diffcalc import enumerate_shapes
from dualnum.evaluator import (
    Bottom, Diverged, InlV, InrV, PairV, RollV, Scalar, Tangent, TangentV, Undefined, Value, apply_value,
    bitwise_equal, evaluate, format_outcome, format_value, handler_inject, handler_project,
    handler_roundtrip_check, tuple_value,
)
from dualnum.surface import parse_term
from dualnum.syntax import desugar

RELU = "fun x -> case sign x of { inl _ -> 0.0 | inr _ -> x }"


def run(src, *arg, k=1, fuel=10**6):
    out = evaluate(parse_term(src), fuel=fuel, k=k)
    if arg:
        out = apply_value(out.value, arg[0], fuel, k)
    return out


def test_sign_zero_is_bottom():
    out = run("sign 0.0")
    assert isinstance(out, Bottom) and out.reason == Undefined("sign")


def test_relu():
    assert run(RELU, Scalar(3.0)).value == Scalar(3.0)
    assert run(RELU, Scalar(-2.0)).value == Scalar(0.0)
    assert isinstance(run(RELU, Scalar(0.0)), Bottom)


def test_relu_transformed():
    d = evaluate(ad_transform(parse_term(RELU))).value
    arg = PairV(Scalar(-2.0), TangentV(Tangent.basis(1, 1)))
    assert apply_value(d, arg).value == PairV(Scalar(0.0), TangentV(Tangent(1, (0.0,))))
    at_zero = apply_value(d, PairV(Scalar(0.0), TangentV(Tangent.basis(1, 1))))
    assert isinstance(at_zero, Bottom)


def taylor_direct(x, eps=1e-12):
    total, term, i = 0.0, 1.0, 0
    while abs(term) >= eps:
        total += term
        i += 1
        term = term * x / i
    return total


@pytest.mark.parametrize("x", [0.5, 1.0, 1.5])
def test_taylor_loop(x):
    prog = load_program("taylor_exp")
    out = apply_value(evaluate(prog.term).value, Scalar(x))
    assert out.value.r == pytest.approx(taylor_direct(x), rel=0, abs=1e-9)
    assert abs(out.value.r - math.exp(x)) < 1e-9


def test_partial_primitives():
    assert run("1.0 / 0.0").reason == Undefined("div")
    assert run("log(-1.0)").reason == Undefined("log")
    assert run("sqrt(0.0)").reason == Undefined("sqrt")
    assert run("exp(1000.0)").reason == Undefined("exp")


def test_non_finite_tangent_is_bottom():
    out = run("dbasis 1 <*> 1e300 <*> 1e300", k=1)
    assert isinstance(out, Bottom)


def test_divergence():
    out = run("(rec f -> f) 0.0", fuel=10)
    assert isinstance(out, Bottom) and isinstance(out.reason, Diverged)
    out = run("(rec f -> fun (x : real) -> f x) 1.0", fuel=1000)
    assert isinstance(out.reason, Diverged)


def test_deep_recursion_within_fuel():
    src = "rec f -> fun (n : real) -> if n - 0.5 then 0.0 else 1.0 + f (n - 1.0)"
    assert run(src, Scalar(20000.0)).value == Scalar(20000.0)


def test_tangent_ops_and_handlers():
    assert run("dproj 3 (dbasis 2 <*> 4.0)", k=2).value == tuple_value([Scalar(0.0), Scalar(4.0), Scalar(0.0)])
    assert run("dbasis 5", k=2).value == TangentV(Tangent.zero(2))
    assert run("dbasis 5 <+> dbasis 2", k=None).value == TangentV(Tangent.from_entries(None, {2: 1.0, 5: 1.0}))


def test_handler_examples():
    assert handler_project(3, 2, Tangent(3, (1.0, 2.0, 3.0))) == (1.0, 2.0)
    assert handler_project(2, 3, Tangent(2, (1.0, 2.0))) == (1.0, 2.0, 0.0)
    assert handler_project(None, 2, Tangent.from_entries(None, {1: 5.0})) == (5.0, 0.0)
    assert handler_roundtrip_check(2, 2, [(1.0, 2.0)])
    assert handler_roundtrip_check(1, 3, [(7.0,)])
    assert handler_roundtrip_check(2, None, [(1.0, 2.0)])
    with pytest.raises(ValueError):
        handler_roundtrip_check(3, 2, [(1.0, 2.0, 3.0)])
    assert handler_inject(3, 2, (1.0, 2.0, 3.0)) == Tangent(2, (1.0, 2.0))


def test_sparse_tangents_drop_zeros():
    t = Tangent.basis(None, 1) + Tangent.basis(None, 1).scale(-1.0)
    assert t == Tangent.zero(None) and t.data == ()


def test_format():
    v = PairV(Scalar(9.0), TangentV(Tangent(1, (6.0,))))
    assert format_value(v) == "(9.0, {1: 6.0})"
    assert format_outcome(run("sign 0.0")) == "bottom: undefined (sign)"
    assert format_value(TangentV(Tangent.from_entries(None, {3: 2.0, 1: -1.0}))) == "{1: -1.0, 3: 2.0}"


def _corpus_inputs(depth=3, per_shape=2):
    cases = []
    for prog in load_corpus():
        for shape in enumerate_shapes(prog.in_type, depth):
            for j in range(per_shape if shape.arity else 1):
                x = [0.3 + 0.7 * j - 0.45 * i for i in range(shape.arity)]
                cases.append((prog, shape.encode(x)))
    return cases


CASES = _corpus_inputs()


def test_fuel_monotone_on_corpus():
    for prog, arg in CASES:
        fn = evaluate(prog.term).value
        for F in (5, 50, 500, 5000):
            a = apply_value(fn, arg, F)
            if isinstance(a, Value):
                assert bitwise_equal(a, apply_value(fn, arg, 2 * F))


def test_determinism_on_corpus():
    for prog, arg in CASES:
        fn = evaluate(prog.term).value
        assert bitwise_equal(apply_value(fn, arg), apply_value(fn, arg))


def test_iterate_agrees_with_its_desugaring():
    for prog, arg in CASES:
        plain = apply_value(evaluate(prog.term).value, arg)
        sugar_free = apply_value(evaluate(desugar(prog.term, iterate=True)).value, arg)
        assert bitwise_equal(plain, sugar_free), prog.name


def test_rec_through_roll_agrees():
    for prog, arg in CASES[:20]:
        plain = apply_value(evaluate(prog.term).value, arg)
        encoded = apply_value(evaluate(desugar(prog.term, iterate=True, rec=True)).value, arg)
        assert bitwise_equal(plain, encoded), prog.name


def _no_tangents(v):
    match v:
        case TangentV():
            raise AssertionError("tangent in a source result")
        case PairV(a, b):
            _no_tangents(a)
            _no_tangents(b)
        case InlV(a) | InrV(a) | RollV(a):
            _no_tangents(a)


def test_source_evaluation_has_no_tangents():
    for prog, arg in CASES:
        out = apply_value(evaluate(prog.term).value, arg)
        if isinstance(out, Value):
            _no_tangents(out.value)


floats = st.floats(-1e3, 1e3, allow_nan=False)
ks = st.sampled_from([1, 2, 3, None])


@st.composite
def tangents(draw, k):
    if k is None:
        entries = draw(st.dictionaries(st.integers(1, 6), floats, max_size=4))
        return Tangent.from_entries(None, entries)
    return Tangent(k, tuple(draw(st.lists(floats, min_size=k, max_size=k))))


@given(st.data(), ks)
def test_vector_space_laws(data, k):
    u, v, w = (data.draw(tangents(k)) for _ in range(3))
    a, b = data.draw(floats), data.draw(floats)
    close = lambda p, q: all(math.isclose(p.entries().get(i, 0.0), q.entries().get(i, 0.0), rel_tol=1e-9, abs_tol=1e-6)
                             for i in set(p.entries()) | set(q.entries()))
    zero = Tangent.zero(k)
    assert u + v == v + u
    assert close((u + v) + w, u + (v + w))
    assert u + zero == u
    assert close(v.scale(a).scale(b), v.scale(a * b))
    assert close((u + v).scale(a), u.scale(a) + v.scale(a))


@given(st.data(), ks)
def test_tangent_terms_match_python_arithmetic(data, k):
    a, b = data.draw(st.floats(-10, 10)), data.draw(st.floats(-10, 10))
    src = f"(dbasis 1 <*> ({a!r}) <+> dbasis 2) <*> ({b!r})"
    got = run(src, k=k).value.t
    want = (Tangent.basis(k, 1).scale(a) + Tangent.basis(k, 2)).scale(b)
    assert got == want

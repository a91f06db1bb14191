import pytest
from hypothesis import given, strategies as st

from dualnum.ad import ad_transform
from dualnum.corpus import corpus_names, corpus_path
from dualnum.gen import random_typed_term
from dualnum.surface import ParseError, SourceFile, parse_term, parse_term_with_spans, parse_type, print_term, print_type
from dualnum.syntax import (
    REAL, TANGENT, UNIT, Arrow, CaseSum, Const, Iterate, Lam, Mu, Pair, PrimOp, Prod, Sign,
    Sum, TangentZero, TVar, Var, alpha_eq,
)


def test_parse_examples():
    assert parse_term("fun x -> sign x") == Lam("x", Sign(Var("x")))
    relu = parse_term("case sign x of { inl _ -> 0.0 | inr _ -> x }")
    assert relu == CaseSum(Sign(Var("x")), "_", Const(0.0), "_", Var("x"))
    it = parse_term("iterate t from z = (0.0, 0.0)")
    assert it == Iterate(Var("t"), "z", Pair(Const(0.0), Const(0.0)))


def test_parse_type_examples():
    assert parse_type("real * tangent") == Prod(REAL, TANGENT)
    assert parse_type("mu 'a. unit + real * 'a") == Mu("a", Sum(UNIT, Prod(REAL, TVar("a"))))
    assert parse_type("real -> real") == Arrow(REAL, REAL)
    assert parse_type("real -> real -> real") == Arrow(REAL, Arrow(REAL, REAL))


def test_print_examples():
    assert print_term(Lam("x", Var("x"))) == "fun x -> x"
    assert print_term(Pair(Const(1.0), TangentZero())) == "(1.0, dzero)"
    assert print_term(Sign(Const(0.0))) == "sign 0.0"


def test_precedence():
    t = parse_term("a + b * c")
    assert t == PrimOp("add", (Var("a"), PrimOp("mul", (Var("b"), Var("c")))))
    t = parse_term("u <+> v <*> a")
    assert print_term(t) == "u <+> v <*> a"
    assert parse_term("f x y") == parse_term("(f x) y")
    assert parse_term("-2.0") == Const(-2.0)
    assert parse_term("1.0 - -2.0") == PrimOp("sub", (Const(1.0), Const(-2.0)))


def test_tuples_nest_left():
    assert parse_term("(a, b, c)") == Pair(Pair(Var("a"), Var("b")), Var("c"))


def test_comments_and_spans():
    t, spans = parse_term_with_spans("-- comment\nfun x ->\n  sign x")
    assert spans[id(t)] == (2, 1)
    assert spans[id(t.body)] == (3, 3)


@pytest.mark.parametrize("src, where", [
    ("fun x ->", (1, 9)),
    ("(1.0, 2.0", (1, 10)),
    ("case x of { inl a -> a }", (1, 24)),
    ("add(1.0)", (1, 1)),
    ("let add = 1.0 in add", (1, 5)),
    ("1.0 $ 2.0", (1, 5)),
])
def test_errors_are_positioned(src, where):
    with pytest.raises(ParseError) as info:
        parse_term(src)
    assert (info.value.line, info.value.column) == where


def test_bad_utf8():
    with pytest.raises(ParseError) as info:
        SourceFile.from_bytes(b"fun x ->\n  \xff")
    assert info.value.line == 2


@pytest.mark.parametrize("name", corpus_names())
def test_corpus_round_trip(name):
    t = parse_term(SourceFile.read(str(corpus_path(f"{name}.dn"))))
    assert alpha_eq(parse_term(print_term(t)), t)


@given(st.integers(0, 10**6))
def test_round_trip_random_terms(seed):
    _, t, ty = random_typed_term(seed)
    assert alpha_eq(parse_term(print_term(t)), t)
    dt = ad_transform(t)
    assert alpha_eq(parse_term(print_term(dt)), dt)
    assert parse_type(print_type(ty)) == ty


alphabet = st.sampled_from(list("()[]{},|=:+-*/.<>'_ \n") + ["fun", "x", "1.5", "let", "in", "case", "of", "inl", "roll", "mu", "->", "<+>", "--"])


@given(st.lists(alphabet, max_size=40).map("".join))
def test_parser_total_on_token_soup(src):
    try:
        parse_term(src)
    except ParseError:
        pass


@given(st.binary(max_size=200))
def test_parser_total_on_bytes(data):
    try:
        parse_term(SourceFile.from_bytes(data))
    except ParseError as exc:
        assert exc.line >= 1 and exc.column >= 1


def test_deep_nesting_is_an_error_not_a_crash():
    src = "(" * 100_000 + "1.0" + ")" * 100_000
    try:
        parse_term(src)
    except ParseError:
        pass

import pytest
from hypothesis import given, strategies as st

from dualnum.gen import random_typed_term
from dualnum.surface import parse_term, parse_term_with_spans, parse_type
from dualnum.syntax import REAL, TANGENT, Mu, Sum, TVar, UNIT, Arrow, real_pow
from dualnum.typecheck import Lang, TypeCheckError, TypingContext, infer, type_equal, typecheck

LIST = "mu 'a. unit + real * 'a"


def ctx(**kw):
    return TypingContext.of({k: parse_type(v) for k, v in kw.items()})


def test_sign_has_type_unit_plus_unit():
    assert infer(parse_term("sign x"), ctx(x="real")) == Sum(UNIT, UNIT)


def test_target_constructs():
    assert infer(parse_term("dbasis 3"), lang=Lang.TARGET) == TANGENT
    assert type_equal(infer(parse_term("dproj 2 dzero"), lang=Lang.TARGET), real_pow(2))
    assert infer(parse_term("dzero <*> 2.0 <+> dbasis 1"), lang=Lang.TARGET) == TANGENT


def test_target_constructs_rejected_in_source():
    with pytest.raises(TypeCheckError):
        infer(parse_term("fun x -> (x, dzero)"))
    with pytest.raises(TypeCheckError):
        infer(parse_term("fun (x : tangent) -> x"))


def test_rec_at_real_is_an_error():
    with pytest.raises(TypeCheckError):
        infer(parse_term("(rec f -> 1.0 + f : real)"))
    with pytest.raises(TypeCheckError):
        infer(parse_term("rec f -> f + 1.0"))


def test_rec_at_arrow():
    t = parse_term("rec f -> fun (y : real) -> f y")
    ty = infer(t)
    assert isinstance(ty, Arrow) and ty.dom == REAL


def test_type_equal_examples():
    assert type_equal(parse_type("mu 'a. unit + 'a"), parse_type("mu 'b. unit + 'b"))
    assert not type_equal(parse_type("mu 'a. unit + 'a"), parse_type("unit + (mu 'a. unit + 'a)"))
    assert type_equal(parse_type("real -> real"), parse_type("real -> real"))


def test_roll_needs_a_known_mu():
    with pytest.raises(TypeCheckError):
        infer(parse_term("roll (inl ())"))
    assert infer(parse_term(f"roll[{LIST}] (inl ())")) == parse_type(LIST)
    assert infer(parse_term(f"(roll (inl ()) : {LIST})")) == parse_type(LIST)


def test_case_roll_unfolds():
    t = parse_term(f"fun (l : {LIST}) -> case l of {{ roll u -> u }}")
    assert type_equal(infer(t), parse_type(f"({LIST}) -> unit + real * ({LIST})"))


def test_error_carries_location():
    t, spans = parse_term_with_spans("fun x ->\n  x + ()")
    with pytest.raises(TypeCheckError) as info:
        typecheck(t, spans=spans)
    assert info.value.location is not None and info.value.location[0] == 2


def test_unbound_variable():
    with pytest.raises(TypeCheckError, match="unbound"):
        infer(parse_term("x + 1.0"))


def test_free_type_variables_need_delta():
    t = parse_term("fun (x : 'a) -> x")
    with pytest.raises(TypeCheckError):
        infer(t)
    ty = typecheck(t, TypingContext((), ("a",))).type
    assert ty == Arrow(TVar("a"), TVar("a"))


def test_iterate():
    t = parse_term("fun x -> iterate (if z then inr z else inl (z + 1.0)) from z = x")
    assert infer(t) == Arrow(REAL, REAL)


def test_sign_contexts_recorded():
    t = parse_term("fun x -> let y = 2.0 in case sign (x - y) of { inl _ -> 0.0 | inr _ -> 1.0 }")
    typing = typecheck(t)
    (where,) = typing.sign_contexts.values()
    assert where == {"x": REAL, "y": REAL}


def test_mu_types_are_not_unfolded_silently():
    lst = parse_type(LIST)
    assert isinstance(lst, Mu)
    with pytest.raises(TypeCheckError):
        infer(parse_term(f"fun (l : {LIST}) -> case l of {{ inl a -> a | inr b -> () }}"))


@given(st.integers(0, 10**6))
def test_generated_terms_have_their_types(seed):
    env, t, ty = random_typed_term(seed)
    got = typecheck(t, TypingContext.of(env), expected=ty).type
    assert type_equal(got, ty)

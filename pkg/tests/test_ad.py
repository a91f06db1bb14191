import math

import pytest
from hypothesis import given, strategies as st

from dualnum.ad import (
    ADError, SignMode, ad_context, ad_transform, ad_transform_type, typeproj_term, typezero_term, wrap_term,
)
from dualnum.evaluator import PairV, Scalar, Tangent, TangentV, apply_value, evaluate
from dualnum.gen import random_subst_triple, random_typed_term
from dualnum.surface import parse_term, parse_type, print_term
from dualnum.syntax import (
    REAL, TANGENT, UNIT, Arrow, Const, Pair, Prod, Sign, TangentZero, TVar, alpha_eq, normalize,
    real_pow, substitute, substitute_many, Var,
)
from dualnum.typecheck import Lang, TypingContext, type_equal, typecheck

LIST = "mu 'a. unit + real * 'a"


def test_constant():
    assert ad_transform(Const(2.5)) == Pair(Const(2.5), TangentZero())


def test_naive_sign_takes_the_primal():
    out = ad_transform(Sign(Var("x")))
    assert alpha_eq(out, parse_term("sign (case x of { (p, _) -> p })"))


def test_mul_normal_form():
    d = ad_transform(parse_term("x * y"))
    dual_args = {"x": parse_term("(x1, dx)"), "y": parse_term("(y1, dy)")}
    got = normalize(substitute_many(d, dual_args))
    want = parse_term("let p = x1 * y1 in (p, dx <*> y1 <+> dy <*> x1)")
    assert alpha_eq(got, want), print_term(got)


def test_type_transform():
    assert ad_transform_type(REAL) == Prod(REAL, TANGENT)
    assert ad_transform_type(parse_type(LIST)) == parse_type("mu 'a. unit + (real * tangent) * 'a")
    assert ad_transform_type(UNIT) == UNIT
    assert ad_transform_type(TVar("b")) == TVar("b")
    with pytest.raises(ADError):
        ad_transform_type(TANGENT)


def test_wrap_types_and_values():
    for s in range(1, 5):
        ty = typecheck(wrap_term(s), lang=Lang.TARGET).type
        assert type_equal(ty, Arrow(real_pow(s), ad_transform_type(real_pow(s))))
    fn = evaluate(wrap_term(1)).value
    out = apply_value(fn, Scalar(3.0), k=None).value
    assert out == PairV(Scalar(3.0), TangentV(Tangent.basis(None, 1)))
    fn = evaluate(wrap_term(2)).value
    out = apply_value(fn, PairV(Scalar(3.0), Scalar(4.0)), k=None).value
    e1, e2 = (TangentV(Tangent.basis(None, i)) for i in (1, 2))
    assert out == PairV(PairV(Scalar(3.0), e1), PairV(Scalar(4.0), e2))


def test_wrap_rejects_zero():
    with pytest.raises(ValueError):
        wrap_term(0)


def test_proj_zero_on_real():
    proj = evaluate(typeproj_term(REAL)).value
    zero = evaluate(typezero_term(REAL)).value
    dual = PairV(Scalar(2.0), TangentV(Tangent(1, (5.0,))))
    assert apply_value(proj, dual).value == Scalar(2.0)
    assert apply_value(zero, Scalar(2.0)).value == PairV(Scalar(2.0), TangentV(Tangent.zero(1)))


PROJ_TYPES = [
    "real", "unit", "real * (unit + real)", "real -> real", "(real -> real) -> real * real",
    LIST, "mu 'a. real + 'a * 'a", "mu 'a. unit + ('a -> real)", "mu 'a. unit + (real -> 'a)",
    "mu 'a. unit + (mu 'b. real + 'b * 'a)",
]


@pytest.mark.parametrize("src", PROJ_TYPES)
def test_proj_and_zero_types(src):
    ty = parse_type(src)
    d = ad_transform_type(ty)
    assert type_equal(typecheck(typeproj_term(ty), lang=Lang.TARGET).type, Arrow(d, ty))
    assert type_equal(typecheck(typezero_term(ty), lang=Lang.TARGET).type, Arrow(ty, d))


def test_proj_with_type_variables_in_scope():
    ty = parse_type("'b * real")
    ctx = TypingContext((), ("b",))
    t = typecheck(typeproj_term(ty, ("b",)), ctx, Lang.TARGET).type
    assert type_equal(t, Arrow(ad_transform_type(ty), ty))


def test_proj_after_zero_is_identity_on_lists():
    lst = parse_term(f"roll[{LIST}] (inr (1.5, roll[{LIST}] (inr (-2.0, roll[{LIST}] (inl ())))))")
    v = evaluate(lst).value
    zero = evaluate(typezero_term(parse_type(LIST))).value
    proj = evaluate(typeproj_term(parse_type(LIST))).value
    assert apply_value(proj, apply_value(zero, v).value).value == v


def test_efficient_sign_projects_free_variables():
    t = parse_term("fun x -> let y = 2.0 in case sign (x * y) of { inl _ -> 0.0 | inr _ -> x }")
    out = print_term(ad_transform(t, sign_mode=SignMode.EFFICIENT))
    assert "sign (x * y)" in out and "let x =" in out and "let y =" in out


def test_efficient_sign_needs_types_for_free_variables():
    with pytest.raises(Exception):
        ad_transform(parse_term("sign x"), sign_mode="efficient")
    ctx = TypingContext.of({"x": REAL})
    out = ad_transform(parse_term("sign x"), sign_mode="efficient", ctx=ctx)
    assert typecheck(out, ad_context(ctx), Lang.TARGET).type == parse_type("unit + unit")


def test_fresh_names_do_not_capture():
    # the source already uses names the transform likes to introduce
    t = parse_term("fun x_1 -> fun dx_2 -> x_1 * dx_2 + sin(x_1)")
    d = ad_transform(t)
    ty = typecheck(d, lang=Lang.TARGET).type
    assert type_equal(ty, ad_transform_type(parse_type("real -> real -> real")))
    fn = evaluate(d).value
    a = PairV(Scalar(2.0), TangentV(Tangent(1, (1.0,))))
    b = PairV(Scalar(3.0), TangentV(Tangent(1, (0.0,))))
    g = apply_value(fn, a).value
    out = apply_value(g, b).value
    assert out.fst.r == pytest.approx(6.0 + math.sin(2.0))
    assert out.snd.t.data[0] == pytest.approx(3.0 + math.cos(2.0))


seeds = st.integers(0, 10**6)


@given(seeds, st.sampled_from(list(SignMode)))
def test_type_preservation(seed, mode):
    env, t, ty = random_typed_term(seed)
    ctx = TypingContext.of(env)
    want = ad_transform_type(ty)
    got = typecheck(ad_transform(t, sign_mode=mode, ctx=ctx), ad_context(ctx), Lang.TARGET, expected=want).type
    assert type_equal(got, want)


@given(seeds)
def test_substitution_commutes(seed):
    _, t, x, v = random_subst_triple(seed)
    assert alpha_eq(ad_transform(substitute(t, x, v)), substitute(ad_transform(t), x, ad_transform(v)))


def test_target_terms_are_rejected():
    with pytest.raises(ADError):
        ad_transform(parse_term("(1.0, dzero)"))

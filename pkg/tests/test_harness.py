import dataclasses
import json

import numpy as np
import pytest

from dualnum.corpus import load_program
from dualnum.diffcalc import OutOfDomain
from dualnum.harness import (
    CheckConfig, check_cross, check_forward, check_primitive, check_registry, check_reverse,
    check_sign_modes, sample_points,
)
from dualnum.prims import BUILTINS, DEFAULT_REGISTRY, Registry
from dualnum.surface import SourceFile

FAST = CheckConfig(n=12, depth=3)


def prog(src, name="inline", registry=DEFAULT_REGISTRY):
    return load_program(SourceFile(src, name), registry, name)


SQUARE = prog("fun x -> x * x", "square")
MUL2 = prog("fun (p : real * real) -> case p of { (x, y) -> x * y }", "mul2")
IDENT3 = prog("fun (p : real * real * real) -> p", "ident3")
SUMPROD = prog("fun (p : real * real) -> case p of { (x, y) -> (x + y, x * y) }", "sumprod")
CONST = prog("fun (p : real * real) -> 4.0", "const")
RELU = load_program("relu")
LIST_SUM = load_program("list_sum")


def test_forward_square():
    rep = check_forward(SQUARE, FAST)
    assert rep.ok and rep.pass_count == 12 and rep.max_error < 1e-8
    rep = check_forward(SQUARE, dataclasses.replace(FAST, k="s"))
    assert rep.ok


def test_forward_relu_negative_branch():
    rep = check_forward(RELU, FAST)
    assert rep.ok
    neg = [s for s in rep.samples if s.x[0] < 0]
    assert neg and all(s.ad == [0.0] for s in neg)


def test_reverse_examples():
    rep = check_reverse(MUL2, FAST)
    assert rep.ok
    s = rep.samples[0]
    x, y = s.x
    assert s.ad == [[y, x]]
    rep = check_reverse(IDENT3, FAST)
    assert rep.ok and all(np.array_equal(s.ad, np.eye(3)) for s in rep.samples)


def test_reverse_list_sum_gradient_is_ones():
    rep = check_reverse(LIST_SUM, FAST)
    assert rep.ok
    for s in rep.samples:
        assert s.ad == [[1.0] * len(s.x)]


def test_cross_examples():
    for p in (SUMPROD, SQUARE, CONST, LIST_SUM):
        rep = check_cross(p, FAST)
        assert rep.ok and rep.max_error == 0.0, p.name
    assert all(np.all(np.array(s.ad) == 0.0) for s in check_cross(CONST, FAST).samples)


def test_sign_modes_agree():
    for p in (RELU, load_program("newton_sqrt"), load_program("branch_sum")):
        assert check_sign_modes(p, FAST).ok


def test_sample_points_deterministic_and_arity_zero():
    a = sample_points(3, 10, [1, 2])
    b = sample_points(3, 10, [1, 2])
    assert a.points == b.points and len(a.points) == 10
    assert all(abs(c) <= 2.0 for p in a.points for c in p)
    assert sample_points(0, 10, 0).points == [()]


def test_sample_points_rejects_near_pole():
    accept = lambda x: OutOfDomain("pole") if abs(x[0]) < 0.5 else x
    res = sample_points(1, 20, 0, accept)
    assert len(res.points) == 20 and res.rejected
    assert all(abs(p[0]) >= 0.5 for p in res.points)


def test_div_near_zero_is_rejected_not_failed():
    recip = prog("fun x -> 1.0 / x", "recip")
    rep = check_forward(recip, dataclasses.replace(FAST, n=200, box=1e-4))
    assert rep.fail_count == 0 and rep.rejected_count > 0


def test_kinks_are_rejected():
    rep = check_forward(RELU, dataclasses.replace(FAST, box=1e-6, n=30))
    assert rep.fail_count == 0 and rep.rejected_count > 0


def test_all_rejected_is_not_ok():
    nowhere = prog("fun x -> sqrt(-1.0 - x * x)", "nowhere")
    rep = check_forward(nowhere, FAST)
    assert rep.all_rejected and not rep.ok


def _wrong_mul():
    specs = [dataclasses.replace(s, partials=s.partials[::-1]) if s.symbol == "mul" else s for s in BUILTINS]
    return Registry(specs)


def test_wrong_derivative_is_caught():
    reg = _wrong_mul()
    assert not check_primitive(reg["mul"], reg).ok
    bad = load_program("poly", reg)
    assert check_forward(bad, FAST, reg).fail_count > 0
    assert check_reverse(bad, FAST, reg).fail_count > 0


def test_registry_sound():
    for chk in check_registry():
        assert chk.ok and chk.passed == 100, chk


def test_json_schema_and_determinism():
    a = check_forward(LIST_SUM, FAST).to_json()
    b = check_forward(LIST_SUM, FAST).to_json()
    assert json.dumps(a) == json.dumps(b)
    assert set(a) == {"program", "mode", "config", "samples", "pass_count", "fail_count", "rejected_count"}
    for s in a["samples"]:
        assert set(s) == {"x", "status", "max_rel_err"}
        assert s["status"] in ("pass", "fail", "rejected")
    c = check_forward(LIST_SUM, dataclasses.replace(FAST, seed=1)).to_json()
    assert c["samples"] != a["samples"]


def test_budget_covers_n_for_lists():
    rep = check_forward(LIST_SUM, CheckConfig(n=50))
    assert rep.pass_count >= 50


def test_config_validation():
    with pytest.raises(ValueError):
        CheckConfig(n=0)
    with pytest.raises(ValueError):
        CheckConfig(k="2")
    with pytest.raises(ValueError):
        CheckConfig(sign_mode="lazy")

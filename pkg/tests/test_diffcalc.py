import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dualnum.corpus import load_program
from dualnum.diffcalc import (
    FlatShape, OutOfDomain, Probe, ShapeError, check_data_type, deinterleave, enumerate_shapes,
    fd_jacobian, fd_jvp, flatten, interleave, rel_err,
)
from dualnum.evaluator import Tangent
from dualnum.harness import CheckConfig, ProgramRunner
from dualnum.surface import parse_type


def fn(g):
    """Lift a python map R^s -> R^l (None for undefined) to a probe function."""
    def f(x):
        y = g(*x)
        return None if y is None else Probe((), tuple(np.atleast_1d(y).tolist()))
    return f


def test_interleave_examples():
    t1, t2 = Tangent(1, (5.0,)), Tangent(1, (6.0,))
    assert interleave(2, 1, (1.0, 2.0), [t1, t2]) == [(1.0, t1), (2.0, t2)]
    assert interleave(0, 3, (), []) == []
    with pytest.raises(ValueError):
        interleave(2, 1, (1.0,), [t1])


@given(st.lists(st.floats(-1e6, 1e6), max_size=6))
def test_deinterleave_inverts(xs):
    ws = [Tangent.basis(None, i + 1) for i in range(len(xs))]
    assert deinterleave(interleave(len(xs), None, xs, ws)) == (tuple(xs), ws)


def test_fd_jvp_examples():
    assert fd_jvp(fn(lambda x: x * x), [3.0], [1.0])[0] == pytest.approx(6.0, rel=1e-6)
    assert fd_jvp(fn(lambda x, y: x * y), [2.0, 3.0], [1.0, 0.0])[0] == pytest.approx(3.0, rel=1e-6)
    relu = fn(lambda x: None if x == 0 else max(x, 0.0))
    assert isinstance(fd_jvp(relu, [0.0], [1.0]), OutOfDomain)


def test_fd_jvp_detects_branch_change():
    prog = load_program("relu")
    runner = ProgramRunner(prog, CheckConfig())
    shape = enumerate_shapes(prog.in_type)[0]
    res = fd_jvp(runner.probe_fn(shape), [1e-7], [1.0])
    assert isinstance(res, OutOfDomain) and "sign" in res.reason


def test_fd_jvp_consistency_check_rejects_poles():
    f = fn(lambda x: 1.0 / x if x != 0 else None)
    assert isinstance(fd_jvp(f, [3e-5], [1.0], consistency_tol=2.5e-5), OutOfDomain)
    assert not isinstance(fd_jvp(f, [1.0], [1.0], consistency_tol=2.5e-5), OutOfDomain)


def test_fd_jacobian_examples():
    rec = fd_jacobian(fn(lambda x, y: (x + y, x * y)), [2.0, 3.0])
    np.testing.assert_allclose(rec.J, [[1.0, 1.0], [3.0, 2.0]], rtol=1e-6)
    rec = fd_jacobian(fn(lambda x, y: 4.0), [2.0, 3.0])
    assert np.all(rec.J == 0.0)
    div = fn(lambda x, y: None if y == 0 else x / y)
    assert isinstance(fd_jacobian(div, [1.0, 0.0]), OutOfDomain)


def test_fd_rejects_bad_step():
    with pytest.raises(ValueError):
        fd_jvp(fn(lambda x: x), [1.0], [1.0], h=0.0)


def test_enumerate_shapes_examples():
    (only,) = enumerate_shapes(parse_type("real * real"))
    assert only.arity == 2
    lst = enumerate_shapes(parse_type("mu 'a. unit + real * 'a"), 3)
    assert [s.arity for s in lst] == [0, 1, 2, 3]
    sums = enumerate_shapes(parse_type("unit + real"))
    assert [(s.path, s.arity) for s in sums] == [((0,), 0), ((1,), 1)]


def test_tree_shapes_count():
    # binary trees with at most d internal-or-leaf unfoldings below the root
    shapes = enumerate_shapes(parse_type("mu 'a. real + 'a * 'a"), 2)
    assert len(shapes) == len({s.path for s in shapes})
    assert {s.arity for s in shapes} == {1, 2}


def test_data_type_check():
    check_data_type(parse_type("mu 'a. unit + real * 'a"))
    for bad in ("real -> real", "tangent", "'b"):
        with pytest.raises(ShapeError):
            check_data_type(parse_type(bad))


DATA_TYPES = ["real", "real * (unit + real)", "mu 'a. unit + real * 'a", "mu 'a. real + 'a * 'a",
              "(real + real * real) * mu 'a. unit + (real + unit) * 'a"]


@given(st.sampled_from(DATA_TYPES), st.data())
def test_encode_decode_round_trip(src, data):
    ty = parse_type(src)
    shape = data.draw(st.sampled_from(enumerate_shapes(ty, 3)))
    x = data.draw(st.lists(st.floats(allow_nan=False), min_size=shape.arity, max_size=shape.arity))
    v = shape.encode(x)
    assert shape.decode(v) == tuple(x)
    assert flatten(ty, v) == (shape.path, tuple(x))


def test_decode_rejects_other_shapes():
    ty = parse_type("unit + real")
    a, b = enumerate_shapes(ty)
    with pytest.raises(ShapeError):
        a.decode(b.encode([1.0]))
    with pytest.raises(ShapeError):
        FlatShape(ty, (1,), 1).encode([])


SMOOTH = ["poly", "rational", "list_dot", "tree_fold", "higher_order"]


@pytest.mark.parametrize("name", SMOOTH)
def test_fd_jvp_is_linear_in_direction(name):
    prog = load_program(name)
    runner = ProgramRunner(prog, CheckConfig())
    rng = np.random.default_rng(7)
    for shape in enumerate_shapes(prog.in_type, 3):
        if shape.arity == 0:
            continue
        f = runner.probe_fn(shape)
        x = rng.uniform(-1.5, 1.5, shape.arity)
        v, w = rng.uniform(-1, 1, (2, shape.arity))
        a, b = 0.7, -1.3
        lhs = fd_jvp(f, x, a * v + b * w)
        rhs = a * fd_jvp(f, x, v) + b * fd_jvp(f, x, w)
        for p, q in zip(lhs, rhs):
            assert rel_err(p, q) < 1e-4


@pytest.mark.parametrize("name", SMOOTH)
def test_jacobian_columns_are_basis_jvps(name):
    prog = load_program(name)
    runner = ProgramRunner(prog, CheckConfig())
    shape = enumerate_shapes(prog.in_type, 2)[-1]
    f = runner.probe_fn(shape)
    x = np.linspace(-0.8, 1.1, shape.arity)
    J = fd_jacobian(f, x).J
    for j, e in enumerate(np.eye(shape.arity)):
        assert np.array_equal(J[:, j], fd_jvp(f, x, e))


def test_rel_err():
    assert rel_err(1e-9, 0.0) == 1e-9
    assert rel_err(100.0, 101.0) == pytest.approx(1 / 101)
    assert math.isnan(rel_err(float("nan"), 1.0))

"""End-to-end derivative checks of transformed programs against oracles.

Forward mode runs D[t] with k = 1 (or k = s, one basis tangent per input slot)
and compares with central differences.  Reverse mode runs D[t] after the
wrapper with the unbounded sparse tangent space and reads each output's
cotangent through the handler.  Cross mode compares the two AD Jacobians.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from dualnum.ad import SignMode, ad_transform, wrap_term
from dualnum.corpus import Program, real_arity
from dualnum.diffcalc import (
    FlatShape, OutOfDomain, Point, Probe, ShapeError, enumerate_shapes,
    fd_jacobian, fd_jvp, flatten, flatten_dual, rel_err,
)
from dualnum.evaluator import (
    DEFAULT_FUEL, Bottom, PairV, RuntimeValue, Scalar, Tangent, TangentV,
    Value, apply_value, bitwise_equal, evaluate, handler_project,
)
from dualnum.prims import DEFAULT_REGISTRY, PrimSpec, Registry
from dualnum.syntax import App, Lam, PrimOp, Var

__all__ = [
    "CheckConfig", "SampleRecord", "CheckReport", "SampleSet", "sample_points",
    "check_forward", "check_reverse", "check_cross", "check_sign_modes", "ProgramRunner",
    "PrimCheck", "check_primitive", "check_registry",
]


@dataclass(frozen=True)
class CheckConfig:
    k: str = "1"  # forward: "1" or "s"; reverse always uses the sparse space
    n: int = 50
    h: float = 1e-5
    tol: float = 1e-4
    fuel: int = DEFAULT_FUEL
    seed: int = 0
    depth: int = 6
    box: float = 2.0
    retry_factor: int = 20
    cross_tol: float = 1e-9
    sign_mode: str = "naive"
    # reject points where the h and h/2 estimates disagree by more than tol/4
    consistency: bool = True

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.h <= 0 or self.tol <= 0 or self.cross_tol <= 0:
            raise ValueError("h and tolerances must be positive")
        if self.k not in ("1", "s", "inf"):
            raise ValueError("k must be 1, s or inf")
        if self.fuel < 0 or self.depth < 0 or self.box <= 0:
            raise ValueError("fuel, depth and box must be non-negative")
        SignMode(self.sign_mode)


@dataclass
class SampleRecord:
    x: Point
    shape: str
    status: str  # pass | fail | rejected
    max_rel_err: float | None = None
    ad: list | None = None
    oracle: list | None = None
    note: str = ""


def _json_err(e: float | None) -> float | None:
    # strict JSON has no Infinity; a non-finite error is reported as null on a failing sample
    return e if e is None or math.isfinite(e) else None


@dataclass
class CheckReport:
    program: str
    mode: str
    config: CheckConfig
    samples: list[SampleRecord] = field(default_factory=list)
    thin_shapes: list[str] = field(default_factory=list)

    def count(self, status: str) -> int:
        return sum(1 for s in self.samples if s.status == status)

    @property
    def pass_count(self) -> int:
        return self.count("pass")

    @property
    def fail_count(self) -> int:
        return self.count("fail")

    @property
    def rejected_count(self) -> int:
        return self.count("rejected")

    @property
    def all_rejected(self) -> bool:
        return self.pass_count == 0 and self.fail_count == 0

    @property
    def ok(self) -> bool:
        return self.fail_count == 0 and not self.all_rejected

    @property
    def max_error(self) -> float:
        errs = [s.max_rel_err for s in self.samples if s.status != "rejected" and s.max_rel_err is not None]
        return max(errs, default=0.0)

    def to_json(self) -> dict:
        return {
            "program": self.program,
            "mode": self.mode,
            "config": asdict(self.config),
            "samples": [
                {"x": list(s.x), "status": s.status, "max_rel_err": _json_err(s.max_rel_err)} for s in self.samples
            ],
            "pass_count": self.pass_count,
            "fail_count": self.fail_count,
            "rejected_count": self.rejected_count,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=False)

    def summary(self) -> str:
        line = (
            f"{self.program:<18} {self.mode:<8} pass={self.pass_count:<4} fail={self.fail_count:<3} "
            f"rejected={self.rejected_count:<4} max_err={self.max_error:.2e}"
        )
        if self.all_rejected:
            line += "  [all samples rejected]"
        if self.thin_shapes:
            line += f"  [domain too thin: {', '.join(self.thin_shapes)}]"
        return line


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


@dataclass
class SampleSet:
    accepted: list[tuple[Point, object]]
    rejected: list[tuple[Point, OutOfDomain]]
    exhausted: bool

    @property
    def points(self) -> list[Point]:
        return [p for p, _ in self.accepted]


def sample_points(
    shape: FlatShape | int,
    n: int,
    seed: int | Sequence[int],
    accept: Callable[[Point], object] | None = None,
    *,
    box: float = 2.0,
    retry_factor: int = 20,
) -> SampleSet:
    """Deterministic uniform points in [-box, box]^arity.

    ``accept`` returns an ``OutOfDomain`` to reject a point (it is then
    resampled, up to ``retry_factor * n`` tries) or any other result to keep it.
    An arity-0 shape has a single point, the empty one.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    arity = shape if isinstance(shape, int) else shape.arity
    rng = np.random.default_rng(seed)
    target = 1 if arity == 0 else n
    accepted: list[tuple[Point, object]] = []
    rejected: list[tuple[Point, OutOfDomain]] = []
    for _ in range(retry_factor * target):
        if len(accepted) == target:
            break
        x = tuple(rng.uniform(-box, box, arity).tolist())
        res = accept(x) if accept is not None else x
        if isinstance(res, OutOfDomain):
            rejected.append((x, res))
        else:
            accepted.append((x, res))
    return SampleSet(accepted, rejected, len(accepted) < target)


# ---------------------------------------------------------------------------
# Running programs
# ---------------------------------------------------------------------------


def _hexes(xs: Sequence[float]) -> tuple[str, ...]:
    return tuple(float(x).hex() for x in xs)


class ProgramRunner:
    """Closures for the source program and its transforms, ready to apply."""

    def __init__(self, program: Program, cfg: CheckConfig, registry: Registry = DEFAULT_REGISTRY):
        self.program = program
        self.cfg = cfg
        self.registry = registry
        self.dual_terms = {}
        self.src = self._closure(program.term)
        self._dual: dict[str, RuntimeValue] = {}
        self._wrapped: dict[str, RuntimeValue] = {}
        self.s = real_arity(program.in_type)

    def _closure(self, term) -> RuntimeValue:
        out = evaluate(term, fuel=self.cfg.fuel, registry=self.registry)
        if not isinstance(out, Value):
            raise ValueError(f"{self.program.name}: program does not evaluate to a function")
        return out.value

    def dual(self, mode: str | None = None) -> RuntimeValue:
        mode = mode or self.cfg.sign_mode
        if mode not in self._dual:
            self.dual_terms[mode] = ad_transform(self.program.term, self.registry, mode)
            self._dual[mode] = self._closure(self.dual_terms[mode])
        return self._dual[mode]

    def wrapped(self, mode: str | None = None) -> RuntimeValue:
        """fun x -> D[t] (Wrap_s x), for real^s inputs."""
        mode = mode or self.cfg.sign_mode
        if mode not in self._wrapped:
            self.dual(mode)
            term = Lam("x", App(self.dual_terms[mode], App(wrap_term(self.s), Var("x"))))
            self._wrapped[mode] = self._closure(term)
        return self._wrapped[mode]

    def run_source(self, shape: FlatShape, x: Point):
        trace: list[bool] = []
        out = apply_value(self.src, shape.encode(x), self.cfg.fuel, registry=self.registry, trace=trace)
        return out, tuple(trace)

    def probe_fn(self, shape: FlatShape) -> Callable[[Point], Probe | None]:
        def f(x: Point) -> Probe | None:
            out, trace = self.run_source(shape, x)
            if isinstance(out, Bottom):
                return None
            path, vals = flatten(self.program.out_type, out.value)
            return Probe(path, vals, trace)

        return f

    def run_dual(self, shape: FlatShape, x: Point, tangents: Sequence[Tangent], k: int | None, mode: str | None = None):
        return apply_value(self.dual(mode), shape.encode_dual(x, tangents), self.cfg.fuel, k, registry=self.registry)

    def run_reverse(self, shape: FlatShape, x: Point, mode: str | None = None):
        """Sparse cotangent run; the wrapper seeds real^s inputs, basis seeding otherwise."""
        if self.s is not None:
            return apply_value(self.wrapped(mode), shape.encode(x), self.cfg.fuel, None, registry=self.registry)
        seeds = [Tangent.basis(None, j + 1) for j in range(shape.arity)]
        return self.run_dual(shape, x, seeds, None, mode)


class _Checker:
    def __init__(self, program: Program, cfg: CheckConfig, mode: str, registry: Registry):
        self.program = program
        self.cfg = cfg
        self.runner = ProgramRunner(program, cfg, registry)
        self.report = CheckReport(program.name, mode, cfg)
        self.ctol = cfg.tol / 4 if cfg.consistency else None

    def shapes(self) -> list[FlatShape]:
        return enumerate_shapes(self.program.in_type, self.cfg.depth)

    def run(self, per_point: Callable[[FlatShape, Point, np.random.Generator], object]) -> CheckReport:
        shapes = self.shapes()
        # an arity-0 shape has a single point; spread the rest of the budget
        empty = sum(1 for s in shapes if s.arity == 0)
        per_shape = max(1, math.ceil((self.cfg.n - empty) / max(1, len(shapes) - empty)))
        for idx, shape in enumerate(shapes):
            dir_rng = np.random.default_rng([self.cfg.seed, idx, 1])
            res = sample_points(
                shape, per_shape, [self.cfg.seed, idx], lambda x: per_point(shape, x, dir_rng),
                box=self.cfg.box, retry_factor=self.cfg.retry_factor,
            )
            events = [(x, r) for x, r in res.accepted] + [(x, r) for x, r in res.rejected]
            for x, r in events:
                if isinstance(r, OutOfDomain):
                    self.report.samples.append(SampleRecord(x, shape.describe(), "rejected", note=r.reason))
                else:
                    self.report.samples.append(r)
            if res.exhausted:
                self.report.thin_shapes.append(shape.describe())
        return self.report

    def primal_and_bottom(self, shape: FlatShape, x: Point, dual_out) -> tuple[Probe | None, object]:
        """Shared prefix: source probe, bottom preservation, primal preservation.

        Returns the centre probe and either an OutOfDomain, a failing record,
        or the flattened dual output.
        """
        src_out, trace = self.runner.run_source(shape, x)
        src_bottom = isinstance(src_out, Bottom)
        dual_bottom = isinstance(dual_out, Bottom)
        if src_bottom and dual_bottom:
            return None, OutOfDomain(f"program is undefined here ({src_out.reason})")
        if src_bottom != dual_bottom:
            which = "source" if src_bottom else "transformed"
            return None, SampleRecord(x, shape.describe(), "fail", note=f"bottom preservation: only the {which} program is bottom")
        path, vals = flatten(self.program.out_type, src_out.value)
        try:
            dpath, prim, tans = flatten_dual(self.program.out_type, dual_out.value)
        except ShapeError as exc:
            return None, SampleRecord(x, shape.describe(), "fail", note=f"dual output malformed: {exc}")
        if dpath != path or _hexes(prim) != _hexes(vals):
            return None, SampleRecord(x, shape.describe(), "fail", note="primal preservation violated")
        return Probe(path, vals, trace), tans

    def compare(self, shape: FlatShape, x: Point, ad: np.ndarray, oracle: np.ndarray, tol: float) -> SampleRecord:
        ad, oracle = np.atleast_1d(ad), np.atleast_1d(oracle)
        if ad.shape != oracle.shape:
            return SampleRecord(x, shape.describe(), "fail", note=f"shape mismatch {ad.shape} vs {oracle.shape}")
        err = max((rel_err(a, b) for a, b in zip(ad.ravel(), oracle.ravel())), default=0.0)
        if not math.isfinite(err):
            err = math.inf
        status = "pass" if err <= tol else "fail"
        return SampleRecord(x, shape.describe(), status, err, ad.tolist(), oracle.tolist())


def check_forward(program: Program, cfg: CheckConfig = CheckConfig(), registry: Registry = DEFAULT_REGISTRY) -> CheckReport:
    """Compare k=1 (or k=s) tangents of D[t] with central differences."""
    chk = _Checker(program, cfg, "forward", registry)
    f_cache: dict[tuple, Callable] = {}

    def per_point(shape: FlatShape, x: Point, rng: np.random.Generator):
        f = f_cache.setdefault(shape.path, chk.runner.probe_fn(shape))
        l = shape.arity
        if cfg.k == "s":
            seeds = [Tangent.basis(l, j + 1) for j in range(l)]
            dual_out = chk.runner.run_dual(shape, x, seeds, l)
        else:
            v = rng.uniform(-1.0, 1.0, l)
            dual_out = chk.runner.run_dual(shape, x, [Tangent(1, (float(c),)) for c in v], 1)
        center, res = chk.primal_and_bottom(shape, x, dual_out)
        if center is None:
            return res
        tans: list[Tangent] = res
        if cfg.k == "s":
            jac = fd_jacobian(f, x, cfg.h, in_shape=shape.path, center=center, consistency_tol=chk.ctol)
            if isinstance(jac, OutOfDomain):
                return jac
            ad = np.array([t.data for t in tans], dtype=float).reshape(len(tans), l)
            return chk.compare(shape, x, ad, jac.J, cfg.tol)
        oracle = fd_jvp(f, x, v, cfg.h, center=center, consistency_tol=chk.ctol)
        if isinstance(oracle, OutOfDomain):
            return oracle
        ad = np.array([t.data[0] for t in tans], dtype=float)
        return chk.compare(shape, x, ad, oracle, cfg.tol)

    return chk.run(per_point)


def _reverse_rows(tans: Sequence[Tangent], l: int) -> np.ndarray:
    return np.array([handler_project(None, l, t) for t in tans], dtype=float).reshape(len(tans), l)


def check_reverse(program: Program, cfg: CheckConfig = CheckConfig(k="inf"), registry: Registry = DEFAULT_REGISTRY) -> CheckReport:
    """Compare sparse cotangent rows of D[t] with the finite-difference Jacobian."""
    chk = _Checker(program, cfg, "reverse", registry)
    f_cache: dict[tuple, Callable] = {}

    def per_point(shape: FlatShape, x: Point, _rng):
        f = f_cache.setdefault(shape.path, chk.runner.probe_fn(shape))
        center, res = chk.primal_and_bottom(shape, x, chk.runner.run_reverse(shape, x))
        if center is None:
            return res
        jac = fd_jacobian(f, x, cfg.h, in_shape=shape.path, center=center, consistency_tol=chk.ctol)
        if isinstance(jac, OutOfDomain):
            return jac
        return chk.compare(shape, x, _reverse_rows(res, shape.arity), jac.J, cfg.tol)

    return chk.run(per_point)


def check_cross(program: Program, cfg: CheckConfig = CheckConfig(), registry: Registry = DEFAULT_REGISTRY) -> CheckReport:
    """Jacobian from k=1 runs along each basis direction vs the reverse-mode rows."""
    chk = _Checker(program, cfg, "cross", registry)

    def per_point(shape: FlatShape, x: Point, _rng):
        l = shape.arity
        rev = chk.runner.run_reverse(shape, x)
        center, res = chk.primal_and_bottom(shape, x, rev)
        if center is None:
            return res
        rows = _reverse_rows(res, l)
        fwd = np.zeros_like(rows)
        for j in range(l):
            seeds = [Tangent(1, (1.0 if i == j else 0.0,)) for i in range(l)]
            out = chk.runner.run_dual(shape, x, seeds, 1)
            if not isinstance(out, Value):
                return SampleRecord(x, shape.describe(), "fail", note="forward run is bottom where reverse is not")
            _, _, tans = flatten_dual(program.out_type, out.value)
            fwd[:, j] = [t.data[0] for t in tans]
        return chk.compare(shape, x, fwd, rows, cfg.cross_tol)

    return chk.run(per_point)


def check_sign_modes(program: Program, cfg: CheckConfig = CheckConfig(), registry: Registry = DEFAULT_REGISTRY) -> CheckReport:
    """Naive and efficient sign transforms must give bitwise-equal outcomes."""
    chk = _Checker(program, cfg, "signmode", registry)

    def per_point(shape: FlatShape, x: Point, rng: np.random.Generator):
        l = shape.arity
        v = [Tangent(1, (float(c),)) for c in rng.uniform(-1.0, 1.0, l)]
        same = True
        for tans, k in ((v, 1), ([Tangent.basis(None, j + 1) for j in range(l)], None)):
            a = chk.runner.run_dual(shape, x, tans, k, "naive")
            b = chk.runner.run_dual(shape, x, tans, k, "efficient")
            same = same and bitwise_equal(a, b)
        if chk.runner.s is not None:
            same = same and bitwise_equal(chk.runner.run_reverse(shape, x, "naive"), chk.runner.run_reverse(shape, x, "efficient"))
        return SampleRecord(x, shape.describe(), "pass" if same else "fail", 0.0 if same else math.inf)

    return chk.run(per_point)


# ---------------------------------------------------------------------------
# Primitive soundness
# ---------------------------------------------------------------------------


@dataclass
class PrimCheck:
    symbol: str
    passed: int
    failed: int
    max_rel_err: float

    @property
    def ok(self) -> bool:
        return self.failed == 0 and self.passed > 0


def check_primitive(
    spec: PrimSpec, registry: Registry | None = None, n: int = 100, seed: int = 0, h: float = 1e-5, tol: float = 1e-5, box: float = 2.0, margin: float = 0.1,
) -> PrimCheck:
    """Tangent of D[op(x1..xn)] at k = n against central differences of the value map.

    Points are kept at least ``margin`` (per coordinate) inside the domain.
    """
    registry = Registry([spec]) if registry is None else registry
    arity = spec.arity
    term = ad_transform(PrimOp(spec.symbol, tuple(Var(p) for p in spec.params)), registry)
    rng = np.random.default_rng([seed, arity])
    passed = failed = 0
    worst = 0.0
    for _ in range(n * 50):
        if passed + failed == n:
            break
        x = rng.uniform(-box, box, arity)
        probes = [x] + [x + s * margin * e for e in np.eye(arity) for s in (1.0, -1.0)]
        if not all(spec.domain(p.tolist()) for p in probes):
            continue
        env = {p: PairV(Scalar(float(v)), TangentV(Tangent.basis(arity, i + 1))) for i, (p, v) in enumerate(zip(spec.params, x))}
        out = evaluate(term, env, k=max(arity, 1), registry=registry)
        if not isinstance(out, Value):
            failed += 1
            continue
        value, tangent = out.value.fst.r, out.value.snd.t
        err = rel_err(value, spec.value(x.tolist()))
        for j in range(arity):
            e = np.eye(arity)[j]
            fd = (spec.value((x + h * e).tolist()) - spec.value((x - h * e).tolist())) / (2 * h)
            err = max(err, rel_err(tangent.data[j], fd))
        worst = max(worst, err)
        if err <= tol:
            passed += 1
        else:
            failed += 1
    return PrimCheck(spec.symbol, passed, failed, worst)


def check_registry(registry: Registry = DEFAULT_REGISTRY, **kw) -> list[PrimCheck]:
    # partials may mention other primitives (cos in the partial of sin)
    return [check_primitive(spec, registry, **kw) for spec in registry.values()]

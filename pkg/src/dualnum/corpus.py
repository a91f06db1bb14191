"""Example programs shipped with the package (``corpus/*.dn``)."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

from dualnum.diffcalc import check_data_type
from dualnum.prims import DEFAULT_REGISTRY, Registry
from dualnum.surface import SourceFile, parse_term_with_spans
from dualnum.syntax import Arrow, Prod, Real, Term, Type
from dualnum.typecheck import Lang, typecheck

__all__ = ["Program", "load_program", "corpus_names", "load_corpus", "corpus_path", "real_arity"]


@dataclass(frozen=True)
class Program:
    """A closed source program of type ``in_type -> out_type`` between data types."""

    name: str
    term: Term
    in_type: Type
    out_type: Type
    text: str


def real_arity(ty: Type) -> int | None:
    """s when ``ty`` is real^s (left-nested), else None."""
    n = 0
    while isinstance(ty, Prod):
        if not isinstance(ty.right, Real):
            return None
        n += 1
        ty = ty.left
    return n + 1 if isinstance(ty, Real) else None


def corpus_path(name: str = "") -> Path:
    base = Path(str(resources.files("dualnum") / "corpus"))
    return base / name if name else base


def corpus_names() -> list[str]:
    return sorted(p.stem for p in corpus_path().glob("*.dn"))


def load_program(src: str | Path | SourceFile, registry: Registry = DEFAULT_REGISTRY, name: str | None = None) -> Program:
    """Parse and check a program; ``src`` may be a corpus name, a path, or a SourceFile."""
    if not isinstance(src, SourceFile):
        path = Path(src)
        if not path.suffix and not path.exists():
            path = corpus_path(f"{src}.dn")
        src = SourceFile.read(str(path))
        name = name or path.stem
    term, spans = parse_term_with_spans(src, registry)
    ty = typecheck(term, None, Lang.SOURCE, registry=registry, spans=spans).type
    if not isinstance(ty, Arrow):
        raise ValueError(f"{src.origin}: expected a function between data types, got {ty}")
    check_data_type(ty.dom)
    check_data_type(ty.cod)
    return Program(name or src.origin, term, ty.dom, ty.cod, src.text)


@lru_cache(maxsize=None)
def _cached(name: str) -> Program:
    return load_program(name)


def load_corpus(names: list[str] | None = None) -> list[Program]:
    return [_cached(n) for n in (names or corpus_names())]

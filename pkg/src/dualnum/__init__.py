"""Dual-numbers automatic differentiation for a small higher-order language.

Typical use::

    from dualnum import load_program, ad_transform, evaluate
    prog = load_program("poly")
    dual = ad_transform(prog.term)
"""

from dualnum.ad import SignMode, ad_transform, ad_transform_type, typeproj_term, typezero_term, wrap_term
from dualnum.corpus import Program, load_corpus, load_program
from dualnum.evaluator import Bottom, Tangent, Value, apply_value, evaluate, format_outcome
from dualnum.harness import CheckConfig, check_cross, check_forward, check_reverse
from dualnum.prims import DEFAULT_REGISTRY, PrimSpec, Registry
from dualnum.surface import ParseError, parse_term, parse_type, print_term, print_type
from dualnum.typecheck import Lang, TypeCheckError, TypingContext, typecheck

__version__ = "0.1.0"

__all__ = [
    "SignMode", "ad_transform", "ad_transform_type", "typeproj_term", "typezero_term", "wrap_term",
    "Program", "load_corpus", "load_program",
    "Bottom", "Tangent", "Value", "apply_value", "evaluate", "format_outcome",
    "CheckConfig", "check_cross", "check_forward", "check_reverse",
    "DEFAULT_REGISTRY", "PrimSpec", "Registry",
    "ParseError", "parse_term", "parse_type", "print_term", "print_type",
    "Lang", "TypeCheckError", "TypingContext", "typecheck",
]

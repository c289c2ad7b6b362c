"""Script front end: lexing, parsing, type checking and lowering."""

import os

from .checker import check, typecheck
from .lexer import tokenize
from .parser import parse, parse_source
from .plan import lower


def load_program(path, _seen=None):
    """Parse a script and the scripts it imports; returns (program, libraries)."""
    seen = set() if _seen is None else _seen
    path = os.path.abspath(path)
    seen.add(path)
    with open(path, encoding="utf-8") as f:
        prog = parse_source(f.read())
    libs = []
    for imp in prog.imports:
        ipath = os.path.join(os.path.dirname(path), imp)
        if os.path.abspath(ipath) in seen:
            continue
        sub, sublibs = load_program(ipath, seen)
        libs.extend(sublibs)
        libs.append(sub)
    return prog, libs


def compile_source(source, libraries=()):
    """Source text to AbstractPlan, raising on the first failing phase."""
    return lower(typecheck(parse_source(source), libraries))


def compile_file(path):
    prog, libs = load_program(path)
    return lower(typecheck(prog, libs))


__all__ = ["tokenize", "parse", "parse_source", "check", "typecheck", "lower",
           "load_program", "compile_source", "compile_file"]

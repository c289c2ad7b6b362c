"""Syntax tree for .sws scripts.

Positions (``line``/``col``) and the checker's type annotations (``ty``) are
excluded from equality so that structurally identical trees compare equal
regardless of where they came from.
"""

from dataclasses import dataclass, field
from typing import Optional, Union


def _pos():
    return field(default=0, compare=False, repr=False)


def _ty():
    return field(default=None, compare=False, repr=False)


@dataclass
class TypeRef:
    name: str
    is_array: bool = False


@dataclass
class FieldDecl:
    name: str
    type: TypeRef


@dataclass
class TypeDecl:
    name: str
    kind: str  # "opaque-file" | "struct"
    fields: list
    line: int = _pos()
    col: int = _pos()


@dataclass
class Param:
    name: str
    type: TypeRef
    line: int = _pos()
    col: int = _pos()


# expressions

@dataclass
class Literal:
    value: object
    kind: str  # string | int | float | boolean
    line: int = _pos()
    col: int = _pos()
    ty: object = _ty()


@dataclass
class Name:
    id: str
    line: int = _pos()
    col: int = _pos()
    ty: object = _ty()


@dataclass
class Member:
    obj: "Expr"
    name: str
    line: int = _pos()
    col: int = _pos()
    ty: object = _ty()


@dataclass
class Index:
    obj: "Expr"
    index: "Expr"
    line: int = _pos()
    col: int = _pos()
    ty: object = _ty()


@dataclass
class Call:
    name: str
    args: list
    line: int = _pos()
    col: int = _pos()
    ty: object = _ty()


@dataclass
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"
    line: int = _pos()
    col: int = _pos()
    ty: object = _ty()


@dataclass
class UnaryOp:
    op: str
    operand: "Expr"
    line: int = _pos()
    col: int = _pos()
    ty: object = _ty()


@dataclass
class Filename:
    arg: "Expr"
    line: int = _pos()
    col: int = _pos()
    ty: object = _ty()


Expr = Union[Literal, Name, Member, Index, Call, BinOp, UnaryOp, Filename]


# app lines

@dataclass
class StrArg:
    value: str
    line: int = _pos()
    col: int = _pos()


@dataclass
class RefArg:
    """A bare parameter reference or member path in an app line."""
    path: Expr
    line: int = _pos()
    col: int = _pos()


@dataclass
class FilenameArg:
    path: Expr
    line: int = _pos()
    col: int = _pos()


@dataclass
class AppLine:
    executable: str
    args: list
    line: int = _pos()
    col: int = _pos()


# statements

@dataclass
class MapperBinding:
    mapper: str
    params: list  # list of (key, Literal | Name)
    line: int = _pos()
    col: int = _pos()


@dataclass
class VarDecl:
    name: str
    type: TypeRef
    mapping: Optional[MapperBinding] = None
    init: Optional[Expr] = None
    line: int = _pos()
    col: int = _pos()
    ty: object = _ty()
    # filled by the checker: "input" / "output" for mapped variables, else "local"
    mode: object = _ty()


@dataclass
class Assign:
    target: Expr
    value: Expr
    line: int = _pos()
    col: int = _pos()


@dataclass
class Foreach:
    elem: str
    elem_type: Optional[TypeRef]
    index: Optional[str]
    source: Expr
    body: list
    line: int = _pos()
    col: int = _pos()
    elem_ty: object = _ty()


@dataclass
class If:
    cond: Expr
    then: list
    orelse: list
    line: int = _pos()
    col: int = _pos()


@dataclass
class CallStmt:
    call: Call
    line: int = _pos()
    col: int = _pos()


Stmt = Union[VarDecl, Assign, Foreach, If, CallStmt]


@dataclass
class ProcDecl:
    name: str
    outputs: list
    inputs: list
    body: Union[AppLine, list]
    line: int = _pos()
    col: int = _pos()

    @property
    def is_atomic(self):
        return isinstance(self.body, AppLine)


@dataclass
class Program:
    types: list = field(default_factory=list)
    procs: list = field(default_factory=list)
    stmts: list = field(default_factory=list)
    imports: list = field(default_factory=list)

    def merged(self, *others):
        """A new program with the declarations of ``others`` prepended."""
        out = Program()
        for p in (*others, self):
            out.types.extend(p.types)
            out.procs.extend(p.procs)
        out.stmts = list(self.stmts)
        out.imports = list(self.imports)
        return out


def count_stmts(stmts):
    """Statements counted recursively; a foreach or if counts once plus its body."""
    total = 0
    for s in stmts:
        total += 1
        if isinstance(s, Foreach):
            total += count_stmts(s.body)
        elif isinstance(s, If):
            total += count_stmts(s.then) + count_stmts(s.orelse)
    return total


def program_stmt_count(program):
    total = count_stmts(program.stmts)
    for p in program.procs:
        if not p.is_atomic:
            total += count_stmts(p.body)
    return total

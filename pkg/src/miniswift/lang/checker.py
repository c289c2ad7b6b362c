"""Static checks over a parsed program.

Resolves type names, annotates every expression with its LogicalType,
validates call sites, foreach sources, app lines and single assignment, and
records whether each mapped variable is read (input mode) or written
(output mode).
"""

from dataclasses import dataclass, field

from ..data import types as T
from ..errors import TypeCheckError, TypeErrorItem
from . import ast as A


@dataclass
class ProcSig:
    name: str
    outputs: list  # [(name, LogicalType)]
    inputs: list
    decl: A.ProcDecl

    @property
    def is_atomic(self):
        return self.decl.is_atomic


@dataclass
class TypedProgram:
    program: A.Program
    types: dict
    procs: dict
    errors: list = field(default_factory=list)


@dataclass
class _Var:
    name: str
    type: T.LogicalType
    role: str  # input | output | local | alias | elem | index
    decl: object = None
    assigned: bool = False


class _Scope:
    def __init__(self, parent=None):
        self.parent = parent
        self.vars = {}

    def lookup(self, name):
        s = self
        while s is not None:
            if name in s.vars:
                return s.vars[name]
            s = s.parent
        return None


_NUMERIC = (T.INT, T.FLOAT)


def _assignable(src, dst):
    return src == dst or (src == T.INT and dst == T.FLOAT)


class Checker:
    def __init__(self, program):
        self.prog = program
        self.errors = []
        self.types = dict(T.BUILTIN_TYPES)
        self.procs = {}
        self._user_types = set()

    def err(self, kind, msg, node=None):
        line = getattr(node, "line", 0) or 0
        col = getattr(node, "col", 0) or 0
        self.errors.append(TypeErrorItem(kind, msg, line, col))

    # declarations

    def resolve_ref(self, tref, node):
        base = self.types.get(tref.name)
        if base is None:
            self.err("undefined-type", f"unknown type {tref.name!r}", node)
            return None
        return T.ArrayType(base) if tref.is_array else base

    def declare_types(self):
        for td in self.prog.types:
            if td.name in self.types:
                kind = "duplicate-type" if td.name in self._user_types else "reserved-type"
                self.err(kind, f"type {td.name!r} already defined", td)
                continue
            self._user_types.add(td.name)
            if td.kind == "opaque-file":
                self.types[td.name] = T.FileType(td.name)
            else:
                self.types[td.name] = T.StructType(td.name)
        for td in self.prog.types:
            if td.kind != "struct" or not isinstance(self.types.get(td.name), T.StructType):
                continue
            st = self.types[td.name]
            if st.fields:
                continue
            seen = set()
            fields = []
            for f in td.fields:
                if f.name in seen:
                    self.err("duplicate-field", f"field {f.name!r} repeated in {td.name}", td)
                    continue
                seen.add(f.name)
                ft = self.resolve_ref(f.type, td)
                if ft is not None:
                    fields.append((f.name, ft))
            st.set_fields(fields)
        for td in self.prog.types:
            st = self.types.get(td.name)
            if isinstance(st, T.StructType) and self._struct_cycle(st, set()):
                self.err("recursive-type", f"struct {td.name} contains itself without an array", td)

    def _struct_cycle(self, st, stack):
        if st.name in stack:
            return True
        stack = stack | {st.name}
        return any(ft.is_struct and self._struct_cycle(ft, stack) for _, ft in st.fields)

    def declare_procs(self):
        for pd in self.prog.procs:
            if pd.name in self.procs:
                self.err("duplicate-procedure", f"procedure {pd.name!r} already defined", pd)
                continue
            outs, ins = [], []
            names = set()
            for group, dest in ((pd.outputs, outs), (pd.inputs, ins)):
                for p in group:
                    if p.name in names:
                        self.err("duplicate-parameter", f"parameter {p.name!r} repeated in {pd.name}", p)
                    names.add(p.name)
                    t = self.resolve_ref(p.type, p)
                    dest.append((p.name, t))
            self.procs[pd.name] = ProcSig(pd.name, outs, ins, pd)

    # procedures

    def check_proc(self, sig):
        pd = sig.decl
        scope = _Scope()
        for name, t in sig.inputs:
            if t is not None:
                scope.vars[name] = _Var(name, t, "input")
        for name, t in sig.outputs:
            if t is not None:
                scope.vars[name] = _Var(name, t, "output")
        if pd.is_atomic:
            for name, t in sig.outputs:
                if t is not None and not T.is_file_struct(t):
                    self.err("atomic-output", f"output {name!r} of app procedure {pd.name} must be a file "
                             f"or a struct of files, not {t!r}", pd)
            self.check_app(pd.body, scope)
        else:
            self.check_block(pd.body, scope)

    def check_app(self, app, scope):
        for a in app.args:
            if isinstance(a, A.StrArg):
                continue
            t = self.check_expr(a.path, scope)
            root = a.path
            while isinstance(root, (A.Member, A.Index)):
                root = root.obj
            if not isinstance(root, A.Name):
                self.err("bad-app-arg", "app arguments must be parameter paths", a)
                continue
            v = scope.lookup(root.id)
            if v is not None and v.role not in ("input", "output"):
                self.err("bad-app-arg", f"{root.id!r} is not a parameter", a)
            if t is None:
                continue
            if isinstance(a, A.FilenameArg):
                if not T.is_file_struct(t):
                    self.err("type-mismatch", f"@filename needs a file or struct of files, got {t!r}", a)
            elif not (t.is_primitive or t.is_file or (t.is_array and t.elem.is_file)):
                # a file array passes all of its member files, in index order
                self.err("type-mismatch", f"app argument must be a primitive, a file or a file array, got {t!r}", a)

    def check_block(self, stmts, scope):
        local = []
        for s in stmts:
            self.check_stmt(s, scope, local)
        for decl, var in local:
            if decl.mapping is not None:
                decl.mode = "output" if var.assigned else "input"
            else:
                decl.mode = "local"

    def check_stmt(self, s, scope, local):
        if isinstance(s, A.VarDecl):
            t = self.resolve_ref(s.type, s)
            s.ty = t
            if s.name in scope.vars:
                self.err("duplicate-variable", f"variable {s.name!r} already declared", s)
            if s.mapping is not None:
                for key, val in s.mapping.params:
                    if isinstance(val, A.Name):
                        v = scope.lookup(val.id)
                        if v is None:
                            self.err("undefined-variable", f"mapper parameter {key} refers to unknown {val.id!r}", val)
                        else:
                            val.ty = v.type
                    else:
                        self.check_expr(val, scope)
            role = "local"
            if s.init is not None and not isinstance(s.init, A.Call):
                role = "alias"
            var = _Var(s.name, t, role, s)
            if s.init is not None:
                vt = self.check_expr(s.init, scope)
                if t is not None and vt is not None and not _assignable(vt, t):
                    self.err("type-mismatch", f"cannot initialise {t!r} {s.name} from {vt!r}", s)
                var.assigned = True
            if t is not None:
                scope.vars[s.name] = var
            local.append((s, var))
        elif isinstance(s, A.Assign):
            tt = self.check_lvalue(s.target, scope, s)
            vt = self.check_expr(s.value, scope)
            if tt is not None and vt is not None and not _assignable(vt, tt):
                self.err("type-mismatch", f"cannot assign {vt!r} to {tt!r}", s)
        elif isinstance(s, A.CallStmt):
            self.check_call(s.call, scope, statement=True)
        elif isinstance(s, A.Foreach):
            st = self.check_expr(s.source, scope)
            et = None
            if st is not None:
                if not st.is_array:
                    self.err("not-an-array", f"foreach source must be an array, got {st!r}", s.source)
                else:
                    et = st.elem
            if s.elem_type is not None:
                declared = self.resolve_ref(s.elem_type, s)
                if declared is not None and et is not None and declared != et:
                    self.err("type-mismatch", f"foreach variable declared {declared!r} but elements are {et!r}", s)
            s.elem_ty = et
            inner = _Scope(scope)
            if et is not None:
                inner.vars[s.elem] = _Var(s.elem, et, "elem")
            if s.index:
                if s.index == s.elem:
                    self.err("duplicate-variable", f"index and element both named {s.index!r}", s)
                inner.vars[s.index] = _Var(s.index, T.INT, "index")
            self.check_block(s.body, inner)
        elif isinstance(s, A.If):
            ct = self.check_expr(s.cond, scope)
            if ct is not None and ct != T.BOOLEAN:
                self.err("type-mismatch", f"if condition must be boolean, got {ct!r}", s.cond)
            self.check_block(s.then, _Scope(scope))
            self.check_block(s.orelse, _Scope(scope))

    def check_lvalue(self, target, scope, stmt):
        root = target
        whole = isinstance(target, A.Name)
        while isinstance(root, (A.Member, A.Index)):
            root = root.obj
        if not isinstance(root, A.Name):
            self.err("bad-assignment", "assignment target must be a variable path", stmt)
            return None
        var = scope.lookup(root.id)
        if var is None:
            self.err("undefined-variable", f"unknown variable {root.id!r}", root)
            return None
        if var.role == "input":
            self.err("write-to-input", f"procedures may not modify input parameter {root.id!r}", stmt)
        elif var.role in ("elem", "index"):
            self.err("write-to-input", f"cannot assign to loop variable {root.id!r}", stmt)
        elif var.role == "alias":
            self.err("bad-assignment", f"{root.id!r} is an alias and cannot be assigned into", stmt)
        if whole:
            if var.assigned:
                self.err("double-assignment", f"variable {root.id!r} is already assigned", stmt)
            if var.role in ("local", "output"):
                var.assigned = True
        else:
            var.assigned = True
        return self.check_expr(target, scope)

    # expressions

    def check_expr(self, e, scope):
        t = self._expr(e, scope)
        e.ty = t
        return t

    def _expr(self, e, scope):
        if isinstance(e, A.Literal):
            return T.BUILTIN_TYPES[e.kind]
        if isinstance(e, A.Name):
            v = scope.lookup(e.id)
            if v is None:
                self.err("undefined-variable", f"unknown variable {e.id!r}", e)
                return None
            return v.type
        if isinstance(e, A.Member):
            ot = self.check_expr(e.obj, scope)
            if ot is None:
                return None
            if not ot.is_struct:
                self.err("type-mismatch", f"{ot!r} has no member {e.name!r}", e)
                return None
            ft = ot.field_type(e.name)
            if ft is None:
                self.err("undefined-member", f"{ot!r} has no member {e.name!r}", e)
            return ft
        if isinstance(e, A.Index):
            ot = self.check_expr(e.obj, scope)
            it = self.check_expr(e.index, scope)
            if it is not None and it != T.INT:
                self.err("type-mismatch", f"array index must be int, got {it!r}", e.index)
            if ot is None:
                return None
            if not ot.is_array:
                self.err("type-mismatch", f"cannot index {ot!r}", e)
                return None
            return ot.elem
        if isinstance(e, A.Call):
            return self.check_call(e, scope)
        if isinstance(e, A.Filename):
            at = self.check_expr(e.arg, scope)
            if at is not None and not T.is_file_struct(at):
                self.err("type-mismatch", f"@filename needs a file, got {at!r}", e)
            return T.STRING
        if isinstance(e, A.UnaryOp):
            ot = self.check_expr(e.operand, scope)
            if ot is None:
                return None
            if e.op == "!":
                if ot != T.BOOLEAN:
                    self.err("type-mismatch", f"'!' needs boolean, got {ot!r}", e)
                return T.BOOLEAN
            if ot not in _NUMERIC:
                self.err("type-mismatch", f"unary '-' needs a number, got {ot!r}", e)
                return None
            return ot
        if isinstance(e, A.BinOp):
            lt = self.check_expr(e.left, scope)
            rt = self.check_expr(e.right, scope)
            if lt is None or rt is None:
                return None
            op = e.op
            if op in ("&&", "||"):
                if lt != T.BOOLEAN or rt != T.BOOLEAN:
                    self.err("type-mismatch", f"{op!r} needs booleans, got {lt!r} and {rt!r}", e)
                return T.BOOLEAN
            if op in ("==", "!="):
                if not (lt == rt or (lt in _NUMERIC and rt in _NUMERIC)) or not lt.is_primitive:
                    self.err("type-mismatch", f"cannot compare {lt!r} with {rt!r}", e)
                return T.BOOLEAN
            if op in ("<", ">", "<=", ">="):
                ok = (lt in _NUMERIC and rt in _NUMERIC) or (lt == rt == T.STRING)
                if not ok:
                    self.err("type-mismatch", f"cannot order {lt!r} and {rt!r}", e)
                return T.BOOLEAN
            if op == "+" and lt == rt == T.STRING:
                return T.STRING
            if lt in _NUMERIC and rt in _NUMERIC:
                if op == "%" and (lt != T.INT or rt != T.INT):
                    self.err("type-mismatch", "'%' needs ints", e)
                return T.FLOAT if T.FLOAT in (lt, rt) else T.INT
            self.err("type-mismatch", f"operator {op!r} not defined for {lt!r} and {rt!r}", e)
            return None
        raise TypeError(f"unknown expression {e!r}")

    def check_call(self, call, scope, statement=False):
        sig = self.procs.get(call.name)
        arg_types = [self.check_expr(a, scope) for a in call.args]
        if sig is None:
            self.err("undefined-procedure", f"unknown procedure {call.name!r}", call)
            return None
        if len(arg_types) != len(sig.inputs):
            self.err("arity-mismatch", f"{call.name} takes {len(sig.inputs)} argument(s), got {len(arg_types)}", call)
        else:
            for (pname, pt), at, a in zip(sig.inputs, arg_types, call.args):
                if pt is not None and at is not None and not _assignable(at, pt):
                    self.err("type-mismatch", f"argument {pname!r} of {call.name} expects {pt!r}, got {at!r}", a)
        if statement:
            if sig.outputs:
                self.err("unused-output", f"{call.name} has outputs; assign its result", call)
            return None
        if len(sig.outputs) != 1:
            self.err("arity-mismatch", f"{call.name} has {len(sig.outputs)} outputs; "
                     "only single-output procedures can be used in expressions", call)
            return None
        return sig.outputs[0][1]

    def run(self):
        self.declare_types()
        self.declare_procs()
        for sig in self.procs.values():
            self.check_proc(sig)
        self.check_block(self.prog.stmts, _Scope())
        return TypedProgram(self.prog, self.types, self.procs, self.errors)


def check(program):
    """Type-check ``program``; returns a TypedProgram whose ``errors`` may be non-empty."""
    return Checker(program).run()


def typecheck(program, libraries=()):
    """Type-check and raise :class:`TypeCheckError` listing every error found."""
    if libraries:
        program = program.merged(*libraries)
    tp = check(program)
    if tp.errors:
        raise TypeCheckError(tp.errors)
    return tp

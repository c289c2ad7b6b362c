"""Lowering of a typed program into an abstract plan.

Every variable becomes a slot index in its procedure's frame. Statements keep
their nesting (foreach expansion happens at run time) and record which arrays
they may write, so the engine knows when an array can no longer grow. The
plan names no sites or hosts.
"""

import hashlib
from dataclasses import dataclass, field

from ..data import types as T
from . import ast as A
from . import printer


# expressions

@dataclass
class PLit:
    value: object
    ty: object


@dataclass
class PVar:
    slot: int
    ty: object


@dataclass
class PMember:
    obj: object
    name: str
    ty: object


@dataclass
class PIndex:
    obj: object
    index: object
    ty: object


@dataclass
class PCallE:
    proc: str
    args: list
    ty: object


@dataclass
class PBin:
    op: str
    left: object
    right: object
    ty: object


@dataclass
class PUn:
    op: str
    operand: object
    ty: object


@dataclass
class PFilename:
    arg: object
    ty: object = T.STRING


# statements

@dataclass
class PMapping:
    mapper: str
    params: list  # (key, PLit | PVar)
    line: int = 0


@dataclass
class PDecl:
    slot: int
    name: str
    ty: object
    mapping: object = None
    mode: str = "local"
    init: object = None
    label: str = ""
    writes: list = field(default_factory=list)
    line: int = 0

    @property
    def is_alias(self):
        return self.init is not None and not isinstance(self.init, PCallE)


@dataclass
class PAssign:
    target: object
    value: object
    label: str = ""
    writes: list = field(default_factory=list)
    line: int = 0


@dataclass
class PCallS:
    call: PCallE
    label: str = ""
    writes: list = field(default_factory=list)
    line: int = 0


@dataclass
class PForeach:
    elem_slot: int
    index_slot: object
    source: object
    body: list
    label: str = ""
    writes: list = field(default_factory=list)
    line: int = 0


@dataclass
class PIf:
    cond: object
    then: list
    orelse: list
    label: str = ""
    writes: list = field(default_factory=list)
    line: int = 0


@dataclass
class PArg:
    kind: str  # str | ref | filename
    value: object


@dataclass
class PlanProc:
    name: str
    kind: str  # atomic | compound | main
    inputs: list  # [(name, type, slot)]
    outputs: list
    slot_names: list
    slot_types: list
    executable: str = ""
    app_args: list = field(default_factory=list)
    body: list = field(default_factory=list)

    @property
    def nslots(self):
        return len(self.slot_names)

    def signature(self):
        """Text that changes whenever the procedure's observable behaviour does."""
        ins = ",".join(f"{t!r} {n}" for n, t, _ in self.inputs)
        outs = ",".join(f"{t!r} {n}" for n, t, _ in self.outputs)
        args = " ".join(f"{a.kind}:{_expr_text(a.value)}" for a in self.app_args)
        return f"({outs}) {self.name} ({ins}) {self.kind} {self.executable} {args}"


@dataclass
class AbstractPlan:
    procs: dict
    main: PlanProc
    types: dict
    source: str = ""

    @property
    def digest(self):
        return hashlib.sha256(self.source.encode()).hexdigest()[:16]

    def mapped_slots(self):
        return [s for s in self.main.body if isinstance(s, PDecl) and s.mapping is not None]

    def statement_count(self):
        total = count_plan_stmts(self.main.body)
        for p in self.procs.values():
            total += count_plan_stmts(p.body)
        return total


def count_plan_stmts(stmts):
    total = 0
    for s in stmts:
        total += 1
        if isinstance(s, PForeach):
            total += count_plan_stmts(s.body)
        elif isinstance(s, PIf):
            total += count_plan_stmts(s.then) + count_plan_stmts(s.orelse)
    return total


def top_level_calls(plan):
    out = []
    for s in plan.main.body:
        if isinstance(s, PAssign) and isinstance(s.value, PCallE):
            out.append(s.value)
        elif isinstance(s, PDecl) and isinstance(s.init, PCallE):
            out.append(s.init)
        elif isinstance(s, PCallS):
            out.append(s.call)
    return out


def _expr_text(e):
    if isinstance(e, PLit):
        return repr(e.value)
    if isinstance(e, PVar):
        return f"${e.slot}"
    if isinstance(e, PMember):
        return f"{_expr_text(e.obj)}.{e.name}"
    if isinstance(e, PIndex):
        return f"{_expr_text(e.obj)}[{_expr_text(e.index)}]"
    return type(e).__name__


class _Frame:
    def __init__(self):
        self.names = []
        self.types = []
        self.counter = 0

    def new_slot(self, name, ty):
        self.names.append(name)
        self.types.append(ty)
        return len(self.names) - 1

    def label(self):
        self.counter += 1
        return f"s{self.counter}"


class Lowerer:
    def __init__(self, typed):
        self.tp = typed

    def lower(self):
        procs = {}
        for name, sig in self.tp.procs.items():
            procs[name] = self.lower_proc(sig)
        frame = _Frame()
        body = self.block(self.tp.program.stmts, frame, {})
        main = PlanProc("main", "main", [], [], frame.names, frame.types, body=body)
        source = printer.program(self.tp.program)
        return AbstractPlan(procs, main, dict(self.tp.types), source)

    def lower_proc(self, sig):
        frame = _Frame()
        env = {}
        outs, ins = [], []
        for name, t in sig.outputs:
            env[name] = frame.new_slot(name, t)
            outs.append((name, t, env[name]))
        for name, t in sig.inputs:
            env[name] = frame.new_slot(name, t)
            ins.append((name, t, env[name]))
        pd = sig.decl
        if pd.is_atomic:
            args = []
            for a in pd.body.args:
                if isinstance(a, A.StrArg):
                    args.append(PArg("str", a.value))
                elif isinstance(a, A.FilenameArg):
                    args.append(PArg("filename", self.expr(a.path, env)))
                else:
                    args.append(PArg("ref", self.expr(a.path, env)))
            return PlanProc(sig.name, "atomic", ins, outs, frame.names, frame.types,
                            executable=pd.body.executable, app_args=args)
        body = self.block(pd.body, frame, env)
        return PlanProc(sig.name, "compound", ins, outs, frame.names, frame.types, body=body)

    def block(self, stmts, frame, env):
        env = dict(env)
        local = set()
        out = []
        for s in stmts:
            out.append(self.stmt(s, frame, env, local))
        return out

    def stmt(self, s, frame, env, local):
        label = frame.label()
        if isinstance(s, A.VarDecl):
            slot = frame.new_slot(s.name, s.ty)
            env[s.name] = slot
            local.add(slot)
            mapping = None
            if s.mapping is not None:
                params = []
                for key, val in s.mapping.params:
                    if isinstance(val, A.Name):
                        params.append((key, PVar(env[val.id], val.ty)))
                    else:
                        params.append((key, PLit(val.value, T.BUILTIN_TYPES[val.kind])))
                mapping = PMapping(s.mapping.mapper, params, s.mapping.line)
            init = self.expr(s.init, env) if s.init is not None else None
            d = PDecl(slot, s.name, s.ty, mapping, s.mode or "local", init, label, line=s.line)
            if d.is_alias:
                d.writes = _whole_writes(slot, s.ty)
            return d
        if isinstance(s, A.Assign):
            target = self.expr(s.target, env)
            value = self.expr(s.value, env)
            writes = []
            w = _array_write(target)
            if w is not None:
                writes.append(w)
            elif isinstance(target, PVar) and not isinstance(value, PCallE):
                writes = _whole_writes(target.slot, target.ty)
            return PAssign(target, value, label, writes, s.line)
        if isinstance(s, A.CallStmt):
            return PCallS(self.expr(s.call, env), label, [], s.line)
        if isinstance(s, A.Foreach):
            source = self.expr(s.source, env)
            inner = dict(env)
            elem = frame.new_slot(s.elem, s.elem_ty)
            inner[s.elem] = elem
            idx = None
            if s.index:
                idx = frame.new_slot(s.index, T.INT)
                inner[s.index] = idx
            body = self.block(s.body, frame, inner)
            body_local = {elem, idx} | _declared(body)
            writes = _outer_writes(body, body_local)
            return PForeach(elem, idx, source, body, label, writes, s.line)
        if isinstance(s, A.If):
            cond = self.expr(s.cond, env)
            then = self.block(s.then, frame, env)
            orelse = self.block(s.orelse, frame, env)
            scoped = _declared(then) | _declared(orelse)
            writes = _outer_writes(then + orelse, scoped)
            return PIf(cond, then, orelse, label, writes, s.line)
        raise TypeError(f"unknown statement {s!r}")

    def expr(self, e, env):
        if isinstance(e, A.Literal):
            return PLit(e.value, e.ty)
        if isinstance(e, A.Name):
            return PVar(env[e.id], e.ty)
        if isinstance(e, A.Member):
            return PMember(self.expr(e.obj, env), e.name, e.ty)
        if isinstance(e, A.Index):
            return PIndex(self.expr(e.obj, env), self.expr(e.index, env), e.ty)
        if isinstance(e, A.Call):
            return PCallE(e.name, [self.expr(a, env) for a in e.args], e.ty)
        if isinstance(e, A.BinOp):
            return PBin(e.op, self.expr(e.left, env), self.expr(e.right, env), e.ty)
        if isinstance(e, A.UnaryOp):
            return PUn(e.op, self.expr(e.operand, env), e.ty)
        if isinstance(e, A.Filename):
            return PFilename(self.expr(e.arg, env))
        raise TypeError(f"unknown expression {e!r}")


def _root_path(e):
    """(slot, member names) for the part of an lvalue before its first index."""
    chain = []
    while isinstance(e, (PMember, PIndex)):
        chain.append(e)
        e = e.obj
    if not isinstance(e, PVar):
        return None, None
    chain.reverse()
    return e.slot, chain


def _array_write(target):
    slot, chain = _root_path(target)
    if slot is None:
        return None
    members = []
    for c in chain:
        if isinstance(c, PIndex):
            return (slot, tuple(members))
        members.append(c.name)
    return None


def _whole_writes(slot, ty):
    return [(slot, p) for p in T.array_member_paths(ty)] if ty is not None else []


def _declared(stmts):
    out = set()
    for s in stmts:
        if isinstance(s, PDecl):
            out.add(s.slot)
        elif isinstance(s, PForeach):
            out |= {s.elem_slot, s.index_slot} | _declared(s.body)
        elif isinstance(s, PIf):
            out |= _declared(s.then) | _declared(s.orelse)
    return out


def _outer_writes(stmts, scoped):
    out = []
    for s in stmts:
        for w in s.writes:
            if w[0] not in scoped and w not in out:
                out.append(w)
    return out


def lower(typed):
    """Lower a TypedProgram (from :func:`typecheck`) into an AbstractPlan."""
    return Lowerer(typed).lower()

"""Render a Program back to .sws source (canonical layout)."""

from . import ast as A
from .lexer import KEYWORDS

_PREC = {"||": 1, "&&": 2, "==": 3, "!=": 3, "<": 3, ">": 3, "<=": 3, ">=": 3,
         "+": 4, "-": 4, "*": 5, "/": 5, "%": 5}


def _str(s):
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t") + '"'


def _lit(e):
    if e.kind == "string":
        return _str(e.value)
    if e.kind == "boolean":
        return "true" if e.value else "false"
    return repr(e.value)


def expr(e, prec=0):
    if isinstance(e, A.Literal):
        text = _lit(e)
        return f"({text})" if text.startswith("-") and prec > 0 else text
    if isinstance(e, A.Name):
        return e.id
    if isinstance(e, A.Member):
        return f"{expr(e.obj, 9)}.{e.name}"
    if isinstance(e, A.Index):
        return f"{expr(e.obj, 9)}[{expr(e.index)}]"
    if isinstance(e, A.Call):
        return f"{e.name}({', '.join(expr(a) for a in e.args)})"
    if isinstance(e, A.Filename):
        return f"@filename({expr(e.arg)})"
    if isinstance(e, A.UnaryOp):
        return f"{e.op}{expr(e.operand, 8)}"
    if isinstance(e, A.BinOp):
        p = _PREC[e.op]
        # comparisons do not chain, so both sides bind tighter
        rp = p + 1
        lp = p + 1 if p == 3 else p
        text = f"{expr(e.left, lp)} {e.op} {expr(e.right, rp)}"
        return f"({text})" if p < prec else text
    raise TypeError(f"not an expression: {e!r}")


def typeref(t):
    return t.name + ("[]" if t.is_array else "")


def _param(p):
    return f"{p.type.name} {p.name}" + ("[]" if p.type.is_array else "")


def _mapping(m):
    if not m.params:
        return f"<{m.mapper}>"
    ps = ", ".join(f"{k}={expr(v)}" for k, v in m.params)
    return f"<{m.mapper}; {ps}>"


def _app_arg(a):
    if isinstance(a, A.StrArg):
        return _str(a.value)
    if isinstance(a, A.FilenameArg):
        return f"@filename({expr(a.path)})"
    return expr(a.path)


def stmt(s, indent=0):
    pad = "    " * indent
    if isinstance(s, A.VarDecl):
        text = f"{pad}{s.type.name} {s.name}" + ("[]" if s.type.is_array else "")
        if s.mapping:
            text += _mapping(s.mapping)
        if s.init is not None:
            text += f" = {expr(s.init)}"
        return [text + ";"]
    if isinstance(s, A.Assign):
        return [f"{pad}{expr(s.target)} = {expr(s.value)};"]
    if isinstance(s, A.CallStmt):
        return [f"{pad}{expr(s.call)};"]
    if isinstance(s, A.Foreach):
        head = "foreach "
        if s.elem_type:
            head += typeref(s.elem_type) + " "
        head += s.elem
        if s.index:
            head += f", {s.index}"
        lines = [f"{pad}{head} in {expr(s.source)} {{"]
        for b in s.body:
            lines.extend(stmt(b, indent + 1))
        return lines + [pad + "}"]
    if isinstance(s, A.If):
        lines = [f"{pad}if ({expr(s.cond)}) {{"]
        for b in s.then:
            lines.extend(stmt(b, indent + 1))
        if s.orelse:
            lines.append(pad + "} else {")
            for b in s.orelse:
                lines.extend(stmt(b, indent + 1))
        return lines + [pad + "}"]
    raise TypeError(f"not a statement: {s!r}")


def program(prog):
    out = []
    for imp in prog.imports:
        out.append(f"import {_str(imp)};")
    for t in prog.types:
        if t.kind == "opaque-file":
            out.append(f"type {t.name} {{}}")
        else:
            fs = " ".join(f"{f.type.name} {f.name}" + ("[]" if f.type.is_array else "") + ";"
                          for f in t.fields)
            out.append(f"type {t.name} {{ {fs} }}")
    for p in prog.procs:
        outs = ", ".join(_param(x) for x in p.outputs)
        ins = ", ".join(_param(x) for x in p.inputs)
        out.append(f"({outs}) {p.name} ({ins}) {{")
        if p.is_atomic:
            exe = p.body.executable
            if not exe.isidentifier() or exe in KEYWORDS:
                exe = _str(exe)
            args = " ".join([exe] + [_app_arg(a) for a in p.body.args])
            out.append(f"    app {{ {args}; }}")
        else:
            for s in p.body:
                out.extend(stmt(s, 1))
        out.append("}")
    for s in prog.stmts:
        out.extend(stmt(s))
    return "\n".join(out) + "\n"

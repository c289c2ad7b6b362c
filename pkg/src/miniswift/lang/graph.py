"""The static structure of a script as a graph: procedures, mapped
datasets and the calls between them.

It is drawn from the parsed program, so a script whose library procedures
are not available still produces a graph; callees that are declared nowhere
are shown as undefined.
"""

import dataclasses

from . import ast as A


def _calls(obj, out):
    """Every Call reachable from a statement list or expression."""
    if isinstance(obj, A.Call):
        out.append(obj)
    if isinstance(obj, list):
        for x in obj:
            _calls(x, out)
    elif dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        for f in dataclasses.fields(obj):
            if f.name not in ("ty", "elem_ty", "mode"):
                _calls(getattr(obj, f.name), out)
    return out


def call_edges(program, libraries=()):
    """(caller, callee) pairs; the script body is the caller ``main``."""
    edges = []
    bodies = [(p.name, p.body) for lib in libraries for p in lib.procs]
    bodies += [(p.name, p.body) for p in program.procs]
    bodies.append(("main", program.stmts))
    for name, body in bodies:
        if isinstance(body, A.AppLine):
            continue
        for c in _calls(body, []):
            if (name, c.name) not in edges:
                edges.append((name, c.name))
    return edges


def _q(s):
    return '"' + str(s).replace('"', '\\"') + '"'


def _root(e):
    while isinstance(e, (A.Member, A.Index)):
        e = e.obj
    return e.id if isinstance(e, A.Name) else None


def to_dot(program, libraries=(), name="plan"):
    """DOT text. Procedures declared by the script are ``kind=procedure``;
    those from libraries are drawn dashed as ``kind=library``."""
    lines = [f"digraph {_q(name)} {{", "  rankdir=LR;"]
    known = set()
    for kind, procs in (("library", [p for lib in libraries for p in lib.procs]),
                        ("procedure", program.procs)):
        for p in procs:
            known.add(p.name)
            shape = "box" if p.is_atomic else "ellipse"
            label = f"{p.name}\\n[{p.body.executable}]" if p.is_atomic else p.name
            style = ", style=dashed" if kind == "library" else ""
            lines.append(f"  {_q('proc:' + p.name)} [kind={kind}, shape={shape}{style}, label={_q(label)}];")
    edges = call_edges(program, libraries)
    for callee in dict.fromkeys(c for _, c in edges):
        if callee not in known:
            lines.append(f"  {_q('proc:' + callee)} [kind=undefined, shape=ellipse, style=dotted];")
    for s in program.stmts:
        if isinstance(s, A.VarDecl) and s.mapping is not None:
            label = f"{s.name}\\n<{s.mapping.mapper}>"
            lines.append(f"  {_q('data:' + s.name)} [kind=dataset, shape=note, label={_q(label)}];")
    for caller, callee in edges:
        if caller != "main":
            lines.append(f"  {_q('proc:' + caller)} -> {_q('proc:' + callee)} [label=calls];")
    mapped = {s.name for s in program.stmts if isinstance(s, A.VarDecl) and s.mapping is not None}
    for s in program.stmts:
        if isinstance(s, A.Assign) and isinstance(s.value, A.Call):
            call, target = s.value, _root(s.target)
        elif isinstance(s, A.VarDecl) and isinstance(s.init, A.Call):
            call, target = s.init, s.name
        else:
            continue
        for a in call.args:
            src = _root(a)
            if src in mapped:
                lines.append(f"  {_q('data:' + src)} -> {_q('proc:' + call.name)};")
        if target in mapped:
            lines.append(f"  {_q('proc:' + call.name)} -> {_q('data:' + target)};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_text(program, libraries=()):
    lines = []
    for p in [p for lib in libraries for p in lib.procs] + list(program.procs):
        kind = "atomic" if p.is_atomic else "compound"
        ins = ", ".join(f"{q.type.name}{'[]' if q.type.is_array else ''} {q.name}" for q in p.inputs)
        outs = ", ".join(f"{q.type.name}{'[]' if q.type.is_array else ''} {q.name}" for q in p.outputs)
        lines.append(f"{kind:9s} ({outs}) {p.name} ({ins})")
    lines.append("")
    for caller, callee in call_edges(program, libraries):
        lines.append(f"{caller} -> {callee}")
    return "\n".join(lines) + "\n"


__all__ = ["to_dot", "to_text", "call_edges"]

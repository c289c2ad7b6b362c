"""Deterministic stand-in for application binaries.

Every output file gets content derived only from the executable name, the
non-file arguments and the bytes of the input files, so the same workflow
produces identical datasets under any provider, worker count or order.
``mOverlaps`` is special-cased to emit an overlap table that the CSV mapper
can read back. ``noop`` does nothing.

Run as ``python -m miniswift.stub <exe> [args...]`` with the sandbox-relative
input and output names in MINISWIFT_INPUTS / MINISWIFT_OUTPUTS
(``os.pathsep`` separated).
"""

import hashlib
import os
import sys

NOOP = "noop"


def _overlap_table(src):
    rows = []
    with open(src, encoding="utf-8") as f:
        for line in f:
            parts = line.split()
            if len(parts) >= 4:
                c1, c2 = int(parts[0]), int(parts[1])
                rows.append(f"{c1}  {c2}  {parts[2]}  {parts[3]}  diff.{c1:06d}.{c2:06d}.fits\n")
    return "|cntr1|cntr2|plus|minus|diff|\n|int|int|char|char|char|\n" + "".join(rows)


def run_stub(exe, args, inputs, outputs, cwd=None, paths=None):
    """Produce ``outputs`` from ``inputs``; returns an exit code.

    ``inputs`` and ``outputs`` are the names the job sees. They are read and
    written under ``cwd``, or at ``paths[name]`` when a mapping is given.
    """
    exe = os.path.basename(exe)
    if exe == NOOP:
        return 0

    def p(x):
        if paths is not None and x in paths:
            return paths[x]
        return x if cwd is None or os.path.isabs(x) else os.path.join(cwd, x)

    files = set(inputs) | set(outputs)
    h = hashlib.sha256()
    h.update(exe.encode())
    for a in args:
        if a not in files:
            h.update(b"\0" + str(a).encode())
    for name in inputs:
        try:
            with open(p(name), "rb") as f:
                h.update(b"\1" + f.read())
        except OSError:
            sys.stderr.write(f"stub: missing input {name}\n")
            return 2
    digest = h.hexdigest()
    for k, name in enumerate(outputs):
        dest = p(name)
        d = os.path.dirname(dest)
        if d:
            os.makedirs(d, exist_ok=True)
        if exe == "mOverlaps" and inputs and k == 0:
            text = _overlap_table(p(inputs[0]))
        else:
            text = f"{exe} output {k} {digest}\n"
        with open(dest, "w", encoding="utf-8") as f:
            f.write(text)
    return 0


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    if not argv:
        sys.stderr.write("usage: python -m miniswift.stub <exe> [args...]\n")
        return 64
    split = lambda v: [x for x in v.split(os.pathsep) if x]
    ins = split(os.environ.get("MINISWIFT_INPUTS", ""))
    outs = split(os.environ.get("MINISWIFT_OUTPUTS", ""))
    return run_stub(argv[0], argv[1:], ins, outs)


if __name__ == "__main__":
    sys.exit(main())

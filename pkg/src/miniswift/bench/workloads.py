"""Synthetic workload generators.

Each generator writes a script and the input files it maps into a directory
and returns a :class:`Workload` whose ``expected_tasks`` is the closed-form
task count. The scripts use the same language features as the fixtures, so
the engine expands them at runtime exactly as it would a hand-written one.
"""

import os
from dataclasses import dataclass, field
from importlib import resources

from ..lang import compile_file

KINDS = ("fmri-like", "moldyn-like", "montage-like", "flat")

# tasks per molecule in the moldyn-like pipeline, stage by stage
MOLDYN_STAGES = (1, 1, 68, 1, 11, 1, 1)


@dataclass
class WorkloadSpec:
    kind: str
    size: int
    duration: tuple = ("constant", 0.0)  # ("constant", t) or ("uniform", a, b)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown workload kind {self.kind!r}; expected one of {KINDS}")
        if self.size < 0:
            raise ValueError("workload size must be >= 0")
        if self.kind == "fmri-like" and self.size < 2:
            raise ValueError("fmri-like needs at least 2 volumes (the reference volume is v[1])")

    def durations(self):
        return {"default": list(self.duration)}


@dataclass
class Workload:
    spec: WorkloadSpec
    script: str
    base_dir: str
    expected_tasks: int
    extra: dict = field(default_factory=dict)

    def plan(self):
        return compile_file(self.script)


def expected_tasks(kind, size):
    if kind == "fmri-like":
        return 4 * size
    if kind == "moldyn-like":
        return 1 + sum(MOLDYN_STAGES) * size
    if kind == "montage-like":
        return 1 + size
    return size


def _fixture(name):
    return resources.files("miniswift").joinpath("fixtures", name).read_text(encoding="utf-8")


def _write(path, text):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)


def add_fmri_volume(base_dir, index, prefix="bold1"):
    """Write one input volume (header and image) into an fmri-like workload."""
    loc = os.path.join(base_dir, "fmriddc", "functional_data")
    stem = f"{prefix}_{index:03d}"
    _write(os.path.join(loc, stem + ".hdr"), f"header {prefix} {index}\n")
    _write(os.path.join(loc, stem + ".img"), f"image {prefix} {index}\n" * 4)
    return stem


def _gen_fmri(spec, dest):
    _write(os.path.join(dest, "fmri_lib.sws"), _fixture("fmri_lib.sws"))
    _write(os.path.join(dest, "fmri.sws"), _fixture("fmri2.sws"))
    for i in range(1, spec.size + 1):
        add_fmri_volume(dest, i)
    return os.path.join(dest, "fmri.sws")


MOLDYN_SCRIPT = """\
// moldyn-like: one database preparation, then a fixed 84-task pipeline per
// molecule (stages of 1, 1, 68, 1, 11, 1 and 1 tasks)
type File {}

(File o) prep (int n)
{
    app { prep n @filename(o); }
}

(File o) step (File i, int k)
{
    app { step @filename(i) @filename(o) k; }
}

(File o) merge (File parts[])
{
    app { merge parts @filename(o); }
}

(File outs[]) fan (File i, int ks[])
{
    foreach k, j in ks {
        outs[j] = step(i, k);
    }
}

(File o) molecule (File db, int m)
{
    int wide[]<seq_mapper; n=68>;
    int narrow[]<seq_mapper; n=11>;
    File a = step(db, m);
    File b = step(a, m);
    File f[] = fan(b, wide);
    File g = merge(f);
    File h[] = fan(g, narrow);
    File i = merge(h);
    o = step(i, m);
}

int molecules[]<seq_mapper; n=@N@>;
File db = prep(@N@);
File results[];
foreach m, k in molecules {
    results[k] = molecule(db, m);
}
"""

FLAT_SCRIPT = """\
// flat: independent no-op tasks
() noop (int x)
{
    app { noop x; }
}

int xs[]<seq_mapper; n=@N@>;
foreach x in xs {
    noop(x);
}
"""


def _gen_moldyn(spec, dest):
    path = os.path.join(dest, "moldyn.sws")
    _write(path, MOLDYN_SCRIPT.replace("@N@", str(spec.size)))
    return path


def _gen_flat(spec, dest):
    path = os.path.join(dest, "flat.sws")
    _write(path, FLAT_SCRIPT.replace("@N@", str(spec.size)))
    return path


def _gen_montage(spec, dest):
    """``size`` overlap rows between a ring of images; mOverlaps turns the
    image table into the diff table the CSV mapper expands."""
    mdir = os.path.join(dest, "montage")
    n_img = max(2, spec.size)
    names = [f"p_{i:06d}.fits" for i in range(n_img)]
    for nm in names:
        _write(os.path.join(mdir, nm), f"pixels {nm}\n")
    rows = []
    for k in range(spec.size):
        a, b = k % n_img, (k + 1) % n_img
        rows.append(f"{a} {b} {names[a]} {names[b]}\n")
    _write(os.path.join(mdir, "images.tbl"), "".join(rows))
    path = os.path.join(dest, "montage_run.sws")
    _write(path, _fixture("montage_run.sws"))
    return path


_GENERATORS = {"fmri-like": _gen_fmri, "moldyn-like": _gen_moldyn,
               "montage-like": _gen_montage, "flat": _gen_flat}


def gen_workload(spec, dest):
    """Write the workload for ``spec`` under ``dest`` and describe it."""
    dest = os.path.abspath(dest)
    os.makedirs(dest, exist_ok=True)
    script = _GENERATORS[spec.kind](spec, dest)
    return Workload(spec, script, dest, expected_tasks(spec.kind, spec.size))


__all__ = ["WorkloadSpec", "Workload", "gen_workload", "expected_tasks", "add_fmri_volume",
           "MOLDYN_STAGES", "KINDS"]

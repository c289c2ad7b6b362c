import os

import pytest

from miniswift.bench.workloads import WorkloadSpec, add_fmri_volume, gen_workload
from miniswift.config import RunConfig, SiteSpec
from miniswift.engine.engine import Engine, evaluate, restart
from miniswift.engine.restartlog import load_produced
from miniswift.errors import EngineBug
from miniswift.lang import compile_file, compile_source
from miniswift.provenance import load_records

from conftest import compile_fixture, run_source, sim_config

HEADER = """\
type F {}
(F o) mk (int a, int b) { app { mk a b @filename(o); } }
(F o) cp (F i) { app { cp @filename(i) @filename(o); } }
(F o) merge (F parts[]) { app { merge parts @filename(o); } }
"""


def test_fmri_two_volumes(fmri_dir, tmp_path):
    plan = compile_fixture(str(fmri_dir / "fmri2.sws"))
    res = evaluate(plan, sim_config(tmp_path, base_dir=str(fmri_dir)))
    assert res.ok
    assert (res.tasks_total, res.tasks_done) == (8, 8)
    outs = sorted(os.listdir(fmri_dir / "fmriddc" / "functional_data"))
    assert "sbold1_0000.hdr" in outs and "sbold1_0001.img" in outs


def test_empty_plan(tmp_path):
    res = evaluate(compile_source(""), sim_config(tmp_path))
    assert res.ok and res.tasks_total == 0


def test_fmri_like_120_has_480_tasks(tmp_path):
    wl = gen_workload(WorkloadSpec("fmri-like", 120), tmp_path / "wl")
    res = evaluate(wl.plan(), sim_config(tmp_path, base_dir=wl.base_dir,
                                         restart_log=False, provenance=False))
    assert res.ok and res.tasks_done == 480


def test_montage_expands_per_row(montage_dir, tmp_path):
    plan = compile_fixture(str(montage_dir / "montage_run.sws"))
    eng = Engine(plan, sim_config(tmp_path, base_dir=str(montage_dir)))
    res = eng.evaluate()
    assert res.ok
    procs = [t.proc.name for t in eng.tasks]
    assert procs.count("mOverlaps") == 1
    assert procs.count("mDiffFit") == 11


def test_empty_foreach_closes_output_array(tmp_path):
    src = HEADER + """\
(F outs[]) fan (int xs[]) { foreach x, i in xs { outs[i] = mk(x, 0); } }
int xs[]<seq_mapper; n=0>;
F parts[] = fan(xs);
F total = merge(parts);
"""
    eng, res = run_source(src, tmp_path)
    assert res.ok
    assert [t.proc.name for t in eng.tasks] == ["merge"]


def test_nested_foreach(tmp_path):
    src = HEADER + """\
int rows[]<seq_mapper; n=3>;
int cols[]<seq_mapper; n=4>;
foreach r in rows { foreach c in cols { F o = mk(r, c); } }
"""
    eng, res = run_source(src, tmp_path)
    assert res.ok and res.tasks_done == 12
    pairs = sorted(tuple(int(n.value) for n in t.inputs) for t in eng.tasks)
    assert pairs == [(r, c) for r in range(3) for c in range(4)]


def test_conditional(tmp_path):
    src = HEADER + """\
int xs[]<seq_mapper; n=6>;
foreach x in xs {
  if (x % 2 == 0 && x != 4) { F a = mk(x, 1); } else { F b = mk(x, 2); F c = mk(x, 3); }
}
"""
    eng, res = run_source(src, tmp_path)
    assert res.ok and res.tasks_done == 2 + 2 * 4


def test_pipelining_overlaps_stages(tmp_path):
    src = HEADER + """\
int xs[]<seq_mapper; n=2>;
foreach x, i in xs { F a = mk(x, 0); F b = cp(a); }
"""
    plan = compile_source(src)
    eng = Engine(plan, sim_config(tmp_path))
    # make element 1's first stage long so element 0's second stage runs under it
    eng.durations.sample = lambda label, exe=None: 50.0 if exe == "mk" and "[1]" in label else 1.0
    res = eng.evaluate()
    assert res.ok
    mk = sorted((t for t in eng.tasks if t.proc.name == "mk"), key=lambda t: t.end_t)
    cp0 = [t for t in eng.tasks if t.proc.name == "cp" and t.inputs[0] is mk[0].outputs[0]][0]
    assert cp0.start_t < mk[1].end_t


def test_barrier_mode_does_not_overlap(tmp_path):
    wl = gen_workload(WorkloadSpec("fmri-like", 4, ("uniform", 3, 9)), tmp_path / "wl")
    cfg = sim_config(tmp_path, base_dir=wl.base_dir, durations=wl.spec.durations(), pipelining=False)
    eng = Engine(wl.plan(), cfg)
    assert eng.evaluate().ok
    procs = []
    for t in eng.tasks:
        if t.proc.name not in procs:
            procs.append(t.proc.name)
    for a, b in zip(procs, procs[1:]):
        last_a = max(t.end_t for t in eng.tasks if t.proc.name == a)
        first_b = min(t.start_t for t in eng.tasks if t.proc.name == b)
        assert first_b >= last_a


def test_whole_array_consumer_waits(tmp_path):
    src = HEADER + """\
(F outs[]) fan (int xs[]) { foreach x, i in xs { outs[i] = mk(x, 0); } }
int xs[]<seq_mapper; n=3>;
F parts[] = fan(xs);
F total = merge(parts);
"""
    plan = compile_source(src)
    eng = Engine(plan, sim_config(tmp_path))
    eng.durations.sample = lambda label, exe=None: 30.0 if "[2]" in label else 1.0
    res = eng.evaluate()
    assert res.ok
    merge = [t for t in eng.tasks if t.proc.name == "merge"][0]
    assert merge.start_t >= max(t.end_t for t in eng.tasks if t.proc.name == "mk")


def test_upstream_failure_not_submitted(tmp_path):
    src = HEADER + "F a = mk(1, 2);\nF b = cp(a);\nF c = mk(3, 4);\n"
    plan = compile_source(src)
    eng = Engine(plan, sim_config(tmp_path, max_retries=1))
    eng.sites[0].provider.fault = lambda job, host: (3, "bad") if job.args[:2] == ["1", "2"] else None
    res = eng.evaluate()
    assert res.status == "failed"
    cp = [t for t in eng.tasks if t.proc.name == "cp"][0]
    assert cp.state == "failed" and "upstream" in cp.reason and cp.attempt == 0
    assert cp.submit_t is None
    ok = [t for t in eng.tasks if t.proc.name == "mk" and t.state == "done"]
    assert len(ok) == 1  # the independent sibling still ran


def test_missing_output_is_failure(tmp_path):
    src = "type F {}\n(F o) noop (int a) { app { noop a @filename(o); } }\nF x = noop(1);\n"
    eng, res = run_source(src, tmp_path, max_retries=0)
    assert res.status == "failed"
    assert "missing output" in eng.tasks[0].reason


def test_second_completion_is_engine_bug(tmp_path):
    src = HEADER + "F a = mk(1, 2);\n"
    eng, res = run_source(src, tmp_path)
    t = eng.tasks[0]
    from miniswift.providers.base import JobStatus

    with pytest.raises(EngineBug):
        eng.attempt_finished(t, eng.build_job(t, eng.sites[0]), JobStatus("completed", 0), eng.sites[0])


def test_retry_records_attempts(tmp_path):
    src = HEADER + "F a = mk(1, 2);\n"
    plan = compile_source(src)
    eng = Engine(plan, sim_config(tmp_path))
    calls = []

    def fault(job, host):
        calls.append(job.attempt)
        return (1, "transient glitch") if len(calls) == 1 else None

    eng.sites[0].provider.fault = fault
    res = eng.evaluate()
    assert res.ok and res.attempts == 2
    recs = [r for r in load_records(str(tmp_path / "run")) if r["task_id"] == eng.tasks[0].id]
    assert [r["attempt"] for r in recs] == [0, 1]


def test_double_assignment_rejected_at_compile_time():
    from miniswift.errors import TypeCheckError

    with pytest.raises(TypeCheckError):
        compile_source(HEADER + "F a = mk(1, 2);\na = mk(3, 4);\n")


# restart

def _fmri(tmp_path, volumes):
    return gen_workload(WorkloadSpec("fmri-like", volumes), tmp_path / "wl")


def _cfg(tmp_path, wl, **kw):
    return RunConfig(run_dir=str(tmp_path / "run"), base_dir=wl.base_dir, pipelining=False,
                     sites=[SiteSpec("sim", "simbatch", {"nodes": 8})], **kw)


def test_restart_after_interrupt(tmp_path):
    wl = _fmri(tmp_path, 6)
    first = evaluate(wl.plan(), _cfg(tmp_path, wl, interrupt_after=12))
    assert first.status == "interrupted" and first.tasks_executed == 12
    logged = set(load_produced(str(tmp_path / "run")))
    second = restart(wl.plan(), _cfg(tmp_path, wl))
    assert second.ok
    assert (second.tasks_executed, second.tasks_restored) == (12, 12)
    assert not (logged & set(second.produced))  # no logged producer ran again


def test_restart_of_completed_run(tmp_path):
    wl = _fmri(tmp_path, 3)
    assert evaluate(wl.plan(), _cfg(tmp_path, wl)).ok
    again = restart(wl.plan(), _cfg(tmp_path, wl))
    assert again.ok and again.tasks_executed == 0 and again.tasks_restored == 12


def test_restart_with_new_volume(tmp_path):
    wl = _fmri(tmp_path, 3)
    assert evaluate(wl.plan(), _cfg(tmp_path, wl)).ok
    add_fmri_volume(wl.base_dir, 4)
    again = restart(wl.plan(), _cfg(tmp_path, wl))
    assert again.ok and again.tasks_executed == 4


# wall clock

def test_local_provider_run(montage_dir, tmp_path):
    plan = compile_fixture(str(montage_dir / "montage_run.sws"))
    cfg = RunConfig(run_dir=str(tmp_path / "run"), base_dir=str(montage_dir), clock="wall",
                    sites=[SiteSpec("local", "local", {"max_parallel": 4})])
    res = evaluate(plan, cfg)
    assert res.ok and res.tasks_done == 12
    assert os.path.isfile(montage_dir / "montage" / "diffs.tbl")

"""The acceptance criteria, each at its stated tolerance and time budget.

Every test records one PASS/FAIL line; the lines are printed together at the
end of the pytest session (and immediately when run with ``-s``).
"""

import contextlib
import random
import sys
import time

import pytest

from miniswift.bench import benches as B
from miniswift.bench import perfmodel as PM
from miniswift.bench.workloads import WorkloadSpec, add_fmri_volume, expected_tasks, gen_workload
from miniswift.config import RunConfig, SiteSpec
from miniswift.engine.engine import evaluate, restart
from miniswift.engine.restartlog import load_produced
from miniswift.falkon.client import FalkonClient
from miniswift.falkon.core import ProvisionerPolicy, provision
from miniswift.falkon.harness import LocalFalkon
from miniswift.lang import ast as A
from miniswift.lang import lower, parse_source, typecheck
from miniswift.lang.plan import top_level_calls
from miniswift.providers.simbatch import SimBatchModel, simulate_batch

from conftest import ACCEPTANCE, read_fixture


class _Result:
    detail = ""


@contextlib.contextmanager
def criterion(number, title, budget):
    res = _Result()
    t0 = time.monotonic()
    ok = False
    try:
        yield res
        ok = True
    finally:
        dt = time.monotonic() - t0
        in_time = dt < budget
        verdict = "PASS" if ok and in_time else "FAIL"
        why = "" if in_time else f" over the {budget:g} s budget"
        line = f"criterion {number:2d} {verdict}  {title}  ({dt:.2f} s{why}) {res.detail}".rstrip()
        ACCEPTANCE.append((number, line))
        print(line)
    assert in_time, f"criterion {number} took {dt:.2f} s, budget {budget} s"


def test_c01_frontend_golden():
    with criterion(1, "parser/typechecker golden counts", 1.0) as c:
        fmri = parse_source(read_fixture("fmri.sws"))
        assert (len(fmri.types), len(fmri.procs), len(fmri.stmts)) == (6, 3, 3)
        assert [p.name for p in fmri.procs] == ["reorient", "reorientRun", "fmri_wf"]
        tp = typecheck(fmri, [parse_source(read_fixture("fmri_lib.sws"))])
        assert tp.errors == []
        plan = lower(tp)
        assert [s.name for s in plan.mapped_slots()] == ["bold1", "sbold1"]
        assert len(top_level_calls(plan)) == 1
        assert plan.statement_count() == A.program_stmt_count(tp.program)

        montage = parse_source(read_fixture("montage.sws"))
        decl = [s for s in montage.stmts if isinstance(s, A.VarDecl) and s.name == "diffs"][0]
        assert decl.mapping.mapper == "csv_mapper"
        assert [k for k, _ in decl.mapping.params] == ["file", "skip", "header", "hdelim"]
        tp3 = typecheck(montage)
        assert tp3.errors == []
        plan3 = lower(tp3)
        assert plan3.statement_count() == A.program_stmt_count(tp3.program) == 7
        assert len(plan3.mapped_slots()) == 2 and len(top_level_calls(plan3)) == 1
        c.detail = "fmri.sws 6/3/3, 2 mapped slots, 1 call; montage.sws csv_mapper 4 params"


def test_c02_efficiency_microbenchmark():
    with criterion(2, "serial-dispatch efficiency P=64 r=11 N=64", 1.0) as c:
        model = SimBatchModel(nodes=64, dispatch_rate=11.0)
        got = {}
        for t, want, tol in ((50.0, 0.90, 0.02), (100.0, 0.945, 0.02), (1000.0, 0.994, 0.01)):
            tr = simulate_batch([(0.0, t)] * 64, model)
            got[t] = tr.efficiency([t] * 64, 64)
            assert abs(got[t] - want) <= tol, (t, got[t])
        c.detail = " ".join(f"t={t:g}:{e:.4f}" for t, e in got.items())


def test_c03_threshold_family():
    with criterion(3, "90%-efficiency task lengths and model/simulation agreement", 1.0) as c:
        worst = 0.0
        for P, r, N, t in PM.sample_grid(50, 0):
            sim = simulate_batch([(0.0, t)] * N, SimBatchModel(nodes=P, dispatch_rate=r))
            mod = PM.efficiency_model(P, r, N, t)
            worst = max(worst, abs(sim.makespan - mod["makespan"]) / mod["makespan"])
        assert worst <= 0.02
        rows = PM.threshold_table()
        assert len(rows) == 6
        for row in rows:
            assert row["rel_diff"] <= 0.15, row
        c.detail = f"grid max rel err {worst:.1e}; threshold max rel diff {max(r['rel_diff'] for r in rows):.3f}"


def test_c04_pipelining(tmp_path):
    with criterion(4, "pipelining reduction and dominance", 10.0) as c:
        r = B.bench_pipeline(volumes=120, workers=8, duration=("uniform", 3.0, 9.0), seed=0,
                             run_dir=str(tmp_path))
        assert 0.15 <= r["reduction"] <= 0.30, r["reduction"]
        dom = B.pipeline_dominance(instances=200, seed=0, run_dir=str(tmp_path))
        assert dom["violations"] == []
        c.detail = f"reduction {r['reduction']:.3f}; 200 instances, 0 violations"


def test_c05_clustering(tmp_path):
    with criterion(5, "clustering speedup with identical outputs", 10.0) as c:
        r = B.bench_cluster(volumes=120, nodes=8, cap=60, seed=0, run_dir=str(tmp_path), falkon=False)
        assert r["speedup"] >= 2.0, r["speedup"]
        assert r["digests_equal"]
        c.detail = f"speedup {r['speedup']:.2f} ({r['jobs_clustered']} vs {r['jobs_unclustered']} jobs)"


def test_c06_falkon_vs_batch(tmp_path):
    with criterion(6, "dispatcher vs clustered batch, and raw throughput", 60.0) as c:
        r = B.bench_cluster(volumes=120, nodes=8, cap=60, seed=0, run_dir=str(tmp_path))
        assert 0.40 <= r["falkon_reduction"] <= 0.70, r["falkon_reduction"]
        assert r["falkon_digests_equal"]
        tp = B.bench_throughput(n=10_000, workers=4, engine_tasks=0, run_dir=str(tmp_path))
        assert tp["dispatcher_completed"] == 10_000
        assert tp["dispatcher_rate"] >= 10 * tp["simbatch_modeled_rate"]
        c.detail = (f"falkon reduction {r['falkon_reduction']:.3f}; "
                    f"{tp['dispatcher_rate']:.0f} tasks/s ({tp['ratio_to_modeled']:.0f}x modeled)")


@pytest.mark.slow
def test_c07_scalability(tmp_path):
    with criterion(7, "160,000-task plan within 4 KB per task", 120.0) as c:
        r = B.bench_scale(tasks=160_000, run_dir=str(tmp_path))
        assert r["status"] == "ok" and r["tasks_done"] == 160_000
        assert r["bytes_per_task"] <= 4096
        c.detail = f"{r['bytes_per_task']:.0f} bytes/task"


def _fmri_cfg(run_dir, wl, **kw):
    return RunConfig(run_dir=run_dir, base_dir=wl.base_dir, pipelining=False,
                     sites=[SiteSpec("batch", "simbatch", {"nodes": 8})], **kw)


def _digests(run_dir):
    return {k: v["digest"] for k, v in load_produced(run_dir).items()}


def test_c08_restart(tmp_path):
    with criterion(8, "restart after stage 2 and after a new input", 30.0) as c:
        ref = gen_workload(WorkloadSpec("fmri-like", 120), tmp_path / "ref")
        full = evaluate(ref.plan(), _fmri_cfg(str(tmp_path / "run-ref"), ref))
        assert full.ok and full.tasks_executed == 480

        wl = gen_workload(WorkloadSpec("fmri-like", 120), tmp_path / "wl")
        rd = str(tmp_path / "run")
        first = evaluate(wl.plan(), _fmri_cfg(rd, wl, interrupt_after=240))
        assert first.status == "interrupted" and first.tasks_executed == 240
        logged = set(load_produced(rd))
        second = restart(wl.plan(), _fmri_cfg(rd, wl))
        assert second.ok and second.tasks_executed == 240 and second.tasks_restored == 240
        assert not logged & set(second.produced)
        assert _digests(rd) == _digests(str(tmp_path / "run-ref"))

        again = gen_workload(WorkloadSpec("fmri-like", 120), tmp_path / "grow")
        rd2 = str(tmp_path / "run-grow")
        assert evaluate(again.plan(), _fmri_cfg(rd2, again, interrupt_after=240)).tasks_executed == 240
        add_fmri_volume(again.base_dir, 121)
        grown = restart(again.plan(), _fmri_cfg(rd2, again))
        assert grown.ok and grown.tasks_executed == 240 + 4
        more = restart(again.plan(), _fmri_cfg(rd2, again))
        assert more.tasks_executed == 0
        add_fmri_volume(again.base_dir, 122)
        assert restart(again.plan(), _fmri_cfg(rd2, again)).tasks_executed == 4
        c.detail = "resume ran 240 (240 restored), +1 volume ran 4 more"


def test_c09_load_balancing(tmp_path):
    with criterion(9, "score-proportional split over two sites", 10.0) as c:
        r = B.bench_loadbalance(jobs=480, seeds=20, scores=(2.18, 2.62), sigmas=3.0, run_dir=str(tmp_path))
        assert len(r["rows"]) == 20 and r["all_within"], r["rows"]
        lo, hi = r["interval"]
        counts = [row["ANL_TG"] for row in r["rows"]]
        c.detail = f"ANL_TG {min(counts)}..{max(counts)} within [{lo:.1f}, {hi:.1f}]"


def test_c10_workload_sizes(tmp_path):
    with criterion(10, "generator task counts", 1.0) as c:
        assert expected_tasks("moldyn-like", 244) == 20_497
        assert expected_tasks("moldyn-like", 1) == 85
        assert expected_tasks("fmri-like", 120) == 480
        wl = gen_workload(WorkloadSpec("moldyn-like", 1), tmp_path / "m")
        res = evaluate(wl.plan(), RunConfig(run_dir=str(tmp_path / "run"), base_dir=wl.base_dir,
                                            restart_log=False, provenance=False,
                                            sites=[SiteSpec("s", "simbatch", {"nodes": 64, "dispatch_rate": "inf"})]))
        assert res.ok and res.tasks_done == 85
        c.detail = "20497 / 85 / 480 (moldyn-like(1) executed: 85)"


def test_c11_falkon_protocol():
    with criterion(11, "exactly-once under crashes, 2 messages per dispatch, provisioning", 60.0) as c:
        with LocalFalkon(workers=4, crash_rate=0.1, seed=0) as fk:
            cl = FalkonClient("127.0.0.1", fk.port)
            cl.submit([{"task_id": i, "exe": "noop"} for i in range(1000)])
            assert cl.wait(1000, 50)
            ids = [m["task_id"] for m in cl.results if m["exit"] == 0]
            stats = cl.stats()
            cl.close()
            crashes = sum(w.crashes for w in fk.workers)
        assert sorted(ids) == list(range(1000))
        assert stats["successes"] == 1000 and crashes > 0

        with LocalFalkon(workers=2) as fk:
            cl = FalkonClient("127.0.0.1", fk.port)
            cl.submit([{"task_id": i, "exe": "noop"} for i in range(500)])
            assert cl.wait(500, 30)
            app = fk.call(fk.service.app_messages)
            cl.close()
        assert app == 2 * 500

        assert provision(68, 0, ProvisionerPolicy(slots_per_node=2, max_workers=32), 1) == 31
        c.detail = f"{crashes} crashes, 1000 unique successes; 1000 msgs for 500 tasks; provision=31"


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))

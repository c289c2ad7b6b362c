"""Benchmarks. Each returns a JSON-ready dict; :func:`write_report` stores
it as ``<run-dir>/reports/<name>.json`` plus a plain-text table.

Everything except ``throughput`` runs on the virtual clock and is
deterministic for a given seed.
"""

import json
import os
import random
import shutil
import time
import tracemalloc

from ..config import RunConfig, SiteSpec
from ..engine.engine import evaluate
from ..providers.simbatch import SimBatchModel, simulate_batch
from ..scheduler import binomial_interval
from ..util import file_digest
from . import perfmodel
from .workloads import WorkloadSpec, gen_workload

# simulated batch sites with heavy per-job overheads: two jobs started per
# second, each waiting in the queue before it is considered
PIPELINE_SITE = {"dispatch_rate": 2.0, "queue_wait_base_s": 30.0}
CLUSTER_SITE = {"dispatch_rate": 2.0, "queue_wait_base_s": 10.0, "job_setup_s": 20.0}
FALKON_SITE = {"allocation_latency_s": 81.0}


def _fresh(path):
    shutil.rmtree(path, ignore_errors=True)
    os.makedirs(path)
    return path


def run_workload(workload, run_dir, sites, seed=0, **knobs):
    """Evaluate a generated workload in virtual time."""
    cfg = RunConfig(run_dir=run_dir, base_dir=workload.base_dir, sites=sites, seed=seed,
                    durations=workload.spec.durations(), **knobs)
    return evaluate(workload.plan(), cfg)


def digests(result):
    """Content digest of every dataset a run produced, keyed by logical path."""
    return {k: file_digest(p) for k, p in sorted(result.produced.items())}


def _check(result, expected):
    if not result.ok or result.tasks_done != expected:
        raise RuntimeError(f"benchmark run failed: {result.summary()} {result.error or ''}")
    return result


# efficiency


def bench_efficiency(P=64, r=11.0, N=64, lengths=(50.0, 100.0, 1000.0), grid=50, seed=0, run_dir=None):
    """Serial-dispatch efficiency: simulation against the closed form."""
    model = SimBatchModel(nodes=P, dispatch_rate=r)
    rows = []
    for t in lengths:
        tr = simulate_batch([(0.0, t)] * N, model)
        rows.append({"t": t, "makespan": tr.makespan, "efficiency": tr.efficiency([t] * N, P),
                     "model_efficiency": perfmodel.efficiency_model(P, r, N, t)["efficiency"]})
    agree = []
    for gP, gr, gN, gt in perfmodel.sample_grid(grid, seed):
        sim = simulate_batch([(0.0, gt)] * gN, SimBatchModel(nodes=gP, dispatch_rate=gr)).makespan
        mod = perfmodel.efficiency_model(gP, gr, gN, gt)["makespan"]
        agree.append({"P": gP, "r": gr, "N": gN, "t": gt, "sim": sim, "model": mod,
                      "rel_err": abs(sim - mod) / mod})
    return {"bench": "efficiency", "P": P, "r": r, "N": N, "rows": rows,
            "grid_max_rel_err": max(a["rel_err"] for a in agree), "grid": agree,
            "thresholds": perfmodel.threshold_table()}


# pipelining


def bench_pipeline(volumes=120, workers=8, duration=("uniform", 3.0, 9.0), seed=0, run_dir="bench-run",
                   site=None, record=True):
    """fmri-like workflow with and without stage barriers. ``record=False``
    skips provenance and the restart log, which the comparison never reads."""
    site = dict(PIPELINE_SITE if site is None else site, nodes=workers)
    wl = gen_workload(WorkloadSpec("fmri-like", volumes, tuple(duration)),
                      _fresh(os.path.join(run_dir, "pipeline", "work")))
    res = {}
    for mode, on in (("pipelined", True), ("barrier", False)):
        r = run_workload(wl, os.path.join(run_dir, "pipeline", mode), [SiteSpec("batch", "simbatch", site)],
                         seed=seed, pipelining=on, provenance=record, restart_log=record)
        res[mode] = _check(r, wl.expected_tasks).makespan
    return {"bench": "pipeline", "volumes": volumes, "workers": workers, "duration": list(duration),
            "seed": seed, "site": site, "makespan_pipelined": res["pipelined"],
            "makespan_barrier": res["barrier"], "reduction": 1 - res["pipelined"] / res["barrier"]}


def random_pipeline_instance(rng):
    """A random small fmri-like instance for the dominance check."""
    a = rng.uniform(0.0, 10.0)
    return {"volumes": rng.randint(2, 10), "workers": rng.randint(1, 8),
            "duration": ("uniform", a, a + rng.uniform(0.0, 20.0)), "seed": rng.randrange(1 << 30),
            "site": {"dispatch_rate": rng.choice([0.5, 2.0, 11.0, "inf"]),
                     "queue_wait_base_s": rng.choice([0.0, 5.0, 30.0])}}


def pipeline_dominance(instances=200, seed=0, run_dir="bench-run"):
    rng = random.Random(seed)
    worst, violations = None, []
    for i in range(instances):
        inst = random_pipeline_instance(rng)
        rep = bench_pipeline(run_dir=os.path.join(run_dir, "dominance"), record=False, **inst)
        gap = rep["makespan_barrier"] - rep["makespan_pipelined"]
        if gap < -1e-9:
            violations.append(dict(inst, gap=gap))
        worst = gap if worst is None else min(worst, gap)
    return {"bench": "pipeline-dominance", "instances": instances, "seed": seed,
            "violations": violations, "min_gap": worst}


# clustering and the dispatcher


def bench_cluster(volumes=120, nodes=8, cap=60, window=0.5, duration=("uniform", 0.5, 1.5), seed=0,
                  run_dir="bench-run", falkon=True):
    """fmri-like on a high-overhead batch site, unclustered and clustered, and
    on the dispatcher with the same number of workers."""
    wl = gen_workload(WorkloadSpec("fmri-like", volumes, tuple(duration)),
                      _fresh(os.path.join(run_dir, "cluster", "work")))
    site = dict(CLUSTER_SITE, nodes=nodes)
    out = {"bench": "cluster", "volumes": volumes, "nodes": nodes, "cap": cap, "window": window,
           "duration": list(duration), "seed": seed, "site": site}
    runs = {}
    for mode, on in (("unclustered", False), ("clustered", True)):
        r = run_workload(wl, os.path.join(run_dir, "cluster", mode), [SiteSpec("batch", "simbatch", site)],
                         seed=seed, clustering=on, cluster_cap=cap, cluster_window_s=window)
        runs[mode] = _check(r, wl.expected_tasks)
        out[f"makespan_{mode}"] = r.makespan
        out[f"jobs_{mode}"] = r.stats["jobs"]
    out["speedup"] = out["makespan_unclustered"] / out["makespan_clustered"]
    out["digests_equal"] = digests(runs["clustered"]) == digests(runs["unclustered"])
    if falkon:
        fsite = dict(FALKON_SITE, workers=nodes)
        r = run_workload(wl, os.path.join(run_dir, "cluster", "falkon"), [SiteSpec("falkon", "falkon", fsite)],
                         seed=seed)
        _check(r, wl.expected_tasks)
        out["falkon_site"] = fsite
        out["makespan_falkon"] = r.makespan
        out["falkon_reduction"] = 1 - r.makespan / out["makespan_clustered"]
        out["falkon_digests_equal"] = digests(r) == digests(runs["clustered"])
    return out


def bench_throughput(n=10_000, workers=4, engine_tasks=500, run_dir="bench-run", seed=None):
    """No-op dispatch rate through the TCP service, directly and through the
    engine (wall clock; absolute numbers depend on the machine)."""
    from ..falkon.client import FalkonClient
    from ..falkon.harness import LocalFalkon

    modeled = SimBatchModel().dispatch_rate
    out = {"bench": "throughput", "tasks": n, "workers": workers, "simbatch_modeled_rate": modeled}
    with LocalFalkon(workers) as svc:
        if n:
            client = FalkonClient("127.0.0.1", svc.port)
            try:
                t0 = time.monotonic()
                client.submit([{"task_id": i, "exe": "noop"} for i in range(n)])
                client.wait(n, timeout=300)
                dt = time.monotonic() - t0
            finally:
                client.close()
            done = len({m["task_id"] for m in client.results if m.get("exit") == 0})
            out["dispatcher_completed"] = done
            out["dispatcher_seconds"] = dt
            out["dispatcher_rate"] = done / dt if dt > 0 else 0.0
            out["app_messages"] = svc.call(svc.service.app_messages)
        else:
            out.update(dispatcher_completed=0, dispatcher_seconds=0.0, dispatcher_rate=0.0, app_messages=0)
        if engine_tasks:
            wl = gen_workload(WorkloadSpec("flat", engine_tasks), _fresh(os.path.join(run_dir, "throughput", "work")))
            cfg = RunConfig(run_dir=os.path.join(run_dir, "throughput", "engine"), base_dir=wl.base_dir,
                            clock="wall", sites=[SiteSpec("falkon", "falkon", {"connect": svc.endpoint})])
            t0 = time.monotonic()
            r = evaluate(wl.plan(), cfg)
            dt = time.monotonic() - t0
            out["engine_completed"] = r.tasks_done
            out["engine_seconds"] = dt
            out["engine_rate"] = r.tasks_done / dt if dt > 0 else 0.0
    out["ratio_to_modeled"] = out["dispatcher_rate"] / modeled
    return out


# load balancing


def bench_loadbalance(jobs=480, seeds=20, scores=(2.18, 2.62), sigmas=3.0, run_dir="bench-run"):
    """Two sites whose scores sit at the converged ratio; per-site job counts
    against the binomial interval of score-proportional dispatch."""
    wl = gen_workload(WorkloadSpec("flat", jobs), _fresh(os.path.join(run_dir, "loadbalance", "work")))
    p = scores[0] / sum(scores)
    lo, hi = binomial_interval(jobs, p, sigmas)
    rows = []
    for seed in range(seeds):
        sites = [SiteSpec("ANL_TG", "simbatch", {"nodes": 16}, initial_score=scores[0]),
                 SiteSpec("UC_TP", "simbatch", {"nodes": 16}, initial_score=scores[1])]
        r = run_workload(wl, os.path.join(run_dir, "loadbalance", "run"), sites, seed=seed,
                         score_up=1.0, score_down=1.0, provenance=False, restart_log=False)
        _check(r, jobs)
        a = r.stats["sites"]["ANL_TG"]["submitted"]
        b = r.stats["sites"]["UC_TP"]["submitted"]
        rows.append({"seed": seed, "ANL_TG": a, "UC_TP": b, "within": lo <= a <= hi})
    return {"bench": "loadbalance", "jobs": jobs, "scores": list(scores), "p": p,
            "expected": jobs * p, "interval": [lo, hi], "rows": rows,
            "all_within": all(r["within"] for r in rows)}


# scale


def bench_scale(tasks=160_000, run_dir="bench-run"):
    """A flat plan of no-op tasks; traced allocation per task."""
    wl = gen_workload(WorkloadSpec("flat", tasks), _fresh(os.path.join(run_dir, "scale", "work")))
    plan = wl.plan()
    cfg = RunConfig(run_dir=os.path.join(run_dir, "scale", "run"), base_dir=wl.base_dir,
                    provenance=False, restart_log=False,
                    sites=[SiteSpec("batch", "simbatch", {"nodes": 1024, "dispatch_rate": "inf",
                                                          "history": False, "materialize": False})])
    tracing = tracemalloc.is_tracing()
    if not tracing:
        tracemalloc.start()
    tracemalloc.reset_peak()
    base = tracemalloc.get_traced_memory()[0]
    t0 = time.monotonic()
    r = evaluate(plan, cfg)
    wall = time.monotonic() - t0
    _, peak = tracemalloc.get_traced_memory()
    if not tracing:
        tracemalloc.stop()
    per_task = (peak - base) / tasks if tasks else 0.0
    return {"bench": "scale", "tasks": tasks, "status": r.status, "tasks_done": r.tasks_done,
            "peak_bytes": peak - base, "bytes_per_task": per_task, "seconds": wall,
            "nodes": r.stats["nodes"]}


BENCHES = {
    "efficiency": bench_efficiency,
    "pipeline": bench_pipeline,
    "cluster": bench_cluster,
    "throughput": bench_throughput,
    "loadbalance": bench_loadbalance,
    "scale": bench_scale,
}


def _table(report):
    lines = [f"# {report.get('bench')}"]
    for k, v in report.items():
        if k == "bench" or isinstance(v, (list, dict)):
            continue
        if isinstance(v, float):
            v = f"{v:.6g}"
        lines.append(f"{k:28s} {v}")
    for key in ("rows", "thresholds"):
        rows = report.get(key)
        if rows:
            cols = list(rows[0])
            lines.append("")
            lines.append("  ".join(f"{c:>12s}" for c in cols))
            for row in rows:
                lines.append("  ".join(f"{row[c]:>12.6g}" if isinstance(row[c], float) else f"{row[c]!s:>12s}"
                                       for c in cols))
    return "\n".join(lines) + "\n"


def write_report(report, run_dir):
    d = os.path.join(run_dir, "reports")
    os.makedirs(d, exist_ok=True)
    name = report["bench"]
    with open(os.path.join(d, f"{name}.json"), "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    text = _table(report)
    with open(os.path.join(d, f"{name}.txt"), "w", encoding="utf-8") as f:
        f.write(text)
    return text


__all__ = ["bench_efficiency", "bench_pipeline", "pipeline_dominance", "bench_cluster", "bench_throughput",
           "bench_loadbalance", "bench_scale", "run_workload", "digests", "write_report", "BENCHES"]

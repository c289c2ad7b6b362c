"""Invocation records (one JSON document per task attempt) and derivation queries."""

import json
import os
import socket

from .errors import UnknownDataset
from .util import file_digest, write_json


def _file_entry(path):
    try:
        return {"path": path, "size": os.path.getsize(path), "digest": file_digest(path)}
    except OSError:
        return {"path": path, "size": None, "digest": None}


def filter_env(env, allowlist, full=False):
    if full:
        return dict(env)
    return {k: env[k] for k in allowlist if k in env}


def build_record(task_id, attempt, proc, job, status, inputs, outputs,
                 env_allowlist=(), full_env=False, digests=True):
    """A self-contained invocation document.

    ``inputs`` and ``outputs`` are lists of (logical path, physical path).
    """
    usage = status.usage or {}
    env = dict(os.environ)
    env.update(job.env or {})
    rec = {
        "task_id": task_id,
        "attempt": attempt,
        "procedure": proc,
        "host_name": socket.gethostname(),
        "host_id": status.host,
        "working_dir": status.sandbox or job.sandbox_dir,
        "environment": filter_env(env, env_allowlist, full_env),
        "command_line": [job.executable] + [str(a) for a in job.args],
        "user_time_s": usage.get("user_time", 0.0),
        "system_time_s": usage.get("system_time", 0.0),
        "usage_unavailable": bool(usage.get("unavailable", not usage)),
        "start": status.start_time,
        "end": status.end_time,
        "wallclock_ms": None if status.start_time is None or status.end_time is None
        else round((status.end_time - status.start_time) * 1000.0, 3),
        "phase": status.phase,
        "reason": status.reason,
        "inputs": [lp for lp, _ in inputs],
        "outputs": [lp for lp, _ in outputs],
        "stage_in": [_file_entry(p) if digests else {"path": p} for _, p in inputs],
        "stage_out": [_file_entry(p) if digests else {"path": p} for _, p in outputs],
    }
    if status.signal is not None:
        rec["signal"] = status.signal
    else:
        rec["exit_code"] = status.exit_code
    return rec


class ProvenanceWriter:
    def __init__(self, run_dir, enabled=True, env_allowlist=(), full_env=False):
        self.dir = os.path.join(run_dir, "provenance")
        self.enabled = enabled
        self.env_allowlist = env_allowlist
        self.full_env = full_env
        self.warnings = []
        self.count = 0

    def record(self, task_id, attempt, proc, job, status, inputs, outputs):
        if not self.enabled:
            return None
        rec = build_record(task_id, attempt, proc, job, status, inputs, outputs,
                           self.env_allowlist, self.full_env)
        path = os.path.join(self.dir, f"{task_id}.{attempt}.json")
        try:
            os.makedirs(self.dir, exist_ok=True)
            write_json(path, rec)
        except OSError as e:
            # a lost record is a warning; the task outcome stands
            self.warnings.append(f"provenance write failed for task {task_id}: {e}")
            return None
        self.count += 1
        return path


def max_task_id(run_dir):
    d = os.path.join(run_dir, "provenance")
    best = 0
    if os.path.isdir(d):
        for n in os.listdir(d):
            head = n.split(".", 1)[0]
            if head.isdigit():
                best = max(best, int(head))
    return best


def load_records(run_dir):
    d = os.path.join(run_dir, "provenance")
    out = []
    if not os.path.isdir(d):
        return out
    for n in sorted(os.listdir(d)):
        if n.endswith(".json"):
            with open(os.path.join(d, n), encoding="utf-8") as f:
                out.append(json.load(f))
    return out


def derivation_of(logical_path, run_dir):
    """Producer chain of a dataset, one list of steps per level back to the
    mapped inputs. Each step is {task_id, procedure, inputs}. A mapped input
    has an empty chain; an unknown path raises UnknownDataset."""
    recs = [r for r in load_records(run_dir) if r.get("exit_code") == 0]
    by_logical = {}
    by_physical = {}
    for r in recs:
        for lp in r["outputs"]:
            by_logical[lp] = r
        for e in r["stage_out"]:
            by_physical[e["path"]] = r
    known_inputs = set()
    for r in recs:
        known_inputs.update(r["inputs"])
        known_inputs.update(e["path"] for e in r["stage_in"])

    def matches(r, lp):
        return any(o == lp or o.startswith(lp + ".") or o.startswith(lp + "[") for o in r["outputs"])

    start = [r for r in recs if matches(r, logical_path)]
    if not start:
        if logical_path in known_inputs or any(i.startswith(logical_path + ".") or i.startswith(logical_path + "[")
                                               for i in known_inputs):
            return []
        raise UnknownDataset(f"no record of dataset {logical_path!r}")
    # level of a producer = its longest distance from the queried dataset,
    # so every stage of a pipeline gets its own level
    key = lambda r: (r["task_id"], r["attempt"])
    depth = {}
    frontier = [(r, 0) for r in start]
    while frontier:
        nxt = []
        for r, d in frontier:
            k = key(r)
            if depth.get(k, -1) >= d:
                continue
            if d > len(recs):
                raise UnknownDataset(f"cyclic derivation through task {r['task_id']}")
            depth[k] = d
            for e in r["stage_in"]:
                prod = by_physical.get(e["path"])
                if prod is not None:
                    nxt.append((prod, d + 1))
        frontier = nxt
    by_key = {key(r): r for r in recs}
    chain = [[] for _ in range(max(depth.values()) + 1)]
    for k in sorted(depth):
        r = by_key[k]
        chain[depth[k]].append({"task_id": r["task_id"], "procedure": r["procedure"], "inputs": r["inputs"]})
    return chain

"""The restart log: an append-only record of datasets that were produced.

One JSON object per line. ``dataset-produced`` lines are written only after
the output file exists; on restart, logged datasets whose files are still
present are treated as already computed.
"""

import json
import os
import time

RUN_STARTED = "run-started"
DATASET_PRODUCED = "dataset-produced"
RUN_FINISHED = "run-finished"


class RestartLog:
    def __init__(self, run_dir, enabled=True):
        self.path = os.path.join(run_dir, "restart.log")
        self.enabled = enabled
        self._f = None

    def _open(self):
        if self._f is None:
            os.makedirs(os.path.dirname(self.path), exist_ok=True)
            self._f = open(self.path, "a", encoding="utf-8")
        return self._f

    def _write(self, rec):
        if not self.enabled:
            return
        rec.setdefault("timestamp", time.time())
        f = self._open()
        f.write(json.dumps(rec, sort_keys=True) + "\n")
        f.flush()

    def run_started(self, plan_digest):
        self._write({"kind": RUN_STARTED, "plan_digest": plan_digest})

    def produced(self, logical_path, physical_path, digest, producer=None):
        self._write({"kind": DATASET_PRODUCED, "logical_path": logical_path,
                     "physical_path": physical_path, "digest": digest, "producer": producer})

    def run_finished(self, status):
        self._write({"kind": RUN_FINISHED, "status": status})

    def close(self):
        if self._f is not None:
            self._f.close()
            self._f = None


def read_records(run_dir):
    path = os.path.join(run_dir, "restart.log")
    if not os.path.exists(path):
        return []
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError:
                # a torn final line from an interrupted write is ignored
                continue
    return out


def load_produced(run_dir, verify=True):
    """logical path -> record for datasets logged as produced whose files exist."""
    index = {}
    for rec in read_records(run_dir):
        if rec.get("kind") != DATASET_PRODUCED:
            continue
        if verify and not os.path.exists(rec["physical_path"]):
            continue
        index[rec["logical_path"]] = rec
    return index

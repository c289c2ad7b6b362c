"""Submit engine jobs to a running dispatch service over TCP (wall clock)."""

import threading
import time

from ..falkon.client import FalkonClient
from .base import COMPLETED, FAILED, QUEUED, JobStatus, Provider


class FalkonClientProvider(Provider):
    name = "falkon"

    def __init__(self, site_id="falkon", connect="127.0.0.1:50001", timeout=30.0):
        super().__init__(site_id)
        host, _, port = str(connect).rpartition(":")
        self.host, self.port = host or "127.0.0.1", int(port)
        self.timeout = timeout
        self.client = None
        self._lock = threading.Lock()
        self._pending = {}  # wire id -> (job, member index or None)
        self._bundles = {}  # bundle job id -> [statuses, remaining]

    def _connect(self):
        if self.client is None:
            self.client = FalkonClient(self.host, self.port, self._on_done, self.timeout)
        return self.client

    def submit(self, job):
        client = self._connect()
        now = time.time()
        self.jobs[job.job_id] = JobStatus(phase=QUEUED, submit_time=now)
        members = job.members or [job]
        wire = []
        with self._lock:
            if job.members:
                self._bundles[job.job_id] = [[None] * len(members), len(members)]
            for i, m in enumerate(members):
                wid = f"{job.job_id}#{i}"
                self._pending[wid] = (job, i if job.members else None, now)
                wire.append({"task_id": wid, "exe": m.executable, "args": [str(a) for a in m.args],
                             "dir": m.sandbox_dir, "stageins": [list(p) for p in m.stage_in],
                             "stageouts": [list(p) for p in m.stage_out], "env": m.env})
        client.submit(wire)
        return job.job_id

    def _on_done(self, msg):
        with self._lock:
            entry = self._pending.pop(msg["task_id"], None)
        if entry is None:
            return
        job, idx, t_sub = entry
        end = time.time()
        st = JobStatus(phase=COMPLETED, host=msg.get("host"), submit_time=t_sub,
                       start_time=end - (msg.get("duration_ms") or 0) / 1000.0, end_time=end,
                       usage={"unavailable": True})
        if msg.get("signal") is not None:
            st.signal = msg["signal"]
        else:
            st.exit_code = msg.get("exit")
        if st.exit_code not in (0, None) or st.signal is not None:
            st.reason = msg.get("reason") or f"exit {st.exit_code}"
            if st.exit_code == -1:
                st.phase = FAILED
        if idx is None:
            self.jobs[job.job_id] = st
            self.loop.post_threadsafe(self.sink, job, st)
            return
        with self._lock:
            agg = self._bundles[job.job_id]
            agg[0][idx] = st
            agg[1] -= 1
            finished = agg[1] == 0
            if finished:
                del self._bundles[job.job_id]
        if finished:
            top = JobStatus(phase=COMPLETED, host=st.host, members=agg[0], end_time=end,
                            exit_code=0 if all(s.ok for s in agg[0]) else 1)
            self.jobs[job.job_id] = top
            self.loop.post_threadsafe(self.sink, job, top)

    def hosts(self):
        return [f"{self.host}:{self.port}"]

    def close(self):
        if self.client is not None:
            self.client.close()
            self.client = None

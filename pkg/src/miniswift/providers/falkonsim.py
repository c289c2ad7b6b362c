"""Falkon in virtual time: the dispatcher state machine driven by the
engine's clock instead of sockets.

Workers are provisioned on demand (up to ``workers`` nodes) and arrive
``allocation_latency_s`` after they are requested. Dispatch is one FIFO
stream at ``dispatch_rate`` tasks per second, and a task costs its duration
plus ``task_overhead_s`` on the worker. Outputs are produced by the stub,
as with the simulated batch provider.
"""

import math

from ..falkon.core import FalkonCore, ProvisionerPolicy, deregister_idle, provision
from ..stub import run_stub
from .base import COMPLETED, QUEUED, JobStatus, Provider


class FalkonSimProvider(Provider):
    name = "falkon-sim"

    def __init__(self, site_id="falkon", workers=8, slots_per_node=1, dispatch_rate=487.0,
                 allocation_latency_s=81.0, task_overhead_s=0.0, idle_timeout_s=3600.0,
                 period_s=1.0, min_workers=0, materialize=True, speed=1.0):
        super().__init__(site_id)
        self.policy = ProvisionerPolicy(min_workers, workers, slots_per_node, idle_timeout_s,
                                        allocation_latency_s, period_s)
        self.core = FalkonCore()
        self.dispatch_gap = 0.0 if not dispatch_rate or math.isinf(dispatch_rate) else 1.0 / dispatch_rate
        self.task_overhead_s = task_overhead_s
        self.materialize = materialize
        self.speed = speed
        self.fault = None
        self.requested = 0
        self.allocations = []  # (request time, nodes)
        self.disp_free = 0.0
        self._timer = None
        self._prov_timer = None
        self._node_seq = 0
        self.messages = 0
        self.trace = []

    def submit(self, job):
        now = self.loop.now()
        st = JobStatus(phase=QUEUED, submit_time=now)
        self.jobs[job.job_id] = st
        self.core.enqueue((job, st))
        self._provision()
        self._kick(now)
        return job.job_id

    def hosts(self):
        return [w.worker_id for w in self.core.live_workers()] or [f"{self.site_id}-pending"]

    # provisioning

    def _provision(self):
        now = self.loop.now()
        current = max(len(self.core.live_workers()), self.requested)
        n = provision(self.core.queue_length, self.core.free_slots() + self._arriving_slots(),
                      self.policy, current)
        if n > 0:
            self.requested = current + n
            self.allocations.append((now, n))
            self.loop.call_at(now + self.policy.allocation_latency_s, self._arrive, n)
        if self._prov_timer is None and (self.core.queue_length or self.core.dispatched):
            self._prov_timer = self.loop.call_later(self.policy.period_s, self._periodic)

    def _arriving_slots(self):
        return (self.requested - len(self.core.live_workers())) * self.policy.slots_per_node

    def _periodic(self):
        self._prov_timer = None
        now = self.loop.now()
        for wid in deregister_idle(self.core.live_workers(), now, self.policy):
            self.core.deregister(wid)
            self.requested = max(0, self.requested - 1)
        if self.core.queue_length or self.core.dispatched:
            self._provision()

    def _arrive(self, n):
        now = self.loop.now()
        for _ in range(n):
            self._node_seq += 1
            self.core.register(self.policy.slots_per_node, now, f"{self.site_id}-w{self._node_seq}")
            self.messages += 2  # registration exchange
        self._kick(now)

    # dispatch

    def _kick(self, at):
        if self._timer is not None:
            return
        self._timer = self.loop.call_at(max(at, self.loop.now()), self._pump)

    def _pump(self):
        self._timer = None
        now = self.loop.now()
        if now < self.disp_free:
            self._kick(self.disp_free)
            return
        pairs = self.core.assign(limit=1 if self.dispatch_gap > 0 else None)
        for qt, wid in pairs:
            self.messages += 1  # TASK
            start = now + self.dispatch_gap
            self.disp_free = start
            job, st = qt.payload
            self.loop.call_at(start, self._start, qt, wid, job, st)
        if pairs and self.core.queue_length:
            self._kick(self.disp_free)

    def _start(self, qt, wid, job, st):
        now = self.loop.now()
        st.phase = "running"
        st.host = wid
        st.start_time = now
        t = now + self.task_overhead_s
        members = job.members or [job]
        results = []
        for m in members:
            ms = JobStatus(phase="running", host=wid, submit_time=st.submit_time, start_time=t,
                           sandbox=m.sandbox_dir, usage={"unavailable": True})
            t += (m.duration or 0.0) / self.speed
            ms.end_time = t
            results.append(ms)
        self.loop.call_at(t, self._finish, qt, wid, job, st, results)

    def _finish(self, qt, wid, job, st, results):
        now = self.loop.now()
        members = job.members or [job]
        for m, ms in zip(members, results):
            self._outcome(m, ms)
            self.trace.append((m.job_id, wid, ms.start_time, ms.end_time))
        self.messages += 1  # RESULT
        st.end_time = now
        if job.members:
            st.members = results
            st.phase = COMPLETED
            st.exit_code = 0 if all(r.ok for r in results) else 1
        else:
            r = results[0]
            st.phase, st.exit_code, st.reason = r.phase, r.exit_code, r.reason
            st.stderr_tail, st.start_time, st.end_time, st.usage = r.stderr_tail, r.start_time, r.end_time, r.usage
        self.core.complete(qt.task_id, wid, st.ok, now)
        self._kick(now)
        self.sink(job, st)

    def _outcome(self, m, ms):
        fault = self.fault(m, ms.host) if self.fault is not None else None
        if fault is not None:
            ms.phase, ms.exit_code, ms.stderr_tail = COMPLETED, fault[0], fault[1]
            ms.reason = f"exit {fault[0]}: {fault[1]}"
            return
        code = 0
        if m.stage_out and self.materialize:
            paths = {rel: src for src, rel in m.stage_in}
            paths.update({rel: dest for rel, dest in m.stage_out})
            code = run_stub(m.executable, m.args, [r for _, r in m.stage_in],
                            [r for r, _ in m.stage_out], paths=paths)
        ms.phase, ms.exit_code = COMPLETED, code
        if code:
            ms.reason = f"exit {code}"

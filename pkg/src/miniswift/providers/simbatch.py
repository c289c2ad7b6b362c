"""A discrete-event batch scheduler (the stand-in for GRAM over PBS or Condor).

Model: ``nodes`` nodes with ``slots_per_node`` slots each, and one serial
dispatcher that starts at most ``dispatch_rate`` jobs per second. A job
submitted at time t joins the FIFO queue at t + ``queue_wait_base_s``. When
the dispatcher is free and a slot is free it takes the head job, reserves
the slot and spends 1/r seconds starting it; the job then holds its slot for
``job_setup_s`` plus its duration. Every node becomes usable only
``allocation_latency_s`` after the first submission.

With N jobs of length t released together this gives the makespan N/r + t
whenever N <= P or r*t <= P - 1 (see :func:`closed_form_makespan`).
"""

import math
import os
import random
from collections import deque
from dataclasses import dataclass

from ..errors import SubmitRejected, UnknownJob
from ..stub import run_stub
from .base import CANCELLED, COMPLETED, FAILED, QUEUED, RUNNING, JobSpec, JobStatus, Provider


@dataclass
class SimBatchModel:
    nodes: int = 8
    slots_per_node: int = 1
    dispatch_rate: float = 2.0  # jobs per second; overhead o = 1/r
    queue_wait_base_s: float = 0.0
    allocation_latency_s: float = 0.0
    job_setup_s: float = 0.0
    speed: float = 1.0  # durations are divided by this

    def __post_init__(self):
        if not self.dispatch_rate or self.dispatch_rate <= 0:
            raise ValueError("dispatch_rate must be > 0")
        if self.nodes < 1 or self.slots_per_node < 1:
            raise ValueError("need at least one node and one slot")

    @property
    def overhead(self):
        return 0.0 if math.isinf(self.dispatch_rate) else 1.0 / self.dispatch_rate

    @property
    def slots(self):
        return self.nodes * self.slots_per_node


class _Entry:
    __slots__ = ("job", "status", "eligible", "held", "cancelled")

    def __init__(self, job, status, eligible):
        self.job = job
        self.status = status
        self.eligible = eligible
        self.held = False
        self.cancelled = False


class SimBatchProvider(Provider):
    name = "simbatch"
    capabilities = frozenset({"cancel", "suspend", "resume"})

    def __init__(self, site_id="simbatch", nodes=8, slots_per_node=1, dispatch_rate=2.0,
                 queue_wait_base_s=0.0, allocation_latency_s=0.0, job_setup_s=0.0, speed=1.0,
                 max_queued=None, materialize=True, fail_prob=0.0, fail_seed=0,
                 host_errors=None, io_bandwidth=None, keep_sandbox=False, history=True):
        super().__init__(site_id)
        self.model = SimBatchModel(nodes, slots_per_node,
                                   math.inf if dispatch_rate in (None, "inf") else float(dispatch_rate),
                                   float(queue_wait_base_s), float(allocation_latency_s),
                                   float(job_setup_s), float(speed))
        self.max_queued = max_queued
        self.materialize = materialize
        self.fail_prob = float(fail_prob)
        self._fail_rng = random.Random(fail_seed)
        # host -> number of upcoming jobs on that host that fail with a host error
        self.host_errors = dict(host_errors or {})
        self.fault = None  # optional callable(job, host) -> None | (exit_code, stderr)
        self.host_names = [f"{site_id}-n{i}" for i in range(self.model.nodes)]
        self.free = [self.model.slots_per_node] * self.model.nodes
        # one entry per free slot; popped from the end
        self._avail = [i for i in reversed(range(self.model.nodes)) for _ in range(self.model.slots_per_node)]
        self.history = history
        self.node_ready = None
        self.suspended_until = {}
        self.queue = deque()
        self.disp_free = 0.0
        self._timer = None
        self.trace = []  # (job_id, host, start, end)
        self.queued = 0

    # interface

    def submit(self, job):
        if self.max_queued is not None and self.queued >= self.max_queued:
            raise SubmitRejected(f"{self.site_id}: queue full")
        now = self.loop.now()
        if self.node_ready is None:
            self.node_ready = now + self.model.allocation_latency_s
        st = JobStatus(phase=QUEUED, submit_time=now)
        e = _Entry(job, st, now + self.model.queue_wait_base_s)
        self.jobs[job.job_id] = e
        self.queue.append(e)
        self.queued += 1
        self._kick(e.eligible)
        return job.job_id

    def status(self, job_id):
        try:
            return self.jobs[job_id].status
        except KeyError:
            raise UnknownJob(job_id) from None

    def cancel(self, job_id):
        e = self._entry(job_id)
        if e.status.phase != QUEUED:
            return False
        e.cancelled = True
        e.status.phase = CANCELLED
        e.status.reason = "cancelled"
        self.queued -= 1
        self.loop.post(self.sink, e.job, e.status)
        return True

    def suspend(self, job_id):
        e = self._entry(job_id)
        if e.status.phase == QUEUED:
            e.held = True

    def resume(self, job_id):
        e = self._entry(job_id)
        if e.held:
            e.held = False
            self._kick(self.loop.now())

    def suspend_host(self, host, until):
        self.suspended_until[host] = until
        self._kick(until)

    def hosts(self):
        return list(self.host_names)

    def _entry(self, job_id):
        try:
            return self.jobs[job_id]
        except KeyError:
            raise UnknownJob(job_id) from None

    # dispatcher

    def _kick(self, at):
        t = self._timer
        if t is not None and not t.cancelled and t.when <= at:
            return
        if t is not None:
            t.cancel()
        self._timer = self.loop.call_at(max(at, self.loop.now()), self._pump)

    def _free_node(self, now):
        avail = self._avail
        if not self.suspended_until:
            return avail.pop() if avail else None
        skipped = []
        node = None
        while avail:
            i = avail.pop()
            if self.suspended_until.get(self.host_names[i], -1.0) <= now:
                node = i
                break
            skipped.append(i)
        avail.extend(reversed(skipped))
        return node

    def _pump(self):
        self._timer = None
        now = self.loop.now()
        o = self.model.overhead
        while self.queue:
            if now < self.disp_free:
                self._kick(self.disp_free)
                return
            if now < self.node_ready:
                self._kick(self.node_ready)
                return
            head = self._head()
            if head is None:
                return
            if head.eligible > now:
                self._kick(head.eligible)
                return
            node = self._free_node(now)
            if node is None:
                # woken again by a completion or a host coming back
                later = [t for t in self.suspended_until.values() if t > now]
                if later and self._avail:
                    self._kick(min(later))
                return
            self._remove(head)
            self.free[node] -= 1
            self.queued -= 1
            self.disp_free = now + o
            if o > 0:
                self.loop.call_at(now + o, self._start, head, node)
            else:
                self._start(head, node)

    def _head(self):
        for e in self.queue:
            if not e.held and not e.cancelled:
                return e
        return None

    def _remove(self, e):
        if self.queue[0] is e:
            self.queue.popleft()
        else:
            self.queue.remove(e)
        while self.queue and self.queue[0].cancelled:
            self.queue.popleft()

    def _start(self, e, node):
        now = self.loop.now()
        job, st = e.job, e.status
        host = self.host_names[node]
        st.phase = RUNNING
        st.host = host
        st.start_time = now
        speed = self.model.speed
        t = now + self.model.job_setup_s
        members = job.members or [job]
        results = []
        for m in members:
            ms = JobStatus(phase=RUNNING, host=host, submit_time=st.submit_time, start_time=t,
                           sandbox=m.sandbox_dir, usage={"unavailable": True})
            t += (m.duration or 0.0) / speed
            ms.end_time = t
            results.append(ms)
        self.loop.call_at(t, self._finish, e, node, results)

    def _finish(self, e, node, results):
        now = self.loop.now()
        job, st = e.job, e.status
        members = job.members or [job]
        for m, ms in zip(members, results):
            self._outcome(m, ms)
            if self.history:
                self.trace.append((m.job_id, ms.host, ms.start_time, ms.end_time))
        self.free[node] += 1
        self._avail.append(node)
        if not self.history:
            self.jobs.pop(job.job_id, None)
        st.end_time = now
        if job.members:
            st.members = results
            st.phase = COMPLETED
            st.exit_code = 0 if all(r.ok for r in results) else 1
        else:
            r = results[0]
            st.phase, st.exit_code, st.reason = r.phase, r.exit_code, r.reason
            st.error_class, st.stderr_tail = r.error_class, r.stderr_tail
            st.start_time, st.end_time, st.usage = r.start_time, r.end_time, r.usage
        self._kick(now)
        self.sink(job, st)

    def _outcome(self, m, ms):
        host = ms.host
        fault = self.fault(m, host) if self.fault is not None else None
        if fault is None and self.host_errors.get(host, 0) > 0:
            self.host_errors[host] -= 1
            fault = (1, "Stale NFS handle")
        if fault is None and self.fail_prob > 0 and self._fail_rng.random() < self.fail_prob:
            fault = (1, "simulated transient failure")
        if fault is not None:
            ms.phase, ms.exit_code, ms.stderr_tail = COMPLETED, fault[0], fault[1]
            ms.reason = f"exit {fault[0]}: {fault[1]}"
            return
        missing = [src for src, _ in m.stage_in if not os.path.exists(src)]
        if missing:
            ms.phase, ms.reason = FAILED, f"stage-in missing: {missing[0]}"
            return
        code = 0
        if self.materialize and m.stage_out:
            paths = {rel: src for src, rel in m.stage_in}
            paths.update({rel: dest for rel, dest in m.stage_out})
            code = run_stub(m.executable, m.args, [r for _, r in m.stage_in],
                            [r for r, _ in m.stage_out], paths=paths)
        ms.phase, ms.exit_code = COMPLETED, code
        if code:
            ms.reason = f"exit {code}"


@dataclass
class SimTrace:
    starts: list
    ends: list
    hosts: list
    makespan: float

    def efficiency(self, durations, slots):
        busy = sum(durations)
        return busy / (slots * self.makespan) if self.makespan > 0 else 1.0


def simulate_batch(jobs, model):
    """Run ``jobs`` (list of (release time, duration)) through the model.

    Returns a :class:`SimTrace`; start and end times are indexed like ``jobs``.
    """
    from ..engine.clock import VirtualLoop

    loop = VirtualLoop()
    prov = SimBatchProvider("sim", model.nodes, model.slots_per_node, model.dispatch_rate,
                            model.queue_wait_base_s, model.allocation_latency_s, model.job_setup_s,
                            model.speed, materialize=False)
    n = len(jobs)
    starts, ends, hosts = [None] * n, [None] * n, [None] * n

    def done(job, st):
        i = job.task_id
        starts[i], ends[i], hosts[i] = st.start_time, st.end_time, st.host

    prov.attach(loop, done)
    order = sorted(range(n), key=lambda i: (jobs[i][0], i))
    for i in order:
        rel, dur = jobs[i]
        spec = JobSpec(job_id=str(i), executable="sim", duration=dur, task_id=i)
        loop.call_at(rel, prov.submit, spec)
    loop.run()
    return SimTrace(starts, ends, hosts, max(ends) if ends else 0.0)


def closed_form_makespan(n, t, nodes, rate):
    """Makespan of n equal jobs of length t released at 0 (no waits or setup)."""
    if n == 0:
        return 0.0
    if math.isinf(rate):
        return math.ceil(n / nodes) * t
    if rate * t <= nodes - 1 or n <= nodes:
        return n / rate + t
    # slot-bound: every round of ``nodes`` jobs adds t plus one dispatch
    i, j = (n - 1) % nodes + 1, (n - 1) // nodes
    return i / rate + j * (t + 1 / rate) + t


__all__ = ["SimBatchModel", "SimBatchProvider", "SimTrace", "simulate_batch", "closed_form_makespan"]

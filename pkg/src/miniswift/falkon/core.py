"""The dispatcher state machine shared by the TCP service and the simulator.

Nothing here does I/O or reads a clock: callers pass ``now`` in and act on
the returned assignments, so the same logic drives sockets and virtual time.
"""

import math
from collections import deque
from dataclasses import dataclass, field

from ..errors import QueueFull

IDLE, BUSY, SUSPECT, DEREGISTERED = "idle", "busy", "suspect", "deregistered"

HEARTBEAT_S = 5.0
SUSPECT_AFTER = 2  # missed heartbeats
LOST_AFTER = 3

# about 1.5 million queued task records fit comfortably by default
DEFAULT_QUEUE_BOUND = 2_000_000


@dataclass
class ProvisionerPolicy:
    min_workers: int = 0
    max_workers: int = 32
    slots_per_node: int = 1
    idle_timeout_s: float = 60.0
    allocation_latency_s: float = 81.0
    period_s: float = 1.0

    def __post_init__(self):
        if self.min_workers > self.max_workers:
            raise ValueError("min_workers exceeds max_workers")
        if self.idle_timeout_s <= 0:
            raise ValueError("idle_timeout_s must be positive")
        if self.slots_per_node < 1:
            raise ValueError("slots_per_node must be at least 1")

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in d.items() if k in known})


def provision(queue_length, free_slots, policy, current_nodes):
    """Nodes to request so the queue fits, within the node cap."""
    backlog = queue_length - free_slots
    if backlog <= 0:
        return 0
    want = math.ceil(backlog / policy.slots_per_node)
    return max(0, min(want, policy.max_workers - current_nodes))


@dataclass
class WorkerRegistration:
    worker_id: str
    slots: int = 1
    last_heartbeat: float = 0.0
    state: str = IDLE
    idle_since: float = 0.0
    inflight: list = field(default_factory=list)

    @property
    def free(self):
        return self.slots - len(self.inflight) if self.state in (IDLE, BUSY) else 0


def deregister_idle(workers, now, policy):
    """Ids of workers to release: idle at least ``idle_timeout_s``, keeping
    ``min_workers`` registered. Busy workers are never released."""
    live = [w for w in workers if w.state != DEREGISTERED]
    idle = sorted((w for w in live if not w.inflight and w.state == IDLE
                   and now - w.idle_since >= policy.idle_timeout_s),
                  key=lambda w: (w.idle_since, w.worker_id))
    room = max(0, len(live) - policy.min_workers)
    return [w.worker_id for w in idle[:room]]


class QueuedTask:
    __slots__ = ("task_id", "payload", "owner", "attempts")

    def __init__(self, task_id, payload, owner=None):
        self.task_id = task_id
        self.payload = payload
        self.owner = owner
        self.attempts = 0


class FalkonCore:
    """FIFO queue, worker registry and exactly-once completion accounting."""

    def __init__(self, queue_bound=DEFAULT_QUEUE_BOUND, heartbeat_s=HEARTBEAT_S):
        self.queue_bound = queue_bound
        self.heartbeat_s = heartbeat_s
        self.pending = deque()
        self.dispatched = {}  # task id -> (QueuedTask, worker id)
        self.workers = {}
        self.succeeded = set()
        self.finished = 0
        self.duplicates = 0
        self.dispatch_count = 0
        self.requeues = 0
        self._ids = 0
        self._wids = 0
        self._free = deque()  # worker ids, one entry per free slot (lazily validated)
        self.ewma = 0.0
        self._last_done = None

    # queue

    def enqueue(self, payload, owner=None, task_id=None):
        if len(self.pending) >= self.queue_bound:
            raise QueueFull(f"queue holds {len(self.pending)} tasks")
        if task_id is None:
            self._ids += 1
            task_id = self._ids
        self.pending.append(QueuedTask(task_id, payload, owner))
        return task_id

    @property
    def queue_length(self):
        return len(self.pending)

    # workers

    def register(self, slots=1, now=0.0, worker_id=None):
        if worker_id is None or worker_id in self.workers:
            self._wids += 1
            worker_id = f"w{self._wids}"
        w = WorkerRegistration(worker_id, int(slots), now, IDLE, now)
        self.workers[worker_id] = w
        self._free.extend([worker_id] * w.slots)
        return worker_id

    def deregister(self, worker_id):
        """Remove a worker; its in-flight tasks go back to the queue head."""
        w = self.workers.get(worker_id)
        if w is None or w.state == DEREGISTERED:
            return []
        back = list(w.inflight)
        w.inflight.clear()
        w.state = DEREGISTERED
        for tid in reversed(back):
            qt, _ = self.dispatched.pop(tid)
            self.pending.appendleft(qt)
            self.requeues += 1
        return back

    worker_lost = deregister

    def free_slots(self):
        return sum(w.free for w in self.workers.values())

    def live_workers(self):
        return [w for w in self.workers.values() if w.state != DEREGISTERED]

    # dispatch

    def assign(self, limit=None):
        """Pair queued tasks (FIFO) with free worker slots; returns
        [(QueuedTask, worker id)] and marks them dispatched."""
        out = []
        free = self._free
        while self.pending and free and (limit is None or len(out) < limit):
            wid = free.popleft()
            w = self.workers.get(wid)
            if w is None or w.state not in (IDLE, BUSY) or len(w.inflight) >= w.slots:
                continue
            qt = self.pending.popleft()
            qt.attempts += 1
            w.inflight.append(qt.task_id)
            w.state = BUSY
            self.dispatched[qt.task_id] = (qt, wid)
            self.dispatch_count += 1
            out.append((qt, wid))
        return out

    def complete(self, task_id, worker_id, ok=True, now=None):
        """Record a result. Returns the QueuedTask the first time a task
        finishes, None for a stale or duplicate report."""
        entry = self.dispatched.get(task_id)
        if entry is None or entry[1] != worker_id:
            self.duplicates += 1
            return None
        qt, _ = self.dispatched.pop(task_id)
        w = self.workers.get(worker_id)
        if w is not None and task_id in w.inflight:
            w.inflight.remove(task_id)
            if w.state in (IDLE, BUSY):
                self._free.append(worker_id)
                if not w.inflight:
                    w.state = IDLE
                    w.idle_since = now if now is not None else w.idle_since
        if ok:
            if task_id in self.succeeded:
                self.duplicates += 1
                return None
            self.succeeded.add(task_id)
        self.finished += 1
        if now is not None:
            if self._last_done is not None and now > self._last_done:
                rate = 1.0 / (now - self._last_done)
                self.ewma = 0.9 * self.ewma + 0.1 * rate
            self._last_done = now
        return qt

    # liveness

    def heartbeat(self, worker_id, now):
        w = self.workers.get(worker_id)
        if w is None or w.state == DEREGISTERED:
            return False
        w.last_heartbeat = now
        if w.state == SUSPECT:
            w.state = BUSY if w.inflight else IDLE
            self._free.extend([worker_id] * w.free)
        return True

    def check_liveness(self, now):
        """Mark silent workers suspect, drop those silent too long. Returns
        the ids of workers dropped (their tasks are requeued)."""
        lost = []
        for w in list(self.workers.values()):
            if w.state == DEREGISTERED:
                continue
            missed = (now - w.last_heartbeat) / self.heartbeat_s
            if missed >= LOST_AFTER:
                self.deregister(w.worker_id)
                lost.append(w.worker_id)
            elif missed >= SUSPECT_AFTER and w.state != SUSPECT:
                w.state = SUSPECT
        return lost

    def stats(self):
        return {"queue_length": len(self.pending), "dispatched": len(self.dispatched),
                "dispatch_count": self.dispatch_count, "completions": self.finished,
                "successes": len(self.succeeded), "duplicates": self.duplicates,
                "requeues": self.requeues, "workers": len(self.live_workers()),
                "free_slots": self.free_slots(), "throughput_ewma": round(self.ewma, 3)}

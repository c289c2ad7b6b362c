"""The abstract provider interface and the job records it exchanges."""

from dataclasses import dataclass, field
from typing import Optional

from ..errors import UnknownJob, UnsupportedCapability

QUEUED, RUNNING, COMPLETED, FAILED, CANCELLED = "queued", "running", "completed", "failed", "cancelled"


@dataclass
class JobSpec:
    """One provider job. ``args`` and stage paths are sandbox-relative names;
    ``stage_in`` pairs are (source path, relative name) and ``stage_out`` pairs
    are (relative name, destination path)."""

    job_id: str
    executable: str
    args: list = field(default_factory=list)
    sandbox_dir: Optional[str] = None
    stage_in: list = field(default_factory=list)
    stage_out: list = field(default_factory=list)
    stdin: Optional[str] = None
    stdout: Optional[str] = None
    stderr: Optional[str] = None
    duration: Optional[float] = None
    host_hint: Optional[str] = None
    env: dict = field(default_factory=dict)
    # a bundle carries its member jobs and runs them one after another
    members: list = field(default_factory=list)
    task_id: Optional[int] = None
    attempt: int = 0

    @property
    def is_bundle(self):
        return bool(self.members)

    def total_duration(self):
        if self.members:
            return sum(m.duration or 0.0 for m in self.members)
        return self.duration or 0.0


@dataclass
class JobStatus:
    phase: str = QUEUED
    exit_code: Optional[int] = None
    signal: Optional[int] = None
    reason: Optional[str] = None
    host: Optional[str] = None
    submit_time: Optional[float] = None
    start_time: Optional[float] = None
    end_time: Optional[float] = None
    usage: dict = field(default_factory=dict)
    error_class: Optional[str] = None  # transient | host | None
    stderr_tail: str = ""
    sandbox: Optional[str] = None
    members: list = field(default_factory=list)

    @property
    def ok(self):
        return self.phase == COMPLETED and self.exit_code == 0


class Provider:
    """Base class: ``submit`` is non-blocking and completion is delivered by
    calling the sink given to :meth:`attach` on the engine loop."""

    name = "provider"
    capabilities = frozenset()

    def __init__(self, site_id="site"):
        self.site_id = site_id
        self.loop = None
        self.sink = None
        self.jobs = {}

    def attach(self, loop, sink):
        self.loop = loop
        self.sink = sink

    def submit(self, job):
        raise NotImplementedError

    def status(self, job_id):
        try:
            return self.jobs[job_id]
        except KeyError:
            raise UnknownJob(job_id) from None

    def cancel(self, job_id):
        raise UnsupportedCapability(f"{self.name} cannot cancel")

    def suspend(self, job_id):
        raise UnsupportedCapability(f"{self.name} cannot suspend jobs")

    def resume(self, job_id):
        raise UnsupportedCapability(f"{self.name} cannot resume jobs")

    def hosts(self):
        return [self.site_id]

    def close(self):
        pass

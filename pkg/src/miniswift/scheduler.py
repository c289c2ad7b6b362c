"""Site selection, clustering and failure handling.

The scheduler lives inside the engine loop. Ready tasks are either submitted
at once or, with clustering on, collected for one window and submitted as
bundles. Each site carries a score that grows on success and shrinks on
failure; a task goes to a valid site with probability proportional to score.
"""

import math
from collections import deque
from dataclasses import dataclass, field

from .errors import NoValidSite

RETRY_SAME_SITE = "retry-same-site"
RESCHEDULE_OTHER_SITE = "reschedule-other-site"
SUSPEND_HOST_AND_REQUEUE = "suspend-host-and-requeue"
FAIL_PERMANENT = "fail-permanent"

TRANSIENT = "transient"
HOST_ERROR = "host"


@dataclass
class SiteRecord:
    site_id: str
    score: float = 1.0
    throttle: int = 1000
    apps: set = field(default_factory=set)
    jobs_in_flight: int = 0
    suspended_hosts: dict = field(default_factory=dict)  # host -> resume time
    provider: object = None
    submitted: int = 0
    succeeded: int = 0
    failed: int = 0

    def has_app(self, exe):
        return not self.apps or exe in self.apps

    def usable_hosts(self, now):
        if self.provider is None:
            return [self.site_id]
        return [h for h in self.provider.hosts() if self.suspended_hosts.get(h, -1.0) <= now]

    def valid_for(self, exes, now):
        return (self.jobs_in_flight < self.throttle and all(self.has_app(e) for e in exes)
                and bool(self.usable_hosts(now)))


@dataclass
class Bundle:
    bundle_id: int
    members: list
    site: object = None


@dataclass
class FailureDecision:
    action: str
    site: str = None
    host: str = None


def select_site(exes, sites, rng, now=0.0, exclude=(), pin=None):
    """Pick a site id with probability proportional to score among valid sites."""
    valid = [s for s in sites if s.valid_for(exes, now)]
    if pin is not None:
        pinned = [s for s in valid if s.site_id == pin]
        if pinned:
            return pinned[0].site_id
    if exclude:
        others = [s for s in valid if s.site_id not in exclude]
        if others:
            valid = others
    if not valid:
        raise NoValidSite(f"no valid site for {sorted(set(exes))}")
    if len(valid) == 1:
        return valid[0].site_id
    total = sum(s.score for s in valid)
    x = rng.random() * total
    acc = 0.0
    for s in valid:
        acc += s.score
        if x < acc:
            return s.site_id
    return valid[-1].site_id


def update_score(site, success, up=1.05, down=0.8, bounds=(0.1, 10.0)):
    lo, hi = bounds
    if success:
        site.score = min(site.score * up, hi)
    else:
        site.score = max(site.score * down, lo)
    return site.score


def cluster(arrivals, window, cap):
    """Offline form of the clustering window.

    ``arrivals`` is a list of (ready time, task). A window opens at the first
    arrival not yet bundled and closes ``window`` seconds later; everything
    that arrived by then is split, in arrival order, into bundles of at most
    ``cap``.
    """
    cap = max(1, int(cap))
    items = sorted(arrivals, key=lambda a: a[0])
    bundles = []
    i = 0
    while i < len(items):
        close = items[i][0] + window
        j = i
        while j < len(items) and items[j][0] <= close:
            j += 1
        batch = [t for _, t in items[i:j]]
        for k in range(0, len(batch), cap):
            bundles.append(Bundle(len(bundles), batch[k:k + cap]))
        i = j
    return bundles


def handle_failure(attempt, error_class, streak, max_retries=3, k=3, other_sites=0,
                   site=None, host=None):
    """Decide what happens after a failed attempt.

    ``attempt`` is the 0-based number of the attempt that failed and
    ``streak`` the number of consecutive failures of this task on ``site``
    (including this one).
    """
    if attempt >= max_retries:
        return FailureDecision(FAIL_PERMANENT, site, host)
    if streak >= k and other_sites > 0:
        return FailureDecision(RESCHEDULE_OTHER_SITE, site, host)
    if error_class == HOST_ERROR:
        return FailureDecision(SUSPEND_HOST_AND_REQUEUE, site, host)
    return FailureDecision(RETRY_SAME_SITE, site, host)


def classify(status, patterns=("Stale NFS handle",)):
    """transient | host for a failed job status."""
    if status.error_class:
        return status.error_class
    tail = status.stderr_tail or ""
    reason = status.reason or ""
    for p in patterns:
        if p in tail or p in reason:
            return HOST_ERROR
    return TRANSIENT


def binomial_interval(n, p, sigmas=3.0):
    mu = n * p
    sd = math.sqrt(n * p * (1 - p))
    return mu - sigmas * sd, mu + sigmas * sd


class Scheduler:
    """Queues ready tasks, forms bundles, submits to providers, and applies
    the failure policy to completed attempts."""

    def __init__(self, engine, sites, cfg, rng):
        self.engine = engine
        self.loop = engine.loop
        self.sites = sites
        self.by_id = {s.site_id: s for s in sites}
        self.cfg = cfg
        self.rng = rng
        self.parked = deque()  # units waiting for a valid site
        self.buffer = []
        self._flush_timer = None
        self._wake = None
        self.bundles = 0
        self.jobs = 0
        self.decisions = []
        self.dispatch_log = []  # (time, site, host, task ids)
        self.host_log = []
        self._job_seq = 0
        for s in sites:
            s.provider.attach(self.loop, self._on_complete)

    # intake

    def enqueue(self, task):
        if self.cfg.clustering and self.cfg.cluster_cap > 1:
            if not self.buffer:
                self._flush_timer = self.loop.call_later(self.cfg.cluster_window_s, self._flush)
            self.buffer.append(task)
        else:
            self.parked.append([task])
            self._dispatch()

    def _flush(self):
        batch, self.buffer = self.buffer, []
        self._flush_timer = None
        cap = self.cfg.cluster_cap
        for k in range(0, len(batch), cap):
            self.parked.append(batch[k:k + cap])
        self._dispatch()

    # dispatch

    def _dispatch(self):
        parked = self.parked
        if not parked:
            return
        now = self.loop.now()
        still = deque()
        while parked:
            if not any(s.jobs_in_flight < s.throttle for s in self.sites):
                break
            unit = parked.popleft()
            exes = [t.proc.executable for t in unit]
            head = unit[0]
            try:
                sid = select_site(exes, self.sites, self.rng, now, exclude=head.exclude_sites or (),
                                  pin=head.pin_site)
            except NoValidSite as e:
                if not any(all(s.has_app(x) for x in exes) for s in self.sites):
                    self.engine.no_site([unit], str(e))
                else:
                    still.append(unit)
                continue
            self._submit(unit, self.by_id[sid])
        if still:
            still.extend(parked)
            self.parked = still
        if self.parked:
            self._schedule_wake(now)

    def _schedule_wake(self, now):
        # suspended hosts come back at known times; poll then
        times = [t for s in self.sites for t in s.suspended_hosts.values() if t > now]
        if times and self._wake is None:
            self._wake = self.loop.call_at(min(times), self._on_wake)
        elif not times and not any(s.jobs_in_flight for s in self.sites) and self._wake is None:
            exes = sorted({t.proc.executable for u in self.parked for t in u})
            self.engine.no_site(self.parked, f"no site can run {exes}")
            self.parked = deque()

    def _on_wake(self):
        self._wake = None
        self._dispatch()

    def _submit(self, unit, site):
        now = self.loop.now()
        self._job_seq += 1
        host = None
        usable = site.usable_hosts(now)
        if site.suspended_hosts and usable:
            host = usable[0]
        members = [self.engine.build_job(t, site) for t in unit]
        if len(members) == 1:
            job = members[0]
            job.host_hint = host
        else:
            job = members[0].__class__(job_id=f"b{self._job_seq}", executable="bundle",
                                       members=members, host_hint=host)
            self.bundles += 1
        self.jobs += 1
        job._units = unit
        job._site = site
        site.jobs_in_flight += 1
        site.submitted += len(unit)
        for t in unit:
            t.state = "submitted"
            t.site = site.site_id
            t.submit_t = now
        self.dispatch_log.append((now, site.site_id, [t.id for t in unit]))
        self.loop.outstanding += 1
        site.provider.submit(job)

    # completion

    def _on_complete(self, job, status):
        self.loop.outstanding -= 1
        site = job._site
        site.jobs_in_flight -= 1
        unit = job._units
        if job.members:
            statuses = status.members or [status] * len(unit)
            pairs = list(zip(unit, job.members, statuses))
        else:
            pairs = [(unit[0], job, status)]
        for task, mjob, mstatus in pairs:
            self.host_log.append((mstatus.start_time, mstatus.host, task.id))
            ok = self.engine.attempt_finished(task, mjob, mstatus, site)
            update_score(site, ok, self.cfg.score_up, self.cfg.score_down, self.cfg.score_bounds)
            if ok:
                site.succeeded += 1
                task.fail_streak = 0
            else:
                site.failed += 1
                self._failed(task, mstatus, site)
        self._dispatch()

    def _failed(self, task, status, site):
        if task.fail_site == site.site_id:
            task.fail_streak += 1
        else:
            task.fail_site = site.site_id
            task.fail_streak = 1
        err = classify(status, self.cfg.host_error_patterns)
        others = sum(1 for s in self.sites if s is not site and all(
            s.has_app(e) for e in (task.proc.executable,)))
        d = handle_failure(task.attempt, err, task.fail_streak, self.cfg.max_retries,
                           self.cfg.site_failure_threshold_k, others, site.site_id, status.host)
        self.decisions.append((task.id, task.attempt, d.action))
        if d.action == FAIL_PERMANENT:
            self.engine.task_failed(task, status.reason or f"exit {status.exit_code}")
            return
        task.attempt += 1
        task.pin_site = None
        task.exclude_sites = None
        if d.action == RETRY_SAME_SITE:
            task.pin_site = site.site_id
        elif d.action == RESCHEDULE_OTHER_SITE:
            task.exclude_sites = (site.site_id,)
            task.fail_streak = 0
            task.fail_site = None
        elif d.action == SUSPEND_HOST_AND_REQUEUE and status.host is not None:
            site.suspended_hosts[status.host] = self.loop.now() + self.cfg.suspend_seconds
            if hasattr(site.provider, "suspend_host"):
                site.provider.suspend_host(status.host, self.loop.now() + self.cfg.suspend_seconds)
        task.state = "ready"
        self.enqueue(task)

    def idle(self):
        return not self.parked and not self.buffer and not any(s.jobs_in_flight for s in self.sites)

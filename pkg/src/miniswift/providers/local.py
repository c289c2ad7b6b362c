"""Local execution: one sandbox directory per job, a bounded thread pool.

A job's stage-ins are hard-linked (or copied) into its sandbox, the command
runs with the sandbox as working directory, and declared outputs are copied
to their destinations. Executables are looked up in the site's app map, then
on PATH; anything else runs the deterministic stub.
"""

import os
import shutil
import socket
import subprocess
import sys
import time
from concurrent.futures import ThreadPoolExecutor

from ..errors import StageInMissing
from .base import COMPLETED, FAILED, QUEUED, JobStatus, Provider

STDERR_TAIL = 2000


def resolve_command(exe, app_map=None):
    """argv prefix for ``exe``: app map entry, PATH lookup, or the stub."""
    if app_map and exe in app_map:
        target = app_map[exe]
        return list(target) if isinstance(target, (list, tuple)) else [target]
    found = shutil.which(exe)
    if found:
        return [found]
    return [sys.executable, "-m", "miniswift.stub", exe]


def _stage_in(src, dest):
    d = os.path.dirname(dest)
    if d:
        os.makedirs(d, exist_ok=True)
    try:
        os.link(src, dest)
    except OSError:
        shutil.copy2(src, dest)


def _copy_out(src, dest):
    d = os.path.dirname(dest)
    if d:
        os.makedirs(d, exist_ok=True)
    tmp = f"{dest}.part{os.getpid()}"
    shutil.copyfile(src, tmp)
    os.replace(tmp, dest)


def _tail(path):
    try:
        with open(path, "rb") as f:
            f.seek(0, os.SEEK_END)
            n = f.tell()
            f.seek(max(0, n - STDERR_TAIL))
            return f.read().decode("utf-8", "replace")
    except OSError:
        return ""


def run_local(job, app_map=None, keep_sandbox=False, host=None):
    """Run one (non-bundle) job synchronously and return its JobStatus."""
    host = host or socket.gethostname()
    st = JobStatus(phase=QUEUED, host=host, sandbox=job.sandbox_dir, submit_time=time.time())
    sandbox = job.sandbox_dir
    try:
        os.makedirs(sandbox, exist_ok=False)
    except FileExistsError:
        st.phase, st.reason = FAILED, f"sandbox {sandbox} already exists"
        return st
    try:
        for src, rel in job.stage_in:
            if not os.path.exists(src):
                raise StageInMissing(src)
            _stage_in(src, os.path.join(sandbox, rel))
        for rel, _ in job.stage_out:
            d = os.path.dirname(os.path.join(sandbox, rel))
            os.makedirs(d, exist_ok=True)
    except StageInMissing as e:
        st.phase, st.reason = FAILED, f"stage-in missing: {e}"
        return st
    except OSError as e:
        st.phase, st.reason = FAILED, f"stage-in failed: {e}"
        return st
    argv = resolve_command(job.executable, app_map) + [str(a) for a in job.args]
    env = dict(os.environ)
    env.update(job.env or {})
    out_path = job.stdout or os.path.join(sandbox, "stdout.txt")
    err_path = job.stderr or os.path.join(sandbox, "stderr.txt")
    st.start_time = time.time()
    try:
        with open(out_path, "wb") as fo, open(err_path, "wb") as fe:
            fi = open(job.stdin, "rb") if job.stdin else subprocess.DEVNULL
            try:
                p = subprocess.Popen(argv, cwd=sandbox, stdin=fi, stdout=fo, stderr=fe, env=env)
                _, status, ru = os.wait4(p.pid, 0)
                p.returncode = os.waitstatus_to_exitcode(status)
            finally:
                if fi is not subprocess.DEVNULL:
                    fi.close()
    except OSError as e:
        st.end_time = time.time()
        st.phase, st.reason = FAILED, f"spawn failed: {e}"
        return st
    st.end_time = time.time()
    st.usage = {"user_time": ru.ru_utime, "system_time": ru.ru_stime, "max_rss_kb": ru.ru_maxrss}
    st.phase = COMPLETED
    if p.returncode < 0:
        st.signal = -p.returncode
        st.reason = f"killed by signal {st.signal}"
    else:
        st.exit_code = p.returncode
        if p.returncode:
            st.reason = f"exit {p.returncode}"
    st.stderr_tail = _tail(err_path)
    if st.ok:
        for rel, dest in job.stage_out:
            src = os.path.join(sandbox, rel)
            if not os.path.exists(src):
                st.phase, st.reason = FAILED, f"stage-out missing: {rel}"
                break
            try:
                _copy_out(src, dest)
            except OSError as e:
                st.phase, st.reason = FAILED, f"stage-out failed: {e}"
                break
    if st.ok and not keep_sandbox:
        shutil.rmtree(sandbox, ignore_errors=True)
    return st


class LocalProvider(Provider):
    name = "local"

    def __init__(self, site_id="local", max_parallel=4, keep_sandbox=False, apps=None):
        super().__init__(site_id)
        self.max_parallel = int(max_parallel)
        self.keep_sandbox = keep_sandbox
        self.app_map = dict(apps or {})
        self.host = socket.gethostname()
        self.pool = None

    def submit(self, job):
        self.jobs[job.job_id] = JobStatus(phase=QUEUED, submit_time=time.time())
        post = getattr(self.loop, "post_threadsafe", None)
        if post is None:
            # a virtual loop has no other threads: run inline, deliver via the queue
            self.loop.post(self.sink, job, self._run(job))
            return job.job_id
        if self.pool is None:
            self.pool = ThreadPoolExecutor(max_workers=self.max_parallel, thread_name_prefix="local-job")
        fut = self.pool.submit(self._run, job)
        fut.add_done_callback(lambda f: post(self.sink, job, _result(f)))
        return job.job_id

    def _run(self, job):
        if not job.members:
            st = run_local(job, self.app_map, self.keep_sandbox, self.host)
        else:
            # members run one after another; each keeps its own exit status
            st = JobStatus(phase=COMPLETED, host=self.host, start_time=time.time())
            st.members = [run_local(m, self.app_map, self.keep_sandbox, self.host) for m in job.members]
            st.end_time = time.time()
            st.exit_code = 0 if all(m.ok for m in st.members) else 1
        self.jobs[job.job_id] = st
        return st

    def hosts(self):
        return [self.host]

    def close(self):
        if self.pool is not None:
            self.pool.shutdown(wait=True)
            self.pool = None


def _result(fut):
    try:
        return fut.result()
    except Exception as e:  # a provider bug must not hang the engine
        return JobStatus(phase=FAILED, reason=f"provider error: {e!r}")

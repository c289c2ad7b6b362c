"""The worker side: register, heartbeat, run what the service sends.

``noop`` is handled inside the worker (no process is started), which is what
the dispatcher throughput measurements use. Anything else runs through the
local sandbox runner on a thread. ``crash_rate`` makes the worker drop its
connection on receipt of a task, as if the node died mid-task; it then
re-registers under a fresh id.
"""

import asyncio
import random
import socket
import time

from ..providers.base import JobSpec
from ..providers.local import run_local
from . import protocol as M


class Worker:
    def __init__(self, host, port, slots=1, heartbeat_s=None, crash_rate=0.0, seed=0,
                 app_map=None, backoff=(0.05, 2.0), max_attempts=None):
        self.host = host
        self.port = port
        self.slots = slots
        self.heartbeat_s = heartbeat_s
        self.crash_rate = crash_rate
        self.rng = random.Random(seed)
        self.app_map = app_map
        self.backoff = backoff
        self.max_attempts = max_attempts
        self.hostname = socket.gethostname()
        self.worker_id = None
        self.stopped = False
        self.executed = 0
        self.crashes = 0
        self.registrations = 0

    def stop(self):
        self.stopped = True

    async def run(self):
        delay = self.backoff[0]
        attempts = 0
        while not self.stopped:
            try:
                reader, writer = await asyncio.open_connection(self.host, self.port)
            except OSError:
                attempts += 1
                if self.max_attempts is not None and attempts >= self.max_attempts:
                    return
                await asyncio.sleep(delay)
                delay = min(delay * 2, self.backoff[1])
                continue
            delay = self.backoff[0]
            attempts = 0
            try:
                await self._session(reader, writer)
            except (ConnectionError, asyncio.IncompleteReadError, M.ProtocolError):
                pass
            finally:
                writer.close()

    async def _session(self, reader, writer):
        writer.write(M.encode(M.REGISTER, slots=self.slots, host=self.hostname))
        await writer.drain()
        line = await reader.readline()
        if not line:
            return
        reg = M.decode(line)
        self.worker_id = reg.get("worker_id")
        self.registrations += 1
        hb = self.heartbeat_s or reg.get("heartbeat_s", 5.0)
        beat = asyncio.ensure_future(self._heartbeat(writer, hb))
        running = set()
        try:
            while not self.stopped:
                line = await reader.readline()
                if not line:
                    return
                msg = M.decode(line)
                if msg["type"] == M.TASK:
                    if self.crash_rate and self.rng.random() < self.crash_rate:
                        self.crashes += 1
                        writer.transport.abort()
                        return
                    t = asyncio.ensure_future(self._execute(msg, writer))
                    running.add(t)
                    t.add_done_callback(running.discard)
                elif msg["type"] == M.BYE:
                    self.stopped = True
                    return
        finally:
            beat.cancel()
            for t in running:
                t.cancel()

    async def _heartbeat(self, writer, interval):
        while True:
            await asyncio.sleep(interval)
            writer.write(M.encode(M.HEARTBEAT, worker_id=self.worker_id))

    async def _execute(self, msg, writer):
        t0 = time.monotonic()
        exe = msg.get("exe", "noop")
        code, reason, sig = 0, None, None
        if exe != "noop":
            job = JobSpec(job_id=str(msg["task_id"]), executable=exe, args=msg.get("args", []),
                          sandbox_dir=msg.get("dir"), stage_in=[tuple(p) for p in msg.get("stageins", [])],
                          stage_out=[tuple(p) for p in msg.get("stageouts", [])], env=msg.get("env") or {})
            st = await asyncio.to_thread(run_local, job, self.app_map, False, self.hostname)
            code, reason, sig = st.exit_code, st.reason, st.signal
            if code is None and sig is None:
                code = -1
        self.executed += 1
        dur = round((time.monotonic() - t0) * 1000.0, 3)
        if not writer.is_closing():
            writer.write(M.result_message(msg["task_id"], code, dur, self.hostname, reason, sig))


def run_worker(host, port, slots=1, **kw):
    """Blocking entry point used by the CLI."""
    w = Worker(host, port, slots, **kw)
    try:
        asyncio.run(w.run())
    except KeyboardInterrupt:
        pass
    return 0

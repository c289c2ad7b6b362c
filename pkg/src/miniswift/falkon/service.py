"""The Falkon-style dispatch service over TCP (asyncio).

Connections are either workers (first message REGISTER) or clients (first
message SUBMIT or STATS). All state lives in one :class:`FalkonCore`; the
connection handlers run on a single event loop, so the core is only ever
touched from that loop.
"""

import asyncio
import os
import subprocess
import sys
import time
from collections import Counter

from ..errors import QueueFull
from . import protocol as M
from .core import DEFAULT_QUEUE_BOUND, HEARTBEAT_S, FalkonCore, ProvisionerPolicy, deregister_idle, provision

# a SUBMIT line may carry many tasks
MAX_LINE = 64 * 1024 * 1024


class SpawnLocalAllocator:
    """Starts worker processes on this machine."""

    def __init__(self, slots=1, extra_args=()):
        self.slots = slots
        self.extra_args = list(extra_args)
        self.procs = []

    def allocate(self, n, host, port):
        for _ in range(n):
            cmd = [sys.executable, "-m", "miniswift", "falkon", "worker", "--connect",
                   f"{host}:{port}", "--slots", str(self.slots)] + self.extra_args
            self.procs.append(subprocess.Popen(cmd, stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL))
        return n

    def close(self):
        for p in self.procs:
            if p.poll() is None:
                p.terminate()
        for p in self.procs:
            try:
                p.wait(timeout=5)
            except subprocess.TimeoutExpired:
                p.kill()


class FalkonService:
    def __init__(self, host="127.0.0.1", port=0, policy=None, heartbeat_s=HEARTBEAT_S,
                 queue_bound=DEFAULT_QUEUE_BOUND, allocator=None):
        self.host = host
        self.port = port
        self.policy = policy or ProvisionerPolicy()
        self.core = FalkonCore(queue_bound, heartbeat_s)
        self.heartbeat_s = heartbeat_s
        self.allocator = allocator
        self.requested_nodes = 0
        self.writers = {}  # worker id -> StreamWriter
        self.messages = Counter()  # by type, application traffic in both directions
        self.server = None
        self._bg = []
        self._t0 = time.monotonic()

    def now(self):
        return time.monotonic() - self._t0

    async def start(self):
        self.server = await asyncio.start_server(self._handle, self.host, self.port,
                                                 limit=MAX_LINE)
        self.port = self.server.sockets[0].getsockname()[1]
        self._bg.append(asyncio.ensure_future(self._liveness()))
        if self.allocator is not None:
            self._bg.append(asyncio.ensure_future(self._provisioner()))
        return self

    async def serve_forever(self):
        async with self.server:
            await self.server.serve_forever()

    async def stop(self):
        for t in self._bg:
            t.cancel()
        for w in list(self.writers.values()):
            try:
                w.write(M.encode(M.BYE))
                w.close()
            except Exception:  # already gone
                pass
        if self.server is not None:
            self.server.close()
            await self.server.wait_closed()
        if self.allocator is not None:
            self.allocator.close()

    # accounting

    def app_messages(self):
        """TASK + RESULT: the per-dispatch application messages."""
        return self.messages[M.TASK] + self.messages[M.RESULT]

    def registration_messages(self):
        return self.messages[M.REGISTER] + self.messages[M.REGISTERED]

    def stats(self):
        s = self.core.stats()
        s["messages"] = dict(self.messages)
        s["requested_nodes"] = self.requested_nodes
        return s

    # connections

    async def _handle(self, reader, writer):
        try:
            line = await reader.readline()
            if not line:
                return
            msg = M.decode(line)
            if msg["type"] == M.REGISTER:
                await self._worker_session(msg, reader, writer)
            else:
                await self._client_session(msg, reader, writer)
        except (ValueError, ConnectionError, asyncio.IncompleteReadError):
            pass
        finally:
            try:
                writer.close()
            except Exception:  # already closed
                pass

    async def _worker_session(self, msg, reader, writer):
        self.messages[M.REGISTER] += 1
        wid = self.core.register(msg.get("slots", 1), self.now(), msg.get("worker_id"))
        self.writers[wid] = writer
        writer.write(M.encode(M.REGISTERED, worker_id=wid, heartbeat_s=self.heartbeat_s))
        self.messages[M.REGISTERED] += 1
        self._pump()
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                msg = M.decode(line)
                kind = msg["type"]
                if kind == M.RESULT:
                    self.messages[M.RESULT] += 1
                    self._on_result(wid, msg)
                elif kind == M.HEARTBEAT:
                    self.messages[M.HEARTBEAT] += 1
                    self.core.heartbeat(wid, self.now())
                elif kind == M.BYE:
                    break
        finally:
            self.writers.pop(wid, None)
            self.core.deregister(wid)
            self._pump()

    def _on_result(self, wid, msg):
        ok = msg.get("exit") == 0
        qt = self.core.complete(msg["task_id"], wid, ok, self.now())
        if qt is not None and qt.owner is not None:
            owner, client_id = qt.owner
            try:
                owner.write(M.encode(M.DONE, task_id=client_id, exit=msg.get("exit"),
                                     duration_ms=msg.get("duration_ms"), host=msg.get("host"),
                                     worker_id=wid, reason=msg.get("reason"), signal=msg.get("signal")))
            except Exception:  # client went away; the result is still counted
                pass
        self._pump()

    async def _client_session(self, msg, reader, writer):
        while True:
            kind = msg["type"]
            if kind == M.SUBMIT:
                ids = []
                try:
                    for t in msg.get("tasks", []):
                        ids.append(self.core.enqueue(t, owner=(writer, t.get("task_id"))))
                except QueueFull as e:
                    writer.write(M.encode(M.ERROR, reason=str(e), accepted=ids))
                else:
                    writer.write(M.encode(M.ACK, task_ids=ids))
                self._pump()
            elif kind == M.STATS:
                writer.write(M.encode(M.STATS, **self.stats()))
            elif kind == M.BYE:
                return
            await writer.drain()
            line = await reader.readline()
            if not line:
                return
            msg = M.decode(line)

    def _pump(self):
        for qt, wid in self.core.assign():
            w = self.writers.get(wid)
            t = qt.payload
            if w is None:
                self.core.deregister(wid)
                continue
            w.write(M.task_message(qt.task_id, t.get("exe", "noop"), t.get("args", ()), t.get("dir"),
                                   t.get("stageins", ()), t.get("stageouts", ()), t.get("env")))
            self.messages[M.TASK] += 1

    async def _liveness(self):
        while True:
            await asyncio.sleep(self.heartbeat_s)
            lost = self.core.check_liveness(self.now())
            for wid in lost:
                w = self.writers.pop(wid, None)
                if w is not None:
                    w.close()
            if lost:
                self._pump()

    async def _provisioner(self):
        while True:
            await asyncio.sleep(self.policy.period_s)
            live = len(self.core.live_workers())
            current = max(live, self.requested_nodes)
            n = provision(self.core.queue_length, self.core.free_slots(), self.policy, current)
            if n:
                self.requested_nodes = current + self.allocator.allocate(n, self.host, self.port)
            for wid in deregister_idle(self.core.live_workers(), self.now(), self.policy):
                w = self.writers.pop(wid, None)
                self.core.deregister(wid)
                self.requested_nodes = max(0, self.requested_nodes - 1)
                if w is not None:
                    w.write(M.encode(M.BYE))
                    w.close()


def serve(host="127.0.0.1", port=0, policy=None, allocator=None, ready=None):
    """Run a service until interrupted (blocking). ``ready(port)`` is called
    once the socket is listening."""

    async def main():
        svc = await FalkonService(host, port, policy, allocator=allocator).start()
        if ready is not None:
            ready(svc.port)
        try:
            await svc.serve_forever()
        finally:
            await svc.stop()

    try:
        asyncio.run(main())
    except KeyboardInterrupt:
        pass
    return 0


def load_policy(path):
    import json

    if not path:
        return ProvisionerPolicy()
    with open(os.path.expanduser(path), encoding="utf-8") as f:
        return ProvisionerPolicy.from_dict(json.load(f))

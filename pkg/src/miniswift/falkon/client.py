"""A small blocking client for the dispatch service (used by the provider
and the throughput benchmark)."""

import queue
import socket
import threading

from . import protocol as M


class FalkonClient:
    def __init__(self, host, port, on_done=None, timeout=30.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.sock.settimeout(None)
        self.rfile = self.sock.makefile("rb")
        self.on_done = on_done
        self.timeout = timeout
        self._send_lock = threading.Lock()
        self._replies = queue.Queue()
        self._done = threading.Condition()
        self.results = []
        self.closed = False
        self._reader = threading.Thread(target=self._read_loop, name="falkon-client", daemon=True)
        self._reader.start()

    def _send(self, data):
        with self._send_lock:
            self.sock.sendall(data)

    def _read_loop(self):
        try:
            for line in self.rfile:
                msg = M.decode(line)
                if msg["type"] == M.DONE:
                    if self.on_done is not None:
                        self.on_done(msg)
                    with self._done:
                        self.results.append(msg)
                        self._done.notify_all()
                else:
                    self._replies.put(msg)
        except (OSError, ValueError):
            pass
        finally:
            self.closed = True
            self._replies.put(None)
            with self._done:
                self._done.notify_all()

    def _reply(self):
        msg = self._replies.get(timeout=self.timeout)
        if msg is None:
            raise ConnectionError("service closed the connection")
        return msg

    def submit(self, tasks):
        """Queue task dicts (exe, args, dir, stageins, stageouts, env, task_id);
        returns the service-side ids."""
        self._send(M.encode(M.SUBMIT, tasks=list(tasks)))
        msg = self._reply()
        if msg["type"] == M.ERROR:
            raise ConnectionError(msg.get("reason"))
        return msg["task_ids"]

    def stats(self):
        self._send(M.encode(M.STATS))
        return self._reply()

    def wait(self, n, timeout=None):
        """Block until ``n`` results have arrived; returns whether they did."""
        with self._done:
            return self._done.wait_for(lambda: len(self.results) >= n or self.closed, timeout)

    def close(self):
        try:
            self._send(M.encode(M.BYE))
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass

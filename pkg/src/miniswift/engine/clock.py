"""Event loops for the engine.

Both loops own a ready queue of ``(fn, args)`` callbacks (shared with the
dataset graph) and a timer heap. The virtual loop jumps time forward to the
next timer when nothing is ready, so simulated runs are fast and exact. The
wall loop also accepts callbacks posted from other threads and blocks on
them while provider work is outstanding.
"""

import heapq
import itertools
import queue
import time
from collections import deque


class _Timer:
    __slots__ = ("when", "fn", "args", "cancelled")

    def __init__(self, when, fn, args):
        self.when = when
        self.fn = fn
        self.args = args
        self.cancelled = False

    def cancel(self):
        self.cancelled = True


class Loop:
    virtual = True

    def __init__(self):
        self.ready = deque()
        self._timers = []
        self._seq = itertools.count()
        self.stopped = False
        self.outstanding = 0  # provider jobs whose completion has not arrived

    def now(self):
        raise NotImplementedError

    def call_at(self, when, fn, *args):
        t = _Timer(when, fn, args)
        heapq.heappush(self._timers, (when, next(self._seq), t))
        return t

    def call_later(self, delay, fn, *args):
        return self.call_at(self.now() + max(0.0, delay), fn, *args)

    def post(self, fn, *args):
        self.ready.append((fn, args))

    def stop(self):
        self.stopped = True

    def _drain(self):
        ready = self.ready
        while ready and not self.stopped:
            fn, args = ready.popleft()
            fn(*args)

    def _next_timer(self):
        timers = self._timers
        while timers and timers[0][2].cancelled:
            heapq.heappop(timers)
        return timers[0][2] if timers else None

    def has_timers(self):
        return self._next_timer() is not None

    def run(self, until=None):
        """Process callbacks and timers until stopped, ``until()`` is true, or
        nothing more can happen. Returns True unless the loop went idle."""
        while not self.stopped:
            self._drain()
            if self.stopped:
                break
            if until is not None and until():
                return True
            if not self._advance():
                return False
        return True


class VirtualLoop(Loop):
    """Discrete-event time: ``now()`` only moves when a timer fires."""

    virtual = True

    def __init__(self, start=0.0):
        super().__init__()
        self._now = start

    def now(self):
        return self._now

    def _advance(self):
        t = self._next_timer()
        if t is None:
            return False
        heapq.heappop(self._timers)
        if t.when > self._now:
            self._now = t.when
        t.fn(*t.args)
        return True


class WallLoop(Loop):
    """Monotonic wall time; ``post_threadsafe`` may be called from any thread."""

    virtual = False

    def __init__(self):
        super().__init__()
        self._inbox = queue.Queue()
        self._t0 = time.monotonic()

    def now(self):
        return time.monotonic() - self._t0

    def post_threadsafe(self, fn, *args):
        self._inbox.put((fn, args))

    def _advance(self):
        while True:
            try:
                while True:
                    self.ready.append(self._inbox.get_nowait())
            except queue.Empty:
                pass
            if self.ready:
                return True
            t = self._next_timer()
            now = self.now()
            if t is not None and t.when <= now:
                heapq.heappop(self._timers)
                t.fn(*t.args)
                return True
            if t is None and self.outstanding <= 0:
                return False
            timeout = None if t is None else max(0.0, t.when - now)
            try:
                self.ready.append(self._inbox.get(timeout=timeout if timeout is not None else 0.5))
                return True
            except queue.Empty:
                continue


def make_loop(mode):
    return VirtualLoop() if mode == "virtual" else WallLoop()

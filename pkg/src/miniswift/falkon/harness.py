"""Run a dispatch service and in-process workers on a background thread.

Used by the throughput benchmark and the tests: the service and its workers
share one asyncio loop on a daemon thread while the caller talks to the
service through a :class:`FalkonClient`, exactly as a remote client would.
"""

import asyncio
import threading

from .service import FalkonService
from .worker import Worker


class LocalFalkon:
    def __init__(self, workers=4, slots=1, crash_rate=0.0, seed=0, policy=None, app_map=None):
        self.n_workers = workers
        self.slots = slots
        self.crash_rate = crash_rate
        self.seed = seed
        self.policy = policy
        self.app_map = app_map
        self.service = None
        self.workers = []
        self._loop = None
        self._stop = None
        self._thread = None
        self._error = None

    @property
    def port(self):
        return self.service.port

    @property
    def endpoint(self):
        return f"127.0.0.1:{self.service.port}"

    def start(self):
        ready = threading.Event()

        async def main():
            try:
                self.service = await FalkonService(policy=self.policy).start()
                self.workers = [Worker("127.0.0.1", self.service.port, self.slots,
                                       crash_rate=self.crash_rate, seed=self.seed + i,
                                       app_map=self.app_map)
                                for i in range(self.n_workers)]
                runs = [asyncio.ensure_future(w.run()) for w in self.workers]
                self._loop = asyncio.get_running_loop()
                self._stop = asyncio.Event()
            except Exception as e:  # reported to the starting thread
                self._error = e
                ready.set()
                return
            ready.set()
            await self._stop.wait()
            for w in self.workers:
                w.stop()
            await self.service.stop()
            for r in runs:
                r.cancel()
            await asyncio.gather(*runs, return_exceptions=True)

        self._thread = threading.Thread(target=lambda: asyncio.run(main()), name="falkon-local",
                                        daemon=True)
        self._thread.start()
        ready.wait()
        if self._error is not None:
            raise self._error
        return self

    def call(self, fn, *args):
        """Run ``fn(*args)`` on the service loop and return its result."""
        import concurrent.futures

        fut = concurrent.futures.Future()

        def run():
            try:
                fut.set_result(fn(*args))
            except Exception as e:
                fut.set_exception(e)

        self._loop.call_soon_threadsafe(run)
        return fut.result(timeout=10)

    def stop(self):
        if self._loop is not None and self._thread.is_alive():
            self._loop.call_soon_threadsafe(self._stop.set)
            self._thread.join(10)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

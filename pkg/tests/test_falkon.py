import asyncio

import pytest

from miniswift.errors import QueueFull
from miniswift.falkon import protocol as M
from miniswift.falkon.client import FalkonClient
from miniswift.falkon.core import (DEREGISTERED, SUSPECT, FalkonCore, ProvisionerPolicy,
                                   WorkerRegistration, deregister_idle, provision)
from miniswift.falkon.harness import LocalFalkon
from miniswift.falkon.service import FalkonService
from miniswift.falkon.worker import Worker


def noops(n):
    return [{"task_id": i, "exe": "noop"} for i in range(n)]


# core

def test_queue_length_tracks_dispatch():
    core = FalkonCore()
    core.enqueue({"exe": "noop"})
    assert core.queue_length == 1
    core.register(1)
    assert len(core.assign()) == 1 and core.queue_length == 0


def test_ten_thousand_complete_exactly_once():
    core = FalkonCore()
    for i in range(10_000):
        core.enqueue(i)
    for _ in range(4):
        core.register(2)
    done = []
    while core.queue_length or core.dispatched:
        for qt, wid in core.assign():
            assert core.complete(qt.task_id, wid, True) is qt
            done.append(qt.payload)
    assert sorted(done) == list(range(10_000))
    assert len(core.succeeded) == 10_000 and core.duplicates == 0


def test_queue_bound():
    core = FalkonCore(queue_bound=2)
    core.enqueue(1)
    core.enqueue(2)
    with pytest.raises(QueueFull):
        core.enqueue(3)


def test_lost_worker_requeues_and_success_counted_once():
    core = FalkonCore()
    tid = core.enqueue("t")
    a = core.register(1)
    (qt, wid), = core.assign()
    assert wid == a
    core.deregister(a)
    assert core.queue_length == 1 and core.requeues == 1
    b = core.register(1)
    (qt2, wid2), = core.assign()
    assert wid2 == b and qt2.attempts == 2
    assert core.complete(tid, a, True) is None  # the lost worker's late report
    assert core.complete(tid, b, True) is qt2
    assert core.complete(tid, b, True) is None
    assert len(core.succeeded) == 1


def test_no_workers_tasks_wait_and_provisioning_asks():
    core = FalkonCore()
    for i in range(5):
        core.enqueue(i)
    assert core.assign() == []
    assert provision(core.queue_length, core.free_slots(), ProvisionerPolicy(), 0) == 5


def test_liveness():
    core = FalkonCore(heartbeat_s=1.0)
    wid = core.register(1, now=0.0)
    core.enqueue("t")
    core.assign()
    assert core.check_liveness(2.0) == [] and core.workers[wid].state == SUSPECT
    assert core.check_liveness(3.5) == [wid]
    assert core.workers[wid].state == DEREGISTERED and core.queue_length == 1


@pytest.mark.parametrize("pending, free, nodes, want", [
    (68, 0, 1, 31),
    (0, 0, 1, 0),
    (10, 10, 1, 0),
    (5, 0, 32, 0),
])
def test_provision(pending, free, nodes, want):
    policy = ProvisionerPolicy(slots_per_node=2, max_workers=32)
    assert provision(pending, free, policy, nodes) == want


def _workers(states):
    out = []
    for i, (idle_since, busy) in enumerate(states):
        w = WorkerRegistration(f"w{i}", 1, 0.0, "busy" if busy else "idle", idle_since)
        if busy:
            w.inflight.append(i)
        out.append(w)
    return out


def test_release_idle_keeps_minimum():
    policy = ProvisionerPolicy(min_workers=1, idle_timeout_s=60)
    assert len(deregister_idle(_workers([(0, False)] * 4), 100.0, policy)) == 3


def test_busy_never_released():
    policy = ProvisionerPolicy(idle_timeout_s=60)
    assert deregister_idle(_workers([(0, True)]), 1000.0, policy) == []


def test_recently_idle_kept():
    policy = ProvisionerPolicy(idle_timeout_s=60)
    assert deregister_idle(_workers([(50, False)] * 3), 100.0, policy) == []


def test_policy_validation():
    with pytest.raises(ValueError):
        ProvisionerPolicy(min_workers=5, max_workers=2)


# protocol

def test_protocol_round_trip():
    line = M.task_message(3, "noop", ["a"], "/tmp/x", [("s", "r")], [("r", "d")])
    msg = M.decode(line)
    assert msg["type"] == M.TASK and msg["stageins"] == [["s", "r"]] and line.endswith(b"\n")
    with pytest.raises(M.ProtocolError):
        M.decode(b"{not json")
    with pytest.raises(M.ProtocolError):
        M.decode(b'{"type": "NOPE"}')
    with pytest.raises(M.ProtocolError):
        M.encode("NOPE")


# service over TCP

def test_one_noop_task():
    with LocalFalkon(workers=1) as fk:
        c = FalkonClient("127.0.0.1", fk.port)
        c.submit(noops(1))
        assert c.wait(1, 10)
        assert c.results[0]["exit"] == 0 and c.results[0]["task_id"] == 0
        c.close()


def test_message_count_one_worker_three_tasks():
    with LocalFalkon(workers=1) as fk:
        c = FalkonClient("127.0.0.1", fk.port)
        c.submit(noops(3))
        assert c.wait(3, 10)
        assert fk.call(fk.service.app_messages) == 6
        assert fk.call(fk.service.registration_messages) == 2
        c.close()


def test_thousand_noops_on_sixteen_slots():
    with LocalFalkon(workers=8, slots=2) as fk:
        c = FalkonClient("127.0.0.1", fk.port)
        c.submit(noops(1000))
        assert c.wait(1000, 30)
        stats = c.stats()
        assert stats["successes"] == 1000 and stats["duplicates"] == 0
        assert sorted(r["task_id"] for r in c.results) == list(range(1000))
        c.close()


def test_crashing_workers_exactly_once():
    with LocalFalkon(workers=4, crash_rate=0.1, seed=3) as fk:
        c = FalkonClient("127.0.0.1", fk.port)
        c.submit(noops(300))
        assert c.wait(300, 30)
        ids = [r["task_id"] for r in c.results]
        assert sorted(ids) == list(range(300))
        crashes = sum(w.crashes for w in fk.workers)
        assert crashes > 0
        stats = c.stats()
        assert stats["successes"] == 300 and stats["requeues"] >= crashes
        c.close()


def test_real_command_through_worker(tmp_path):
    with LocalFalkon(workers=1) as fk:
        c = FalkonClient("127.0.0.1", fk.port)
        c.submit([{"task_id": "x", "exe": "sh", "args": ["-c", "exit 4"], "dir": str(tmp_path / "sb")}])
        assert c.wait(1, 10)
        assert c.results[0]["exit"] == 4
        c.close()


def test_worker_reregisters_after_service_restart():
    async def scenario():
        svc = await FalkonService().start()
        port = svc.port
        w = Worker("127.0.0.1", port, backoff=(0.02, 0.1))
        run = asyncio.ensure_future(w.run())
        for _ in range(100):
            if w.registrations:
                break
            await asyncio.sleep(0.02)
        # a crash: connections drop without a goodbye
        for t in svc._bg:
            t.cancel()
        for wr in list(svc.writers.values()):
            wr.transport.abort()
        svc.server.close()
        await svc.server.wait_closed()
        svc2 = await FalkonService(port=port).start()
        for _ in range(200):
            if w.registrations >= 2:
                break
            await asyncio.sleep(0.02)
        w.stop()
        await svc2.stop()
        run.cancel()
        await asyncio.gather(run, return_exceptions=True)
        return w.registrations

    assert asyncio.run(scenario()) >= 2


def test_engine_over_tcp_service(fmri_dir, tmp_path):
    from miniswift.config import RunConfig, SiteSpec
    from miniswift.engine.engine import evaluate

    from conftest import compile_fixture

    plan = compile_fixture(str(fmri_dir / "fmri2.sws"))
    with LocalFalkon(workers=2, slots=2) as fk:
        cfg = RunConfig(run_dir=str(tmp_path / "run"), base_dir=str(fmri_dir), clock="wall",
                        sites=[SiteSpec("falkon", "falkon", {"connect": fk.endpoint})])
        res = evaluate(plan, cfg)
        app = fk.call(fk.service.app_messages)
    assert res.ok and res.tasks_done == 8
    assert app == 16
    assert (fmri_dir / "fmriddc" / "functional_data" / "sbold1_0001.hdr").exists()

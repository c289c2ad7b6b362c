import os

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from miniswift.config import DurationModel
from miniswift.engine.clock import VirtualLoop, WallLoop
from miniswift.errors import UnknownJob, UnsupportedCapability
from miniswift.providers import make_provider
from miniswift.providers.base import CANCELLED, COMPLETED, JobSpec, Provider
from miniswift.providers.falkonsim import FalkonSimProvider
from miniswift.providers.local import LocalProvider, resolve_command, run_local
from miniswift.providers.simbatch import (SimBatchModel, SimBatchProvider, closed_form_makespan,
                                          simulate_batch)


def job(tmp_path, name, exe, args=(), **kw):
    return JobSpec(job_id=name, executable=exe, args=list(args), sandbox_dir=str(tmp_path / "sb" / name), **kw)


# local

def test_true_exits_zero(tmp_path):
    st_ = run_local(job(tmp_path, "a", "true"))
    assert st_.phase == COMPLETED and st_.exit_code == 0 and st_.ok


def test_exit_code_reported(tmp_path):
    st_ = run_local(job(tmp_path, "a", "seven"), app_map={"seven": ["sh", "-c", "exit 7"]})
    assert (st_.phase, st_.exit_code, st_.ok) == (COMPLETED, 7, False)


def test_killed_reports_signal(tmp_path):
    st_ = run_local(job(tmp_path, "a", "die"), app_map={"die": ["sh", "-c", "kill -9 $$"]})
    assert st_.signal == 9 and st_.exit_code is None


def test_stage_out_copied(tmp_path):
    dest = tmp_path / "final" / "out.hdr"
    st_ = run_local(job(tmp_path, "a", "touch", ["out.hdr"], stage_out=[("out.hdr", str(dest))]))
    assert st_.ok and dest.exists()
    assert not os.path.exists(tmp_path / "sb" / "a")  # sandbox removed on success


def test_keep_sandbox(tmp_path):
    st_ = run_local(job(tmp_path, "a", "true"), keep_sandbox=True)
    assert st_.ok and os.path.isdir(tmp_path / "sb" / "a")


def test_missing_stage_in(tmp_path):
    st_ = run_local(job(tmp_path, "a", "true", stage_in=[(str(tmp_path / "nope"), "in.dat")]))
    assert not st_.ok and "stage-in missing" in st_.reason and st_.start_time is None


def test_stub_fallback(tmp_path):
    assert resolve_command("definitely-not-installed-xyz")[-1] == "definitely-not-installed-xyz"
    src = tmp_path / "in.txt"
    src.write_text("hello")
    dest = tmp_path / "o.txt"
    j = job(tmp_path, "a", "definitely-not-installed-xyz", ["in.txt", "o.txt"],
            stage_in=[(str(src), "in.txt")], stage_out=[("o.txt", str(dest))],
            env={"MINISWIFT_INPUTS": "in.txt", "MINISWIFT_OUTPUTS": "o.txt"})
    assert run_local(j).ok and dest.read_text().startswith("definitely-not-installed-xyz output 0")


def test_concurrent_jobs_use_disjoint_sandboxes(tmp_path):
    loop = WallLoop()
    prov = LocalProvider("local", max_parallel=8, keep_sandbox=True)
    done = []
    prov.attach(loop, lambda j, s: done.append(s))
    for i in range(8):
        loop.outstanding += 1
        prov.submit(job(tmp_path, f"j{i}", "true"))

    def sink_count():
        return len(done) == 8

    loop.run(until=sink_count)
    prov.close()
    assert all(s.ok for s in done)
    assert len({s.sandbox for s in done}) == 8


def test_existing_sandbox_rejected(tmp_path):
    (tmp_path / "sb" / "a").mkdir(parents=True)
    st_ = run_local(job(tmp_path, "a", "true"))
    assert not st_.ok and "already exists" in st_.reason


def test_capabilities():
    p = Provider("x")
    for op in (p.cancel, p.suspend, p.resume):
        with pytest.raises(UnsupportedCapability):
            op("1")
    with pytest.raises(UnknownJob):
        p.status("1")


def test_make_provider():
    assert isinstance(make_provider("simbatch", "s", {"nodes": 2}), SimBatchProvider)
    assert isinstance(make_provider("falkon", "f", {}), FalkonSimProvider)
    assert isinstance(make_provider("local", "l", {}), LocalProvider)
    with pytest.raises(ValueError):
        make_provider("grid", "g", {})


# simbatch

def test_simbatch_serial_dispatch_makespan():
    tr = simulate_batch([(0.0, 50.0)] * 64, SimBatchModel(nodes=64, dispatch_rate=11.0))
    assert tr.makespan == pytest.approx(64 / 11 + 50)
    assert tr.efficiency([50.0] * 64, 64) == pytest.approx(0.896, abs=0.001)


def test_simbatch_infinite_rate_is_ideal():
    tr = simulate_batch([(0.0, 10.0)] * 16, SimBatchModel(nodes=8, dispatch_rate=float("inf")))
    assert tr.makespan == 20.0 and tr.efficiency([10.0] * 16, 8) == 1.0


def test_simbatch_waits_and_setup():
    m = SimBatchModel(nodes=1, dispatch_rate=2.0, queue_wait_base_s=10.0, job_setup_s=5.0,
                      allocation_latency_s=3.0)
    tr = simulate_batch([(0.0, 1.0), (0.0, 1.0)], m)
    # eligible at 10, dispatch 0.5, setup 5, run 1; then the second job
    assert tr.ends[0] == pytest.approx(16.5)
    assert tr.ends[1] == pytest.approx(23.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 60), st.floats(0.1, 40), st.integers(1, 16), st.sampled_from([0.5, 2.0, 11.0, 100.0]))
def test_closed_form_matches_simulation(n, t, nodes, rate):
    tr = simulate_batch([(0.0, t)] * n, SimBatchModel(nodes=nodes, dispatch_rate=rate))
    assert tr.makespan == pytest.approx(closed_form_makespan(n, t, nodes, rate), rel=1e-9, abs=1e-9)


def test_simbatch_cancel_suspend_resume():
    loop = VirtualLoop()
    prov = SimBatchProvider("s", nodes=1, dispatch_rate=1.0, materialize=False)
    done = []
    prov.attach(loop, lambda j, s: done.append((j.job_id, s.phase, loop.now())))
    for i in range(3):
        prov.submit(JobSpec(job_id=str(i), executable="x", duration=10.0))
    assert prov.cancel("1") is True
    prov.suspend("2")
    loop.call_at(50.0, prov.resume, "2")
    loop.run()
    assert done[0][:2] == ("1", CANCELLED)
    assert [d[0] for d in done[1:]] == ["0", "2"]
    assert done[-1][2] == pytest.approx(61.0)
    assert prov.cancel("0") is False


def test_simbatch_queue_bound():
    from miniswift.errors import SubmitRejected

    loop = VirtualLoop()
    prov = SimBatchProvider("s", nodes=1, max_queued=1, materialize=False)
    prov.attach(loop, lambda j, s: None)
    prov.submit(JobSpec(job_id="a", executable="x"))
    with pytest.raises(SubmitRejected):
        prov.submit(JobSpec(job_id="b", executable="x"))


# falkon simulator

def test_falkon_sim_provisions_then_dispatches():
    loop = VirtualLoop()
    prov = FalkonSimProvider("f", workers=4, dispatch_rate=100.0, allocation_latency_s=10.0,
                             materialize=False)
    done = []
    prov.attach(loop, lambda j, s: done.append(s))
    for i in range(8):
        prov.submit(JobSpec(job_id=str(i), executable="x", duration=5.0))
    loop.run()
    assert len(done) == 8 and all(s.ok for s in done)
    assert sum(n for _, n in prov.allocations) == 4
    assert {t for t, _ in prov.allocations} == {0.0}
    assert min(s.start_time for s in done) == pytest.approx(10.01)
    assert max(s.end_time for s in done) == pytest.approx(10.0 + 0.05 + 10.0 + 0.03, abs=0.05)


# durations

def test_duration_model_is_deterministic_per_label():
    a = DurationModel({"default": ["uniform", 3, 9]}, seed=4)
    b = DurationModel({"default": ["uniform", 3, 9]}, seed=4)
    xs = [a.sample(f"t{i}") for i in range(20)]
    assert xs == [b.sample(f"t{i}") for i in reversed(range(20))][::-1]
    assert all(3 <= x <= 9 for x in xs)
    assert DurationModel({"mk": ["constant", 2]}).sample("x", "mk") == 2.0

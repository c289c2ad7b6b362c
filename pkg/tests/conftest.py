import os
import shutil

import pytest

import miniswift
from miniswift.config import RunConfig, SiteSpec
from miniswift.engine.engine import Engine
from miniswift.lang import compile_source, load_program, lower, typecheck

FIXTURES = os.path.join(os.path.dirname(miniswift.__file__), "fixtures")


def fixture_path(*parts):
    return os.path.join(FIXTURES, *parts)


def read_fixture(name):
    with open(fixture_path(name), encoding="utf-8") as f:
        return f.read()


def compile_fixture(path):
    prog, libs = load_program(path)
    return lower(typecheck(prog, libs))


def sim_config(tmp_path, sites=None, **kw):
    """A virtual-clock config rooted in ``tmp_path``."""
    kw.setdefault("base_dir", str(tmp_path))
    cfg = RunConfig(run_dir=str(tmp_path / "run"), **kw)
    cfg.sites = sites or [SiteSpec("sim", "simbatch", {"nodes": 8, "dispatch_rate": "inf"})]
    return cfg


def run_source(source, tmp_path, libraries=(), **kw):
    """Compile and run; returns (engine, result)."""
    plan = compile_source(source, libraries)
    eng = Engine(plan, sim_config(tmp_path, **kw))
    return eng, eng.evaluate()


@pytest.fixture
def fmri_dir(tmp_path):
    """A copy of the two-volume fMRI fixture tree."""
    for name in ("fmri.sws", "fmri2.sws", "fmri_lib.sws"):
        shutil.copy(fixture_path(name), tmp_path / name)
    shutil.copytree(fixture_path("fmriddc"), tmp_path / "fmriddc")
    return tmp_path


@pytest.fixture
def montage_dir(tmp_path):
    for name in ("montage.sws", "montage_run.sws"):
        shutil.copy(fixture_path(name), tmp_path / name)
    shutil.copytree(fixture_path("montage"), tmp_path / "montage")
    return tmp_path


# acceptance results, printed once at the end of the session
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)

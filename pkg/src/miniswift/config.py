"""Run configuration, the sites file, and per-task duration models."""

import json
import os
import random
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

DEFAULT_ENV_ALLOWLIST = ("PATH", "HOST", "HOSTNAME", "USER", "HOME", "LANG", "PWD")


@dataclass
class SiteSpec:
    site_id: str
    provider: str = "simbatch"  # local | simbatch | falkon
    provider_params: dict = field(default_factory=dict)
    throttle: int = 1000
    apps: list = field(default_factory=list)  # empty: every executable is installed
    initial_score: float = 1.0

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class RunConfig:
    run_dir: str = "run"
    sites: list = field(default_factory=list)  # list of SiteSpec
    provider: Optional[str] = None  # override every site's provider kind
    clock: str = "virtual"  # virtual | wall
    seed: int = 0
    pipelining: bool = True
    clustering: bool = False
    cluster_window_s: float = 0.5
    cluster_cap: int = 60
    max_retries: int = 3
    site_failure_threshold_k: int = 3
    suspend_seconds: float = 60.0
    score_up: float = 1.05
    score_down: float = 0.8
    score_bounds: tuple = (0.1, 10.0)
    durations: dict = field(default_factory=dict)
    base_dir: str = "."
    keep_sandbox: bool = False
    full_env: bool = False
    env_allowlist: tuple = DEFAULT_ENV_ALLOWLIST
    host_error_patterns: tuple = ("Stale NFS handle",)
    provenance: bool = True
    restart_log: bool = True
    interrupt_after: Optional[int] = None

    @classmethod
    def from_dict(cls, d, base=None):
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known - {"sites_file"}
        if unknown:
            raise ValueError(f"unknown run config keys: {sorted(unknown)}")
        sites_file = d.pop("sites_file", None)
        if sites_file:
            if base and not os.path.isabs(sites_file):
                sites_file = os.path.join(base, sites_file)
            d["sites"] = load_sites(sites_file)
        else:
            d["sites"] = [s if isinstance(s, SiteSpec) else SiteSpec.from_dict(s) for s in d.get("sites", [])]
        if "score_bounds" in d:
            d["score_bounds"] = tuple(d["score_bounds"])
        for key in ("env_allowlist", "host_error_patterns"):
            if key in d:
                d[key] = tuple(d[key])
        cfg = cls(**d)
        return cfg.with_env()

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f), base=os.path.dirname(os.path.abspath(path)))

    def with_env(self):
        seed = os.environ.get("MINISWIFT_SEED")
        if seed is not None and seed.strip():
            self.seed = int(seed)
        return self

    def to_dict(self):
        d = asdict(self)
        return d

    def site_specs(self):
        sites = self.sites or [SiteSpec("local", "local" if self.clock == "wall" else "simbatch")]
        if self.provider:
            sites = [SiteSpec(s.site_id, self.provider, s.provider_params, s.throttle, s.apps, s.initial_score)
                     for s in sites]
        return sites


def load_sites(path):
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    if isinstance(data, dict):
        data = data.get("sites", [])
    return [SiteSpec.from_dict(d) for d in data]


class DurationModel:
    """Per-task simulated durations.

    ``spec`` maps an executable name (or ``default``) to ``["constant", t]`` or
    ``["uniform", a, b]``. Each task draws from its own generator seeded by the
    run seed and the task's label, so a task gets the same duration in every
    run and under every schedule.
    """

    def __init__(self, spec=None, seed=0):
        self.spec = dict(spec or {})
        self.seed = seed

    def sample(self, label, exe=None):
        rule = self.spec.get(exe) if exe is not None else None
        if rule is None:
            rule = self.spec.get("default", ["constant", 0.0])
        kind = rule[0]
        if kind == "constant":
            return float(rule[1])
        if kind == "uniform":
            return random.Random(f"{self.seed}:{label}").uniform(float(rule[1]), float(rule[2]))
        raise ValueError(f"unknown duration model {kind!r}")

"""The ``miniswift`` command.

Exit status: 0 on success, 1 when a run (or a compile) fails, 2 on a usage
error.
"""

import argparse
import json
import os
import sys

from .config import RunConfig, load_sites
from .errors import MiniSwiftError

INVOCATION = "invocation.json"


class UsageError(Exception):
    pass


# helpers


def _load_plan(script, libs=()):
    from .lang import load_program, lower, parse_source, typecheck

    if not os.path.isfile(script):
        raise UsageError(f"no such script: {script}")
    prog, found = load_program(script)
    for path in libs:
        if not os.path.isfile(path):
            raise UsageError(f"no such library: {path}")
        with open(path, encoding="utf-8") as f:
            found.append(parse_source(f.read()))
    return lower(typecheck(prog, found))


def _build_config(args, script=None):
    if args.config:
        if not os.path.isfile(args.config):
            raise UsageError(f"no such config file: {args.config}")
        cfg = RunConfig.load(args.config)
    else:
        cfg = RunConfig().with_env()
    if args.sites:
        cfg.sites = load_sites(args.sites)
    if args.provider:
        cfg.provider = args.provider
    if args.clock:
        cfg.clock = args.clock
    if args.seed is not None:
        cfg.seed = args.seed
    if args.no_pipelining:
        cfg.pipelining = False
    if args.cluster:
        cfg.clustering = True
    if args.interrupt_after is not None:
        cfg.interrupt_after = args.interrupt_after
    if args.keep_sandbox:
        cfg.keep_sandbox = True
    if args.full_env:
        cfg.full_env = True
    if args.duration:
        cfg.durations = dict(cfg.durations, default=_duration(args.duration))
    if args.run_dir:
        cfg.run_dir = args.run_dir
    elif not args.config and script:
        cfg.run_dir = f"run-{os.path.splitext(os.path.basename(script))[0]}"
    if script and not (args.config and "base_dir" in _json(args.config)):
        cfg.base_dir = os.path.dirname(os.path.abspath(script))
    cfg.run_dir = os.path.abspath(cfg.run_dir)
    cfg.base_dir = os.path.abspath(cfg.base_dir)
    return cfg


def _json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _duration(text):
    parts = text.split(":")
    try:
        if len(parts) == 1:
            return ["constant", float(parts[0])]
        if len(parts) == 3 and parts[0] == "uniform":
            return ["uniform", float(parts[1]), float(parts[2])]
    except ValueError:
        pass
    raise UsageError(f"bad --duration {text!r}; use SECONDS or uniform:A:B")


def _report(result, out=None):
    out = out or sys.stdout
    print(result.summary(), file=out)
    if result.error:
        print(f"error: {result.error}", file=out)
    for tid, proc, name, reason in result.failed_tasks[:20]:
        print(f"  failed task {tid} {proc} {name}: {reason}", file=out)
    if len(result.failed_tasks) > 20:
        print(f"  ... {len(result.failed_tasks) - 20} more", file=out)
    return 0 if result.ok else 1


def _save_invocation(cfg, script, libs):
    os.makedirs(cfg.run_dir, exist_ok=True)
    d = cfg.to_dict()
    d["interrupt_after"] = None
    with open(os.path.join(cfg.run_dir, INVOCATION), "w", encoding="utf-8") as f:
        json.dump({"script": os.path.abspath(script), "libs": [os.path.abspath(p) for p in libs],
                   "config": d}, f, indent=2, default=list)


# commands


def cmd_run(args):
    from .engine.engine import evaluate

    plan = _load_plan(args.script, args.lib)
    cfg = _build_config(args, args.script)
    _save_invocation(cfg, args.script, args.lib)
    return _report(evaluate(plan, cfg))


def cmd_resume(args):
    from .engine.engine import restart

    path = os.path.join(args.run_dir, INVOCATION)
    if not os.path.isfile(path):
        raise UsageError(f"{args.run_dir} has no {INVOCATION}; was it created by 'miniswift run'?")
    inv = _json(path)
    cfg = RunConfig.from_dict(inv["config"])
    cfg.run_dir = os.path.abspath(args.run_dir)
    if args.seed is not None:
        cfg.seed = args.seed
    cfg.interrupt_after = args.interrupt_after
    plan = _load_plan(inv["script"], inv.get("libs", ()))
    return _report(restart(plan, cfg))


def cmd_graph(args):
    from .lang import load_program, parse_source
    from .lang.graph import to_dot, to_text

    if not os.path.isfile(args.script):
        raise UsageError(f"no such script: {args.script}")
    prog, libs = load_program(args.script)
    for path in args.lib:
        with open(path, encoding="utf-8") as f:
            libs.append(parse_source(f.read()))
    name = os.path.basename(args.script)
    sys.stdout.write(to_dot(prog, libs, name) if args.format == "dot" else to_text(prog, libs))
    return 0


def cmd_falkon_serve(args):
    from .falkon.service import SpawnLocalAllocator, load_policy, serve

    policy = load_policy(args.policy)
    allocator = SpawnLocalAllocator(policy.slots_per_node) if args.allocator == "spawn-local" else None

    def ready(port):
        print(f"falkon service listening on {args.host}:{port}", flush=True)

    return serve(args.host, args.port, policy, allocator, ready)


def cmd_falkon_worker(args):
    from .falkon.worker import run_worker

    host, _, port = args.connect.rpartition(":")
    if not host or not port.isdigit():
        raise UsageError(f"--connect wants host:port, got {args.connect!r}")
    run_worker(host, int(port), args.slots, crash_rate=args.crash_rate, seed=args.seed)
    return 0


def cmd_bench(args):
    from .bench import benches as B

    kw = {"run_dir": os.path.abspath(args.run_dir)}
    name = args.name
    opt = {"seed": args.seed, "volumes": args.volumes, "workers": args.workers, "tasks": args.tasks}
    accepted = {
        "efficiency": (),
        "pipeline": ("seed", "volumes", "workers"),
        "cluster": ("seed", "volumes"),
        "throughput": ("workers",),
        "loadbalance": (),
        "scale": ("tasks",),
    }[name]
    for k in accepted:
        if opt[k] is not None:
            kw[k] = opt[k]
    if name == "cluster" and args.workers is not None:
        kw["nodes"] = args.workers
    if name == "throughput" and args.tasks is not None:
        kw["n"] = args.tasks
    if name == "loadbalance" and args.tasks is not None:
        kw["jobs"] = args.tasks
    report = B.BENCHES[name](**kw)
    if name == "pipeline" and args.dominance:
        dom = B.pipeline_dominance(args.dominance, args.seed or 0, kw["run_dir"])
        report["dominance_instances"] = dom["instances"]
        report["dominance_violations"] = len(dom["violations"])
        report["dominance_min_gap"] = dom["min_gap"]
    sys.stdout.write(B.write_report(report, kw["run_dir"]))
    return 0


def cmd_provenance(args):
    from .engine.restartlog import load_produced
    from .provenance import derivation_of

    if not os.path.isdir(args.run_dir):
        raise UsageError(f"no such run directory: {args.run_dir}")
    if args.logical_path is None:
        for lp, rec in sorted(load_produced(args.run_dir, verify=False).items()):
            print(f"{lp}\t{rec['physical_path']}\t{rec['digest']}")
        return 0
    chain = derivation_of(args.logical_path, args.run_dir)
    if args.json:
        print(json.dumps(chain, indent=2))
        return 0
    if not chain:
        print(f"{args.logical_path}: mapped input (no producer)")
    for level, steps in enumerate(chain):
        for s in steps:
            print(f"{level}\ttask {s['task_id']}\t{s['procedure']}\t<- {', '.join(s['inputs']) or '-'}")
    return 0


# parser


def _run_options(p):
    p.add_argument("--config", help="run.json with RunConfig fields")
    p.add_argument("--sites", help="sites.json (list of site entries)")
    p.add_argument("--provider", choices=("local", "simbatch", "falkon"), help="override every site's provider")
    p.add_argument("--clock", choices=("virtual", "wall"))
    p.add_argument("--run-dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--no-pipelining", action="store_true", help="stage barriers (A/B comparisons)")
    p.add_argument("--cluster", action="store_true", help="enable the clustering window")
    p.add_argument("--interrupt-after", type=int, metavar="N", help="stop after N successful tasks")
    p.add_argument("--keep-sandbox", action="store_true")
    p.add_argument("--full-env", action="store_true", help="record every environment variable")
    p.add_argument("--duration", help="simulated task length: SECONDS or uniform:A:B")
    p.add_argument("--lib", action="append", default=[], help="extra script with procedure declarations")


def build_parser():
    ap = argparse.ArgumentParser(prog="miniswift", description="Typed dataflow workflows over pluggable providers.")
    sub = ap.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("run", help="run a script")
    p.add_argument("script")
    _run_options(p)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("resume", help="resume a run from its restart log")
    p.add_argument("run_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--interrupt-after", type=int, metavar="N")
    p.set_defaults(fn=cmd_resume)

    p = sub.add_parser("graph", help="print the static structure of a script")
    p.add_argument("script")
    p.add_argument("--format", choices=("dot", "text"), default="dot")
    p.add_argument("--lib", action="append", default=[])
    p.set_defaults(fn=cmd_graph)

    p = sub.add_parser("falkon", help="dispatch service and workers")
    fsub = p.add_subparsers(dest="falkon_command", metavar="role")
    fsub.required = True
    s = fsub.add_parser("serve", help="run the dispatch service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=50001)
    s.add_argument("--policy", help="provisioner policy JSON")
    s.add_argument("--allocator", choices=("spawn-local", "none"), default="spawn-local")
    s.set_defaults(fn=cmd_falkon_serve)
    w = fsub.add_parser("worker", help="run a worker")
    w.add_argument("--connect", required=True, metavar="HOST:PORT")
    w.add_argument("--slots", type=int, default=1)
    w.add_argument("--crash-rate", type=float, default=0.0, help="fault injection")
    w.add_argument("--seed", type=int, default=0)
    w.set_defaults(fn=cmd_falkon_worker)

    p = sub.add_parser("bench", help="benchmarks (reports under <run-dir>/reports/)")
    p.add_argument("name", choices=("throughput", "efficiency", "pipeline", "cluster", "loadbalance", "scale"))
    p.add_argument("--run-dir", default="bench-run")
    p.add_argument("--seed", type=int)
    p.add_argument("--volumes", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--tasks", type=int)
    p.add_argument("--dominance", type=int, metavar="N", help="pipeline: also check N random instances")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("provenance", help="derivation chain of a dataset")
    p.add_argument("run_dir")
    p.add_argument("logical_path", nargs="?")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_provenance)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    try:
        return args.fn(args)
    except UsageError as e:
        print(f"miniswift: {e}", file=sys.stderr)
        ap.print_usage(sys.stderr)
        return 2
    except (MiniSwiftError, ValueError, OSError) as e:
        print(f"miniswift: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130


__all__ = ["main", "build_parser"]

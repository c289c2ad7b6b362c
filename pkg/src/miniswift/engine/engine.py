"""The dataflow engine.

A plan is evaluated by walking its statements once, eagerly: every variable
becomes a dataset node, every call to an atomic procedure becomes a task
record that waits on its input nodes, and every compound call is expanded
in place. Nothing is ordered up front; a task fires when the last of its
inputs resolves, so independent work and element-wise pipelines overlap
without any dependency analysis.

Arrays that are filled element by element (by ``foreach`` or indexed
assignment) are held open by the statements that may still write them and
close when the last such statement completes. Statement completion is
structural: an assignment is complete once the element it writes exists and
its producer is known, long before the producer runs.
"""

import os
import random
import time
import uuid
from dataclasses import dataclass, field

from ..config import DurationModel, RunConfig
from ..data import types as T
from ..data.mappers import REGISTRY, MapInfo, check_shape
from ..data.nodes import FAILED, RESOLVED, UNRESOLVED, Graph, arrays_in, close_unheld, fill, filename_of
from ..errors import (DataError, DoubleAssignmentError, EngineBug, MappingError, MiniSwiftError,
                      PlanDigestMismatch)
from ..lang import plan as P
from ..provenance import ProvenanceWriter, max_task_id
from ..providers import make_provider
from ..providers.base import JobSpec
from ..scheduler import Scheduler, SiteRecord
from ..util import file_digest
from .clock import make_loop
from .restartlog import RestartLog, load_produced

WAITING, READY, SUBMITTED, ACTIVE, DONE, FAILED_T = "waiting", "ready", "submitted", "active", "done", "failed"
TERMINAL = (DONE, FAILED_T)


class TaskRecord:
    """One invocation of an atomic procedure."""

    __slots__ = ("id", "proc", "name", "inputs", "outputs", "state", "attempt", "site",
                 "waiting", "reason", "pin_site", "exclude_sites", "fail_streak", "fail_site",
                 "submit_t", "start_t", "end_t", "restored")

    def __init__(self, tid, proc, name, inputs, outputs):
        self.id = tid
        self.proc = proc
        self.name = name
        self.inputs = inputs
        self.outputs = outputs
        self.state = WAITING
        self.attempt = 0
        self.site = None
        self.waiting = 0
        self.reason = None
        self.pin_site = None
        self.exclude_sites = None
        self.fail_streak = 0
        self.fail_site = None
        self.submit_t = None
        self.start_t = None
        self.end_t = None
        self.restored = False

    def __repr__(self):
        return f"<Task {self.id} {self.proc.name} {self.name} {self.state}>"


class _Block:
    __slots__ = ("remaining", "on_done", "decls")


class _Ctx:
    """Per-statement evaluation context: the frame, naming prefix and label."""

    __slots__ = ("slots", "prefix", "label", "tmp")

    def __init__(self, slots, prefix, label):
        self.slots = slots
        self.prefix = prefix
        self.label = label
        self.tmp = 0

    def temp_name(self):
        self.tmp += 1
        return f"{self.prefix}{self.label}.t{self.tmp}"


class _Foreach:
    __slots__ = ("remaining", "closed", "done")


class _LinkArr:
    __slots__ = ("dst", "done")

    def __init__(self, dst):
        self.dst = dst
        self.done = False


@dataclass
class RunResult:
    status: str  # ok | failed | interrupted
    run_id: str = ""
    tasks_total: int = 0
    tasks_done: int = 0
    tasks_failed: int = 0
    tasks_restored: int = 0
    tasks_executed: int = 0
    attempts: int = 0
    makespan: float = 0.0
    produced: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    failed_tasks: list = field(default_factory=list)
    error: str = None
    stats: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status == "ok"

    def summary(self):
        return (f"{self.status}: {self.tasks_total} tasks, {self.tasks_done} done, "
                f"{self.tasks_failed} failed, {self.tasks_restored} restored, "
                f"makespan {self.makespan:.3f}s")


def _bool_text(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


_BINOPS = {
    "==": lambda a, b: a == b, "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b, ">": lambda a, b: a > b,
    "<=": lambda a, b: a <= b, ">=": lambda a, b: a >= b,
    "&&": lambda a, b: a and b, "||": lambda a, b: a or b,
    "-": lambda a, b: a - b, "*": lambda a, b: a * b, "%": lambda a, b: a % b,
}


def _binop(op, a, b, ty):
    if op == "+":
        if isinstance(a, str) or isinstance(b, str):
            return _bool_text(a) + _bool_text(b)
        return a + b
    if op == "/":
        if ty == T.INT:
            q = abs(a) // abs(b)
            return q if (a >= 0) == (b >= 0) else -q
        return a / b
    return _BINOPS[op](a, b)


class Engine:
    def __init__(self, plan, config=None, registry=None, resume=False, sites=None):
        self.plan = plan
        self.cfg = config or RunConfig()
        self.registry = registry or REGISTRY
        self.run_dir = os.path.abspath(self.cfg.run_dir)
        self.base_dir = os.path.abspath(self.cfg.base_dir)
        self.loop = make_loop(self.cfg.clock)
        self.graph = Graph(self.run_dir)
        self.graph.ready = self.loop.ready
        self.run_id = f"{time.strftime('%Y%m%d-%H%M%S')}-{uuid.uuid4().hex[:8]}"
        self.rng = random.Random(self.cfg.seed)
        self.durations = DurationModel(self.cfg.durations, self.cfg.seed)
        self.tasks = []
        self.next_id = max_task_id(self.run_dir) + 1 if resume else 1
        self.resume = resume
        self.restore_index = load_produced(self.run_dir) if resume else {}
        self.restart_log = RestartLog(self.run_dir, self.cfg.restart_log)
        self.provenance = ProvenanceWriter(self.run_dir, self.cfg.provenance,
                                           self.cfg.env_allowlist, self.cfg.full_env)
        self.produced = {}
        self.completions = 0
        self.interrupted = False
        self.failed_tasks = []
        self.counts = {DONE: 0, FAILED_T: 0}
        self.restored = 0
        self.executed = 0
        self.attempts = 0
        self._map_waiters = {}
        self._consts = {}
        self.main_slots = None
        self.sites = self._make_sites(sites)
        self.scheduler = Scheduler(self, self.sites, self.cfg, self.rng)

    def _make_sites(self, sites):
        if sites is not None:
            return sites
        out = []
        for spec in self.cfg.site_specs():
            prov = make_provider(spec.provider, spec.site_id, spec.provider_params)
            out.append(SiteRecord(spec.site_id, score=spec.initial_score, throttle=spec.throttle,
                                  apps=set(spec.apps), provider=prov))
        return out

    # top level

    def evaluate(self):
        """Run the plan to completion (or interruption) and report."""
        os.makedirs(self.run_dir, exist_ok=True)
        self.restart_log.run_started(self.plan.digest)
        t0 = time.monotonic()
        main = self.plan.main
        self.main_slots = [None] * main.nslots
        error = None
        try:
            self.exec_block(main.body, self.main_slots, "", _noop)
            self.loop.run()
        except (MappingError, DoubleAssignmentError, PlanDigestMismatch, EngineBug):
            self.restart_log.close()
            self._close_providers()
            raise
        except MiniSwiftError as e:
            error = str(e)
        self._close_providers()
        if not self.interrupted:
            stalled = [t for t in self.tasks if t.state not in TERMINAL]
            for t in stalled:
                self._fail_task(t, "stalled: inputs never became available")
            if stalled and error is None:
                error = f"{len(stalled)} task(s) stalled"
        if self.interrupted:
            status = "interrupted"
        elif error or self.counts[FAILED_T] or not self._outputs_resolved():
            status = "failed"
        else:
            status = "ok"
        if not self.interrupted:
            self.restart_log.run_finished(status)
        self.restart_log.close()
        elapsed = self.loop.now() if self.loop.virtual else time.monotonic() - t0
        return RunResult(
            status=status, run_id=self.run_id, tasks_total=len(self.tasks),
            tasks_done=self.counts[DONE], tasks_failed=self.counts[FAILED_T],
            tasks_restored=self.restored, tasks_executed=self.executed, attempts=self.attempts,
            makespan=elapsed, produced=dict(self.produced), outputs=self._outputs(),
            failed_tasks=[(t.id, t.proc.name, t.name, t.reason) for t in self.failed_tasks],
            error=error, stats=self.stats())

    def _close_providers(self):
        for s in self.sites:
            try:
                s.provider.close()
            except Exception:  # closing is best effort
                pass

    def stats(self):
        sch = self.scheduler
        return {
            "jobs": sch.jobs, "bundles": sch.bundles,
            "sites": {s.site_id: {"score": s.score, "submitted": s.submitted,
                                  "succeeded": s.succeeded, "failed": s.failed} for s in self.sites},
            "decisions": len(sch.decisions),
            "provenance_warnings": list(self.provenance.warnings),
            "nodes": self.graph.count,
        }

    def _top_outputs(self):
        out = []
        for s in self.plan.main.body:
            if isinstance(s, P.PDecl) and s.mode == "output":
                n = self.main_slots[s.slot] if self.main_slots else None
                if n is not None:
                    out.append(n)
        return out

    def _outputs_resolved(self):
        return all(n.state == RESOLVED for n in self._top_outputs())

    def _outputs(self):
        res = {}
        for n in self._top_outputs():
            res[n.logical_path] = n.snapshot() if n.state == RESOLVED else None
        return res

    # blocks and statements

    def exec_block(self, stmts, slots, prefix, on_done, outputs=None):
        blk = _Block()
        blk.remaining = len(stmts)
        blk.on_done = on_done
        blk.decls = []
        for s in stmts:
            if isinstance(s, P.PDecl):
                node = self._decl_node(s, slots, prefix)
                slots[s.slot] = node
                if not node.input_mapped:
                    blk.decls.append(node)
        if outputs:
            blk.decls.extend(outputs)
        held = []
        for s in stmts:
            h = None
            for slot, members in s.writes:
                n = slots[slot]
                for m in members:
                    n = n.children[m]
                n.hold()
                if h is None:
                    h = [n]
                else:
                    h.append(n)
            held.append(h)
        if not stmts:
            self._block_end(blk)
            return
        for s, h in zip(stmts, held):
            self.exec_stmt(s, slots, prefix, blk, h)

    def _block_end(self, blk):
        for n in blk.decls:
            close_unheld(n)
        blk.on_done()

    def _stmt_done(self, blk, held):
        if held:
            for n in held:
                n.release()
        blk.remaining -= 1
        if blk.remaining == 0:
            self._block_end(blk)

    def exec_stmt(self, s, slots, prefix, blk, held):
        ctx = _Ctx(slots, prefix, s.label)
        if isinstance(s, P.PDecl):
            self._exec_decl(s, ctx)
            self._stmt_done(blk, held)
        elif isinstance(s, P.PAssign):
            self._exec_assign(s, ctx, lambda: self._stmt_done(blk, held))
        elif isinstance(s, P.PCallS):
            self.eval_call(s.call, ctx, [])
            self._stmt_done(blk, held)
        elif isinstance(s, P.PForeach):
            self._exec_foreach(s, ctx, blk, held)
        elif isinstance(s, P.PIf):
            cond = self.eval_node(s.cond, ctx)
            cond.when_done(self._if_cond, (s, ctx, blk, held))
        else:
            raise EngineBug(f"unknown statement {s!r}")

    # declarations and mapping

    def _decl_node(self, s, slots, prefix):
        name = f"{prefix}{s.name}"
        m = s.mapping
        if m is None:
            return self.graph.node(s.ty, name)
        try:
            mapper = self.registry.get(m.mapper)
        except MiniSwiftError as e:
            raise _located(e, s) from None
        node = self.graph.node(s.ty, name)
        node.mapinfo = MapInfo(mapper, s.ty, None, self.base_dir)
        node.input_mapped = s.mode == "input"
        params = {}
        pending = []
        for key, val in m.params:
            if isinstance(val, P.PLit):
                params[key] = val.value
            else:
                pn = slots[val.slot]
                if pn.state == RESOLVED:
                    params[key] = pn.value
                else:
                    pending.append((key, pn))
        if not pending:
            self._map_ready(node, params, s)
        else:
            st = [len(pending), params, s]
            for key, pn in pending:
                pn.when_done(self._map_param, (node, key, st))
        return node

    def _map_param(self, pn, arg):
        node, key, st = arg
        if pn.state == FAILED:
            if node.state == UNRESOLVED:
                _fail_node(node, pn.value)
            self._wake_map_waiters(node)
            return
        st[1][key] = pn.value
        st[0] -= 1
        if st[0] == 0:
            self._map_ready(node, st[1], st[2])

    def _map_ready(self, node, params, s):
        mi = node.mapinfo
        mi.params = dict(params)
        mi.ready = True
        if node.input_mapped:
            try:
                tree = mi.mapper.enumerate(mi.params, s.ty, self.base_dir)
                check_shape(tree, s.ty, s.name)
            except MiniSwiftError as e:
                raise _located(e, s) from None
            fill(node, tree)
        self._wake_map_waiters(node)

    def _wake_map_waiters(self, node):
        ws = self._map_waiters.pop(node.id, None)
        if ws:
            for t in ws:
                self._input_ready(node, t)

    def _exec_decl(self, s, ctx):
        if s.init is None:
            return
        node = ctx.slots[s.slot]
        if isinstance(s.init, P.PCallE):
            self.eval_call(s.init, ctx, [node])
        else:
            self.link(self.eval_node(s.init, ctx), node)

    # assignment

    def _exec_assign(self, s, ctx, done):
        self._lvalue(s.target, ctx, lambda dst: self._assign_into(s, ctx, dst, done))

    def _assign_into(self, s, ctx, dst, done):
        if isinstance(s.value, P.PCallE):
            self.eval_call(s.value, ctx, [dst])
        else:
            self.link(self.eval_node(s.value, ctx), dst)
        done()

    def _lvalue(self, e, ctx, k, final=True):
        """Find (creating array elements as needed) the node an lvalue names,
        then call ``k(node)``; waits if an index is still unresolved."""
        if isinstance(e, P.PVar):
            k(ctx.slots[e.slot])
        elif isinstance(e, P.PMember):
            self._lvalue(e.obj, ctx, lambda n: k(n.children[e.name]), False)
        elif isinstance(e, P.PIndex):
            def with_arr(arr):
                idx = self.eval_node(e.index, ctx)

                def with_idx(inode, _):
                    if inode.state != RESOLVED:
                        raise DataError(f"index of {arr.logical_path} failed: {inode.value}")
                    i = inode.value
                    k(arr.add_elem(i) if final else arr.elem_or_add(i))
                if idx.state == RESOLVED:
                    with_idx(idx, None)
                else:
                    idx.when_done(with_idx)
            self._lvalue(e.obj, ctx, with_arr, False)
        else:
            raise EngineBug(f"not an lvalue: {e!r}")

    # foreach / if

    def _exec_foreach(self, s, ctx, blk, held):
        src = self.eval_node(s.source, ctx)
        st = _Foreach()
        st.remaining = 1
        st.closed = False
        st.done = lambda: self._stmt_done(blk, held)
        src.when_closed(self._foreach_expand, (s, ctx, st))

    def _foreach_expand(self, arr, arg):
        s, ctx, st = arg
        elems = arr.children
        keys = sorted(elems)
        st.remaining += len(keys)
        base = f"{ctx.prefix}{s.label}"
        parent = ctx.slots
        idx_slot = s.index_slot
        fin = st.done
        for k in keys:
            slots = list(parent)
            slots[s.elem_slot] = elems[k]
            if idx_slot is not None:
                slots[idx_slot] = self.const(k, T.INT)
            self.exec_block(s.body, slots, f"{base}[{k}]/", lambda: _foreach_step(st, fin))
        _foreach_step(st, fin)

    def _if_cond(self, cond, arg):
        s, ctx, blk, held = arg
        if cond.state != RESOLVED:
            # an unknown condition runs neither branch; outputs stay unwritten
            self._stmt_done(blk, held)
            return
        branch = s.then if cond.value else s.orelse
        self.exec_block(branch, ctx.slots, ctx.prefix, lambda: self._stmt_done(blk, held))

    # expressions

    def const(self, value, ty):
        key = (ty.name if ty.is_primitive else repr(ty), value)
        n = self._consts.get(key)
        if n is None:
            n = self.graph.node(ty, repr(value))
            n.resolve(value)
            self._consts[key] = n
        return n

    def eval_node(self, e, ctx):
        if isinstance(e, P.PVar):
            return ctx.slots[e.slot]
        if isinstance(e, P.PLit):
            return self.const(e.value, e.ty)
        if isinstance(e, P.PMember):
            return self.eval_node(e.obj, ctx).children[e.name]
        if isinstance(e, P.PIndex):
            arr = self.eval_node(e.obj, ctx)
            idx = self.eval_node(e.index, ctx)
            if idx.state == RESOLVED:
                el = arr.children.get(idx.value)
                if el is not None:
                    return el
                proxy = self.graph.node(e.ty, f"{arr.logical_path}[{idx.value}]")
            else:
                proxy = self.graph.node(e.ty, ctx.temp_name())
            for a in arrays_in(proxy):
                a.hold()
            idx.when_done(self._proxy_index, (arr, proxy))
            return proxy
        if isinstance(e, P.PCallE):
            out = self.graph.node(e.ty, ctx.temp_name())
            self.eval_call(e, ctx, [out])
            return out
        if isinstance(e, (P.PBin, P.PUn)):
            operands = [self.eval_node(e.left, ctx), self.eval_node(e.right, ctx)] \
                if isinstance(e, P.PBin) else [self.eval_node(e.operand, ctx)]
            out = self.graph.node(e.ty, ctx.temp_name())
            st = [len(operands), e, operands, out]
            for o in operands:
                o.when_done(self._operand_done, st)
            return out
        if isinstance(e, P.PFilename):
            target = self.eval_node(e.arg, ctx)
            out = self.graph.node(T.STRING, ctx.temp_name())
            out.resolve(filename_of(target))
            return out
        raise EngineBug(f"unknown expression {e!r}")

    def _proxy_index(self, idx, arg):
        arr, proxy = arg
        if idx.state != RESOLVED:
            _fail_node(proxy, idx.value)
            return
        arr.when_elem(idx.value, self._proxy_elem, proxy)

    def _proxy_elem(self, arr, idx, proxy):
        if idx is None:
            _fail_node(proxy, DataError(f"{arr.logical_path} has no such element"))
            return
        self.link(arr.children[idx], proxy)
        for a in arrays_in(proxy):
            a.release()

    def _operand_done(self, node, st):
        if st[3].state != UNRESOLVED:
            return
        if node.state == FAILED:
            st[3].fail(node.value)
            return
        st[0] -= 1
        if st[0]:
            return
        e, ops, out = st[1], st[2], st[3]
        try:
            if isinstance(e, P.PBin):
                v = _binop(e.op, ops[0].value, ops[1].value, e.ty)
            elif e.op == "!":
                v = not ops[0].value
            else:
                v = -ops[0].value
        except (ArithmeticError, TypeError, ValueError) as ex:
            out.fail(ex)
            return
        if e.ty == T.FLOAT and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        out.resolve(v)

    # links (aliases and forwarding assignments)

    def link(self, src, dst):
        """Make ``dst`` a copy of ``src`` as ``src`` resolves, element-wise."""
        if src is dst:
            return
        if dst.children is None:
            src.when_done(self._copy_leaf, dst)
        elif dst.type.is_struct:
            sc = src.children
            for k, c in dst.children.items():
                self.link(sc[k], c)
        else:
            dst.hold()
            src.watch(self._link_elem, _LinkArr(dst))

    @staticmethod
    def _copy_leaf(src, dst):
        if dst.state == FAILED:
            return
        if src.state == RESOLVED:
            dst.resolve(src.value)
        else:
            dst.fail(src.value)

    def _link_elem(self, arr, idx, st):
        if st.done:
            return False
        if idx is None:
            st.done = True
            st.dst.release()
            return False
        self.link(arr.children[idx], st.dst.add_elem(idx))
        return True

    # calls

    def eval_call(self, call, ctx, outs):
        proc = self.plan.procs[call.proc]
        args = [self.eval_node(a, ctx) for a in call.args]
        if proc.kind == "atomic":
            self.new_task(proc, args, outs, ctx)
        else:
            self.expand(proc, args, outs, ctx)

    def expand(self, proc, args, outs, ctx):
        slots = [None] * proc.nslots
        for (_, _, slot), n in zip(proc.outputs, outs):
            slots[slot] = n
        for (_, _, slot), n in zip(proc.inputs, args):
            slots[slot] = n
        if outs:
            prefix = f"{outs[0].logical_path}/{proc.name}/"
        else:
            prefix = f"{ctx.prefix}{ctx.label}/{proc.name}/"
        self.exec_block(proc.body, slots, prefix, _noop, outputs=outs)

    # tasks

    def new_task(self, proc, inputs, outputs, ctx):
        name = outputs[0].logical_path if outputs else f"{ctx.prefix}{ctx.label}"
        t = TaskRecord(self.next_id, proc, name, inputs, outputs)
        self.next_id += 1
        self.tasks.append(t)
        if self.restore_index and outputs and self._try_restore(t):
            return t
        deps = inputs
        if not self.cfg.pipelining:
            deps = list(inputs)
            for n in inputs:
                p = n.parent
                while p is not None and not p.type.is_array:
                    p = p.parent
                if p is not None:
                    deps.append(p)
        t.waiting = len(deps) + 1
        for n in deps:
            if n.state != UNRESOLVED:
                self._input_ready(n, t)
            else:
                n.when_done(self._input_ready, t)
        for n in outputs:
            mi = n.root.mapinfo
            if mi is not None and not mi.ready:
                t.waiting += 1
                self._map_waiters.setdefault(n.root.id, []).append(t)
        self._input_ready(None, t)
        return t

    def _try_restore(self, t):
        leaves = [lf for n in t.outputs for lf in n.leaves()]
        recs = []
        sig = t.proc.signature()
        for lf in leaves:
            rec = self.restore_index.get(lf.logical_path)
            if rec is not None and rec.get("producer") not in (None, sig):
                raise PlanDigestMismatch(
                    f"{lf.logical_path} was produced by a different version of {t.proc.name}")
            recs.append(rec)
        if not leaves or any(r is None for r in recs):
            return False
        for lf, rec in zip(leaves, recs):
            lf.resolve(rec["physical_path"])
        t.state = DONE
        t.restored = True
        self.counts[DONE] += 1
        self.restored += 1
        return True

    def _input_ready(self, node, t):
        if t.state != WAITING:
            return
        if node is not None and node.state == FAILED:
            self._fail_task(t, f"upstream: {node.logical_path} failed")
            return
        t.waiting -= 1
        if t.waiting == 0:
            t.state = READY
            self.scheduler.enqueue(t)

    def build_job(self, t, site):
        """Turn a ready task into a provider job with sandbox-relative names."""
        proc = t.proc
        binding = {}
        for (_, _, slot), n in zip(proc.inputs, t.inputs):
            binding[slot] = n
        for (_, _, slot), n in zip(proc.outputs, t.outputs):
            binding[slot] = n
        stage_in, in_names = [], {}
        for n in t.inputs:
            for lf in n.leaves():
                if lf.type.is_file and lf.value not in in_names:
                    rel = f"in{len(stage_in)}/{os.path.basename(lf.value)}"
                    in_names[lf.value] = rel
                    stage_in.append((lf.value, rel))
        stage_out, out_names = [], {}
        for n in t.outputs:
            for lf in n.leaves():
                dest = filename_of(lf)
                rel = f"out{len(stage_out)}/{os.path.basename(dest)}"
                out_names[lf.id] = rel
                stage_out.append((rel, dest))

        def rel_of(lf):
            if lf.id in out_names:
                return out_names[lf.id]
            return in_names.get(lf.value, lf.value)

        args = []
        for a in proc.app_args:
            if a.kind == "str":
                args.append(str(a.value))
                continue
            n = _static_node(a.value, binding)
            if a.kind == "filename" or n.type.is_file or n.children is not None:
                args.extend(rel_of(lf) for lf in n.leaves())
            else:
                args.append(_bool_text(n.value))
        sandbox = os.path.join(self.run_dir, "jobs", str(t.id), str(t.attempt))
        env = {"MINISWIFT_INPUTS": os.pathsep.join(r for _, r in stage_in),
               "MINISWIFT_OUTPUTS": os.pathsep.join(r for r, _ in stage_out)}
        return JobSpec(job_id=f"{t.id}.{t.attempt}", executable=proc.executable, args=args,
                       sandbox_dir=sandbox, stage_in=stage_in, stage_out=stage_out,
                       duration=self.durations.sample(t.name, proc.executable), env=env,
                       task_id=t.id, attempt=t.attempt)

    def attempt_finished(self, t, job, status, site):
        """Record one attempt's outcome; True when the task succeeded."""
        self.attempts += 1
        t.start_t, t.end_t = status.start_time, status.end_time
        ok = status.ok
        if ok:
            for _, dest in job.stage_out:
                if not os.path.exists(dest):
                    ok = False
                    status.reason = f"missing output {dest}"
                    status.exit_code = status.exit_code if status.exit_code else 0
                    break
        if t.state in TERMINAL:
            raise EngineBug(f"task {t.id} completed twice")
        ins = [(lf.logical_path, lf.value) for n in t.inputs for lf in n.leaves() if lf.type.is_file]
        outs = [(lf.logical_path, filename_of(lf)) for n in t.outputs for lf in n.leaves()]
        if not ok:
            if status.phase == "completed" and status.exit_code == 0:
                status.phase = "failed"
            self.provenance.record(t.id, t.attempt, t.proc.name, job, status, ins, outs)
            return False
        self.provenance.record(t.id, t.attempt, t.proc.name, job, status, ins, outs)
        sig = t.proc.signature()
        for n in t.outputs:
            for lf in n.leaves():
                if lf.state != UNRESOLVED:
                    raise EngineBug(f"{lf.logical_path} resolved twice")
                path = filename_of(lf)
                lf.resolve(path)
                self.produced[lf.logical_path] = path
                if self.cfg.restart_log:
                    self.restart_log.produced(lf.logical_path, path, file_digest(path), sig)
        t.state = DONE
        self.counts[DONE] += 1
        self.executed += 1
        self.completions += 1
        if self.cfg.interrupt_after is not None and self.completions >= self.cfg.interrupt_after:
            self.interrupted = True
            self.loop.stop()
        return True

    def task_failed(self, t, reason):
        self._fail_task(t, reason)

    def no_site(self, units, reason):
        for unit in units:
            for t in unit:
                self._fail_task(t, reason)

    def _fail_task(self, t, reason):
        if t.state in TERMINAL:
            return
        t.state = FAILED_T
        t.reason = reason
        self.counts[FAILED_T] += 1
        self.failed_tasks.append(t)
        err = RuntimeError(f"task {t.id} ({t.proc.name}) failed: {reason}")
        for n in t.outputs:
            if n.state == UNRESOLVED:
                _fail_node(n, err)


def _noop():
    pass


def _foreach_step(st, fin):
    st.remaining -= 1
    if st.remaining == 0:
        fin()


def _located(e, s):
    e.stmt_line = s.line
    if e.args and not str(e.args[0]).startswith("line "):
        e.args = (f"line {s.line}: {s.name}: {e.args[0]}",) + tuple(e.args[1:])
    return e


def _fail_node(node, err):
    """Fail ``node`` directly and close every array in it, so nothing waits
    for elements that will never come."""
    if node.state == UNRESOLVED:
        node.fail(err)
    _close_all(node)


def _close_all(node):
    if node.children is None:
        return
    for c in list(node.children.values()):
        _close_all(c)
    if node.type.is_array and not node.closed:
        node.close()


def _static_node(e, binding):
    """Navigate an app argument expression over a task's bound parameters."""
    if isinstance(e, P.PVar):
        return binding[e.slot]
    if isinstance(e, P.PMember):
        return _static_node(e.obj, binding).children[e.name]
    if isinstance(e, P.PIndex):
        return _static_node(e.obj, binding).children[_static_value(e.index, binding)]
    if isinstance(e, P.PLit):
        class _Lit:
            type = e.ty
            children = None
            value = e.value
        return _Lit
    raise EngineBug(f"unsupported app argument {e!r}")


def _static_value(e, binding):
    if isinstance(e, P.PLit):
        return e.value
    return _static_node(e, binding).value


def evaluate(plan, config=None, registry=None, resume=False):
    """Evaluate ``plan`` under ``config``; see :class:`Engine`."""
    return Engine(plan, config, registry, resume=resume).evaluate()


def restart(plan, config=None, registry=None):
    """Resume a run in ``config.run_dir`` from its restart log."""
    return Engine(plan, config, registry, resume=True).evaluate()

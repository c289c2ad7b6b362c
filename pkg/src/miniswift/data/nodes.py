"""Dataset nodes: typed single-assignment futures.

A leaf (file or primitive) is resolved once with a value: the physical path
for a file, the Python value for a primitive. A struct resolves when all of
its fields have; an array resolves when it is closed and every element has.
Failure propagates upward to unresolved ancestors and downward to unresolved
descendants, but never sideways to siblings.

State transitions go through a compare-and-set under one module lock, so
resolutions may arrive from any thread. Callbacks never run inside the
transition: they are queued on the owning :class:`Graph` and run when the
graph (or the engine that owns it) drains its ready queue.
"""

import re
import threading
from collections import deque

from ..errors import DoubleAssignmentError, NotAFileError, DataError

UNRESOLVED, RESOLVED, FAILED = 0, 1, 2
STATE_NAMES = {UNRESOLVED: "unresolved", RESOLVED: "resolved", FAILED: "failed"}

_LOCK = threading.Lock()
_SAFE = re.compile(r"[^A-Za-z0-9._/-]")


class Graph:
    """Owner of a family of nodes: id allocation and the deferred-callback queue."""

    def __init__(self, run_dir=None):
        self.count = 0
        self.ready = deque()
        self.run_dir = run_dir

    def defer(self, fn, *args):
        self.ready.append((fn, args))

    def drain(self):
        """Run queued callbacks until none remain (standalone use and tests)."""
        ready = self.ready
        n = 0
        while ready:
            fn, args = ready.popleft()
            fn(*args)
            n += 1
        return n

    def node(self, ty, name=None, parent=None, key=None):
        return Node(self, ty, parent, key, name)

    def default_path(self, node):
        """Physical location for an unmapped file leaf inside the run directory."""
        base = self.run_dir or "."
        # the suffix keeps a file apart from the directory holding the
        # temporaries of the compound call that produced it
        return f"{base}/data/{_SAFE.sub('_', node.logical_path)}.dat"


class Node:
    __slots__ = ("graph", "id", "type", "parent", "key", "name", "state", "value",
                 "children", "closed", "pending", "holds", "waiters", "watchers",
                 "mapinfo", "producer", "input_mapped")

    def __init__(self, graph, ty, parent=None, key=None, name=None):
        graph.count += 1
        self.graph = graph
        self.id = graph.count
        self.type = ty
        self.parent = parent
        self.key = key
        self.name = name
        self.state = UNRESOLVED
        self.value = None
        self.children = None
        self.closed = False
        self.pending = 0
        self.holds = 0
        self.waiters = None
        self.watchers = None
        self.mapinfo = None
        self.producer = None
        self.input_mapped = False
        if ty.is_struct:
            self.children = {fname: Node(graph, ft, self, fname) for fname, ft in ty.fields}
            self.pending = len(self.children)
        elif ty.is_array:
            self.children = {}
            self.pending = 1  # held open until closed

    # identity

    @property
    def is_leaf(self):
        return self.children is None

    @property
    def is_file(self):
        return self.type.is_file

    @property
    def root(self):
        n = self
        while n.parent is not None:
            n = n.parent
        return n

    def rel_path(self):
        """Steps (field names and int indices) from the root to this node."""
        steps = []
        n = self
        while n.parent is not None:
            steps.append(n.key)
            n = n.parent
        steps.reverse()
        return tuple(steps)

    @property
    def logical_path(self):
        if self.parent is None:
            return self.name or f"_n{self.id}"
        if isinstance(self.key, int):
            return f"{self.parent.logical_path}[{self.key}]"
        return f"{self.parent.logical_path}.{self.key}"

    @property
    def resolved(self):
        return self.state == RESOLVED

    @property
    def failed(self):
        return self.state == FAILED

    def __repr__(self):
        return f"<Node {self.logical_path}:{self.type!r} {STATE_NAMES[self.state]}>"

    # struct / array access

    def field(self, name):
        return self.children[name]

    def elem(self, idx):
        return self.children.get(idx)

    def add_elem(self, idx):
        """Create element ``idx`` of an open array."""
        if self.closed:
            raise DoubleAssignmentError(f"{self.logical_path} is closed; cannot add [{idx}]")
        if idx in self.children:
            raise DoubleAssignmentError(f"{self.logical_path}[{idx}] already exists")
        child = Node(self.graph, self.type.elem, self, idx)
        self.children[idx] = child
        self.pending += 1
        if self.watchers:
            self._fire_watchers(idx)
        return child

    def elem_or_add(self, idx):
        child = self.children.get(idx)
        return child if child is not None else self.add_elem(idx)

    def sorted_elems(self):
        return [self.children[k] for k in sorted(self.children)]

    def close(self):
        """Mark an array complete; unheld nested arrays close with it."""
        if self.closed:
            return
        self.closed = True
        self.pending -= 1
        for child in self.children.values():
            _close_unheld(child)
        if self.watchers:
            self._fire_watchers(None)
        if self.pending == 0:
            self._complete()

    # resolution

    def resolve(self, value=None):
        """Single assignment of a leaf. A second resolve or fail raises."""
        if self.children is not None:
            raise DataError(f"{self.logical_path} is composite; resolve its leaves")
        with _LOCK:
            if self.state != UNRESOLVED:
                raise DoubleAssignmentError(f"{self.logical_path} already {STATE_NAMES[self.state]}")
            self.state = RESOLVED
            self.value = value
        self._notify()
        if self.parent is not None:
            self.parent._child_done()

    def fail(self, error):
        with _LOCK:
            if self.state != UNRESOLVED:
                raise DoubleAssignmentError(f"{self.logical_path} already {STATE_NAMES[self.state]}")
            self.state = FAILED
            self.value = error
        self._notify()
        if self.children:
            for c in list(self.children.values()):
                c._fail_down(error)
        p = self.parent
        while p is not None and p._mark_failed(error):
            p = p.parent

    def _fail_down(self, error):
        if self._mark_failed(error) and self.children:
            for c in list(self.children.values()):
                c._fail_down(error)

    def _mark_failed(self, error):
        with _LOCK:
            if self.state != UNRESOLVED:
                return False
            self.state = FAILED
            self.value = error
        self._notify()
        return True

    def _child_done(self):
        self.pending -= 1
        if self.pending == 0:
            self._complete()

    def _complete(self):
        with _LOCK:
            if self.state != UNRESOLVED:
                return
            self.state = RESOLVED
        self._notify()
        if self.parent is not None:
            self.parent._child_done()

    def _notify(self):
        ws = self.waiters
        if ws:
            self.waiters = None
            defer = self.graph.defer
            for fn, arg in ws:
                defer(fn, self, arg)

    # subscriptions

    def when_done(self, fn, arg=None):
        """Call ``fn(node, arg)`` once this node is resolved or failed."""
        if self.state != UNRESOLVED:
            self.graph.defer(fn, self, arg)
        elif self.waiters is None:
            self.waiters = [(fn, arg)]
        else:
            self.waiters.append((fn, arg))

    def watch(self, fn, arg=None):
        """Call ``fn(array, idx, arg)`` for every current and future element, then
        ``fn(array, None, arg)`` at close. ``fn`` returns False to unsubscribe."""
        for k in sorted(self.children):
            if fn(self, k, arg) is False:
                return
        if self.closed:
            fn(self, None, arg)
            return
        if self.watchers is None:
            self.watchers = []
        self.watchers.append((fn, arg))

    def when_closed(self, fn, arg=None):
        if self.closed:
            self.graph.defer(fn, self, arg)
            return
        self.watch(_CloseWait(fn).on_event, arg)

    def when_elem(self, idx, fn, arg=None):
        """Call ``fn(array, idx_or_None, arg)`` once element ``idx`` exists, or with
        None if the array closes without it."""
        if idx in self.children:
            self.graph.defer(fn, self, idx, arg)
            return
        if self.closed:
            self.graph.defer(fn, self, None, arg)
            return
        self.watch(_ElemWait(idx, fn).on_event, arg)

    def _fire_watchers(self, idx):
        keep = []
        for fn, arg in self.watchers:
            if fn(self, idx, arg) is not False and idx is not None:
                keep.append((fn, arg))
        self.watchers = keep or None

    # holds (open writers of an array)

    def hold(self):
        self.holds += 1

    def release(self):
        self.holds -= 1
        if self.holds == 0:
            self.close()

    # views

    def snapshot(self):
        """Plain-Python view of a resolved tree: paths, values, dicts and lists."""
        if self.children is None:
            return self.value
        if self.type.is_struct:
            return {k: c.snapshot() for k, c in self.children.items()}
        return [self.children[k].snapshot() for k in sorted(self.children)]

    def leaves(self):
        if self.children is None:
            yield self
            return
        keys = sorted(self.children) if self.type.is_array else list(self.children)
        for k in keys:
            yield from self.children[k].leaves()


class _CloseWait:
    __slots__ = ("fn",)

    def __init__(self, fn):
        self.fn = fn

    def on_event(self, arr, idx, arg):
        if idx is None:
            arr.graph.defer(self.fn, arr, arg)
            return False
        return True


class _ElemWait:
    __slots__ = ("idx", "fn")

    def __init__(self, idx, fn):
        self.idx = idx
        self.fn = fn

    def on_event(self, arr, idx, arg):
        if idx is None or idx == self.idx:
            arr.graph.defer(self.fn, arr, idx, arg)
            return False
        return True


def _close_unheld(node):
    if node.children is None:
        return
    if node.type.is_array:
        if node.holds == 0 and not node.closed:
            node.close()
        return
    for c in node.children.values():
        _close_unheld(c)


def arrays_in(node):
    """Arrays reachable from ``node`` through struct fields only."""
    if node.children is None:
        return []
    if node.type.is_array:
        return [node]
    out = []
    for c in node.children.values():
        out.extend(arrays_in(c))
    return out


def close_unheld(node):
    _close_unheld(node)


def fill(node, tree):
    """Populate ``node`` from a plain tree (see :meth:`Node.snapshot`), resolving
    leaves and closing arrays."""
    ty = node.type
    if node.children is None:
        node.resolve(tree)
    elif ty.is_struct:
        for k, c in node.children.items():
            fill(c, tree[k])
    else:
        for i, sub in enumerate(tree):
            fill(node.add_elem(i), sub)
        node.close()


def filename_of(node):
    """Physical path of a file leaf, resolved or still to be produced."""
    if node.children is not None or not node.type.is_file:
        raise NotAFileError(f"{node.logical_path} is {node.type!r}, not a file")
    if node.state == RESOLVED:
        return node.value
    return target_path(node)


def target_path(node):
    root = node.root
    mi = root.mapinfo
    if mi is not None and mi.ready:
        return mi.target(node.rel_path())
    return node.graph.default_path(node)

"""Mapper framework: binding logical datasets to physical files.

A mapper enumerates existing data for input datasets (returning a plain tree
of paths and values shaped like the declared type) and computes target paths
for the leaves of output datasets. Mappers are looked up by name in a
registry; ``run_mapper`` is an alias of ``fs_mapper``.
"""

import os

from ..errors import (DuplicateMapperError, FieldParseError, IncompleteGroupError,
                      MappingError, RowArityError, ShapeMismatchError, UnknownMapperError)
from . import types as T
from .nodes import fill


class Mapper:
    """Base class. Subclasses implement ``enumerate`` and ``target``."""

    name = "?"

    def enumerate(self, params, ty, base_dir="."):
        raise MappingError(f"{self.name} cannot map input datasets")

    def target(self, params, ty, rel, base_dir="."):
        raise MappingError(f"{self.name} cannot map output datasets")


def _abs(base_dir, p):
    p = str(p)
    return p if os.path.isabs(p) else os.path.normpath(os.path.join(base_dir, p))


def _collection(ty):
    """Split a type into (wrapper field path, element type) when it is an array
    or a struct holding exactly one array field; otherwise (None, None)."""
    if ty.is_array:
        return (), ty.elem
    if ty.is_struct and len(ty.fields) == 1 and ty.fields[0][1].is_array:
        return (ty.fields[0][0],), ty.fields[0][1].elem
    return None, None


def _wrap(path, items):
    tree = items
    for name in reversed(path):
        tree = {name: tree}
    return tree


class FsMapper(Mapper):
    """Groups files in ``location`` sharing ``prefix`` and a stem.

    Each element of the target collection is one stem; a file-struct element
    takes one file per field, found by suffix (``.<field>`` unless overridden
    with ``suffix_<field>=...``). A plain file element uses ``suffix``.
    """

    name = "fs_mapper"

    def _suffixes(self, params, elem):
        return {f: str(params.get(f"suffix_{f}", f".{f}")) for f, _ in elem.fields}

    def _plain_suffix(self, params):
        return str(params.get("suffix", ""))

    def enumerate(self, params, ty, base_dir="."):
        loc = _abs(base_dir, params.get("location", "."))
        prefix = str(params.get("prefix", ""))
        names = sorted(n for n in os.listdir(loc) if n.startswith(prefix)) if os.path.isdir(loc) else []
        path, elem = _collection(ty)
        target = elem if path is not None else ty
        if target.is_file:
            suffix = self._plain_suffix(params)
            files = [os.path.join(loc, n) for n in names if n.endswith(suffix)
                     and os.path.isfile(os.path.join(loc, n))]
            if path is None:
                if len(files) != 1:
                    raise MappingError(f"fs_mapper: expected one file with prefix {prefix!r} in {loc}, "
                                       f"found {len(files)}")
                return files[0]
            return _wrap(path, files)
        if not T.is_file_struct(target):
            raise ShapeMismatchError(f"fs_mapper cannot map {ty!r}")
        groups = self.groups(loc, names, self._suffixes(params, target))
        items = [{f: p for f, p in g.items()} for _, g in groups]
        if path is None:
            if len(items) != 1:
                raise MappingError(f"fs_mapper: expected one group with prefix {prefix!r}, found {len(items)}")
            return items[0]
        return _wrap(path, items)

    @staticmethod
    def groups(loc, names, suffixes):
        """[(stem, {field: path})] sorted by stem; raises on an incomplete stem."""
        by_stem = {}
        for n in names:
            for field, suf in suffixes.items():
                if suf and n.endswith(suf) and len(n) > len(suf):
                    by_stem.setdefault(n[: -len(suf)], {})[field] = os.path.join(loc, n)
        out = []
        for stem in sorted(by_stem):
            got = by_stem[stem]
            missing = [suffixes[f] for f in suffixes if f not in got]
            if missing:
                raise IncompleteGroupError(stem, missing)
            out.append((stem, got))
        return out

    def target(self, params, ty, rel, base_dir="."):
        loc = _abs(base_dir, params.get("location", "."))
        prefix = str(params.get("prefix", ""))
        idx = next((s for s in rel if isinstance(s, int)), None)
        field = rel[-1] if rel and isinstance(rel[-1], str) else None
        path, elem = _collection(ty)
        if idx is not None and path is not None:
            if elem.is_file or field is None:
                return os.path.join(loc, f"{prefix}_{idx:04d}{self._plain_suffix(params)}")
            return os.path.join(loc, f"{prefix}_{idx:04d}{self._suffixes(params, elem)[field]}")
        if field is not None:
            return os.path.join(loc, f"{prefix}{params.get('suffix_' + field, '.' + field)}")
        return os.path.join(loc, f"{prefix}{self._plain_suffix(params)}")


def _parse_cell(text, ty, line_no, col, csv_dir):
    try:
        if ty == T.INT:
            return int(text)
        if ty == T.FLOAT:
            return float(text)
        if ty == T.BOOLEAN:
            low = text.lower()
            if low not in ("true", "false"):
                raise ValueError(text)
            return low == "true"
    except ValueError:
        raise FieldParseError(line_no, col, text) from None
    if ty.is_file:
        return _abs(csv_dir, text)
    return text


class CsvMapper(Mapper):
    """Rows of a delimited table become array elements; columns bind to fields.

    The header line (when ``header=true``) is read first and checked against
    the field names; ``skip`` further lines are then discarded.
    """

    name = "csv_mapper"

    @staticmethod
    def _split(line, delim, hdelim):
        if delim:
            return [c.strip() for c in line.split(delim)]
        if hdelim and hdelim in line:
            return [c.strip() for c in line.strip().strip(hdelim).split(hdelim)]
        return line.split()

    def enumerate(self, params, ty, base_dir="."):
        fname = params.get("file")
        if fname is None:
            raise MappingError("csv_mapper needs file=")
        fname = _abs(base_dir, fname)
        skip = int(params.get("skip", 0))
        header = params.get("header", False)
        header = header if isinstance(header, bool) else str(header).lower() == "true"
        hdelim = params.get("hdelim")
        delim = params.get("delim")
        path, elem = _collection(ty)
        if path is None or not elem.is_struct:
            raise ShapeMismatchError(f"csv_mapper maps arrays of structs, not {ty!r}")
        try:
            with open(fname, encoding="utf-8") as f:
                lines = [(i + 1, ln.rstrip("\n")) for i, ln in enumerate(f) if ln.strip()]
        except OSError as e:
            raise MappingError(f"csv_mapper: cannot read {fname}: {e}") from None
        fields = elem.fields
        pos = 0
        if header and lines:
            names = self._split(lines[0][1], None, hdelim) if hdelim else self._split(lines[0][1], delim, None)
            want = [f for f, _ in fields]
            if [n.lower() for n in names] != [w.lower() for w in want]:
                raise MappingError(f"csv_mapper: header {names} does not match fields {want}")
            pos = 1
        pos += skip
        csv_dir = os.path.dirname(fname)
        rows = []
        for line_no, text in lines[pos:]:
            cells = self._split(text, delim, hdelim)
            if len(cells) != len(fields):
                raise RowArityError(line_no, len(cells), len(fields))
            row = {}
            for col, ((fname_, fty), cell) in enumerate(zip(fields, cells), start=1):
                row[fname_] = _parse_cell(cell, fty, line_no, col, csv_dir)
            rows.append(row)
        return _wrap(path, rows)


class FileMapper(Mapper):
    """A single file named by ``file=``."""

    name = "file_mapper"

    def enumerate(self, params, ty, base_dir="."):
        if not ty.is_file:
            raise ShapeMismatchError(f"file_mapper maps a single file, not {ty!r}")
        p = _abs(base_dir, params.get("file", ""))
        if not os.path.isfile(p):
            raise MappingError(f"file_mapper: {p} does not exist")
        return p

    def target(self, params, ty, rel, base_dir="."):
        return _abs(base_dir, params.get("file", ""))


class StringMapper(Mapper):
    """A literal ``value=``: a primitive value, or the path of a file."""

    name = "string_mapper"

    def enumerate(self, params, ty, base_dir="."):
        v = params.get("value")
        if v is None:
            raise MappingError("string_mapper needs value=")
        if ty.is_file:
            return _abs(base_dir, v)
        if ty.is_primitive:
            return _parse_cell(str(v), ty, 0, 1, base_dir)
        raise ShapeMismatchError(f"string_mapper maps a primitive or a file, not {ty!r}")

    def target(self, params, ty, rel, base_dir="."):
        return _abs(base_dir, params.get("value", ""))


class SeqMapper(Mapper):
    """``n`` consecutive integers from ``start``; used by synthetic workloads."""

    name = "seq_mapper"

    def enumerate(self, params, ty, base_dir="."):
        path, elem = _collection(ty)
        if path is None or elem != T.INT:
            raise ShapeMismatchError(f"seq_mapper maps int arrays, not {ty!r}")
        start = int(params.get("start", 0))
        return _wrap(path, list(range(start, start + int(params.get("n", 0)))))


class MapperRegistry:
    def __init__(self):
        self._impls = {}
        self._aliases = {}

    def register(self, name, impl):
        if name in self._impls or name in self._aliases:
            raise DuplicateMapperError(f"mapper {name!r} already registered")
        self._impls[name] = impl

    def alias(self, alias, name):
        if alias in self._impls or alias in self._aliases:
            raise DuplicateMapperError(f"mapper {alias!r} already registered")
        self._aliases[alias] = name

    def get(self, name):
        name = self._aliases.get(name, name)
        try:
            return self._impls[name]
        except KeyError:
            raise UnknownMapperError(f"no mapper named {name!r}") from None

    def __contains__(self, name):
        return name in self._impls or name in self._aliases

    def copy(self):
        r = MapperRegistry()
        r._impls = dict(self._impls)
        r._aliases = dict(self._aliases)
        return r


def default_registry():
    r = MapperRegistry()
    for m in (FsMapper(), CsvMapper(), FileMapper(), StringMapper(), SeqMapper()):
        r.register(m.name, m)
    r.alias("run_mapper", "fs_mapper")
    return r


REGISTRY = default_registry()


def register_mapper(name, impl, registry=None):
    (registry or REGISTRY).register(name, impl)


class MapInfo:
    """Mapping attached to a root node; ``ready`` once its parameters are known."""

    __slots__ = ("mapper", "params", "type", "base_dir", "ready")

    def __init__(self, mapper, ty, params=None, base_dir="."):
        self.mapper = mapper
        self.type = ty
        self.params = params
        self.base_dir = base_dir
        self.ready = params is not None

    def target(self, rel):
        return self.mapper.target(self.params, self.type, rel, self.base_dir)


def check_shape(tree, ty, where="dataset"):
    """Raise ShapeMismatchError unless the plain ``tree`` matches ``ty``."""
    if ty.is_file:
        if not isinstance(tree, str):
            raise ShapeMismatchError(f"{where}: expected a file path, got {type(tree).__name__}")
    elif ty.is_primitive:
        ok = {"int": int, "float": (int, float), "string": str, "boolean": bool}[ty.name]
        if not isinstance(tree, ok) or (ty.name == "int" and isinstance(tree, bool)):
            raise ShapeMismatchError(f"{where}: expected {ty!r}, got {tree!r}")
    elif ty.is_struct:
        if not isinstance(tree, dict) or set(tree) != set(ty.field_names):
            raise ShapeMismatchError(f"{where}: expected fields {ty.field_names}")
        for k, ft in ty.fields:
            check_shape(tree[k], ft, f"{where}.{k}")
    else:
        if not isinstance(tree, list):
            raise ShapeMismatchError(f"{where}: expected a list for {ty!r}")
        for i, sub in enumerate(tree):
            check_shape(sub, ty.elem, f"{where}[{i}]")


def map_dataset(graph, name, binding_name, params, ty, mode, base_dir=".", registry=None):
    """Create a root node for a mapped dataset.

    Input mode enumerates the physical data and returns a fully resolved,
    closed tree. Output mode returns an unresolved tree whose file leaves have
    deterministic target paths.
    """
    mapper = (registry or REGISTRY).get(binding_name)
    node = graph.node(ty, name)
    node.mapinfo = MapInfo(mapper, ty, dict(params), base_dir)
    if mode == "input":
        tree = mapper.enumerate(node.mapinfo.params, ty, base_dir)
        check_shape(tree, ty, name)
        node.input_mapped = True
        fill(node, tree)
    return node

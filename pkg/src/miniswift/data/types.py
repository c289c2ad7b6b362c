"""Logical dataset types: primitives, opaque files, structs and arrays.

Arrays and primitives compare structurally; files and structs compare by
name (nominal typing), so ``Image`` and ``Header`` are distinct even though
both are opaque files.
"""

PRIMITIVE_NAMES = ("string", "int", "float", "boolean")
# date is accepted as a type name and represented as a string
PRIMITIVE_ALIASES = {"date": "string", "bool": "boolean"}


class LogicalType:
    __slots__ = ()
    kind = "?"

    @property
    def is_file(self):
        return False

    @property
    def is_primitive(self):
        return False

    @property
    def is_struct(self):
        return False

    @property
    def is_array(self):
        return False


class PrimitiveType(LogicalType):
    __slots__ = ("name",)
    kind = "primitive"

    def __init__(self, name):
        self.name = name

    @property
    def is_primitive(self):
        return True

    def __eq__(self, other):
        return isinstance(other, PrimitiveType) and other.name == self.name

    def __hash__(self):
        return hash(("p", self.name))

    def __repr__(self):
        return self.name


class FileType(LogicalType):
    __slots__ = ("name",)
    kind = "opaque-file"

    def __init__(self, name):
        self.name = name

    @property
    def is_file(self):
        return True

    def __eq__(self, other):
        return isinstance(other, FileType) and other.name == self.name

    def __hash__(self):
        return hash(("f", self.name))

    def __repr__(self):
        return self.name


class StructType(LogicalType):
    """Fields are filled in after construction so types may refer to each other."""

    __slots__ = ("name", "fields", "_index")
    kind = "struct"

    def __init__(self, name, fields=()):
        self.name = name
        self.fields = tuple(fields)
        self._index = None

    def set_fields(self, fields):
        self.fields = tuple(fields)
        self._index = None

    def field_type(self, name):
        if self._index is None:
            self._index = dict(self.fields)
        return self._index.get(name)

    @property
    def field_names(self):
        return [n for n, _ in self.fields]

    @property
    def is_struct(self):
        return True

    def __eq__(self, other):
        return isinstance(other, StructType) and other.name == self.name

    def __hash__(self):
        return hash(("s", self.name))

    def __repr__(self):
        return self.name


class ArrayType(LogicalType):
    __slots__ = ("elem",)
    kind = "array"

    def __init__(self, elem):
        self.elem = elem

    @property
    def is_array(self):
        return True

    def __eq__(self, other):
        return isinstance(other, ArrayType) and other.elem == self.elem

    def __hash__(self):
        return hash(("a", self.elem))

    def __repr__(self):
        return f"{self.elem!r}[]"


STRING = PrimitiveType("string")
INT = PrimitiveType("int")
FLOAT = PrimitiveType("float")
BOOLEAN = PrimitiveType("boolean")

BUILTIN_TYPES = {"string": STRING, "int": INT, "float": FLOAT, "boolean": BOOLEAN,
                 "date": STRING, "bool": BOOLEAN}


def is_file_struct(t):
    """True for files and for structs whose leaves are all files (no arrays)."""
    if t.is_file:
        return True
    if t.is_struct:
        return all(is_file_struct(ft) for _, ft in t.fields)
    return False


def file_leaf_paths(t, prefix=()):
    """Member paths from a file-struct down to each file leaf, in field order."""
    if t.is_file:
        return [prefix]
    out = []
    if t.is_struct:
        for name, ft in t.fields:
            out.extend(file_leaf_paths(ft, prefix + (name,)))
    return out


def array_member_paths(t, prefix=()):
    """Member paths (through structs only) that reach an array."""
    if t.is_array:
        return [prefix]
    out = []
    if t.is_struct:
        for name, ft in t.fields:
            out.extend(array_member_paths(ft, prefix + (name,)))
    return out


def contains_array(t):
    return bool(array_member_paths(t))

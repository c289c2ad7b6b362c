"""Exception hierarchy shared by every layer of miniswift."""


class MiniSwiftError(Exception):
    """Base class for all errors raised by this package."""


class SourceError(MiniSwiftError):
    """An error tied to a position in a script."""

    def __init__(self, message, line=0, col=0):
        self.line = line
        self.col = col
        super().__init__(f"{line}:{col}: {message}" if line else message)
        self.message = message


class LexError(SourceError):
    pass


class ParseError(SourceError):
    def __init__(self, message, line=0, col=0, expected=()):
        self.expected = tuple(expected)
        if self.expected:
            message = f"{message} (expected {', '.join(self.expected)})"
        super().__init__(message, line, col)


class TypeCheckError(MiniSwiftError):
    """Raised with the complete list of type errors found in a program."""

    def __init__(self, errors):
        self.errors = list(errors)
        lines = "\n".join(str(e) for e in self.errors)
        super().__init__(f"{len(self.errors)} type error(s):\n{lines}")


class TypeErrorItem(SourceError):
    """One type error; ``kind`` names the category (e.g. ``type-mismatch``)."""

    def __init__(self, kind, message, line=0, col=0):
        self.kind = kind
        super().__init__(f"{kind}: {message}", line, col)


# data model

class DataError(MiniSwiftError):
    pass


class DoubleAssignmentError(DataError):
    """A single-assignment node was resolved or failed a second time."""


class UnknownMapperError(DataError):
    pass


class DuplicateMapperError(DataError):
    pass


class MappingError(DataError):
    pass


class IncompleteGroupError(MappingError):
    def __init__(self, stem, missing=()):
        self.stem = stem
        self.missing = tuple(missing)
        super().__init__(f"incomplete group {stem!r}: missing {', '.join(self.missing) or '?'}")


class RowArityError(MappingError):
    def __init__(self, line_no, got, want):
        self.line_no = line_no
        super().__init__(f"line {line_no}: row has {got} columns, expected {want}")


class FieldParseError(MappingError):
    def __init__(self, line_no, column, text):
        self.line_no = line_no
        self.column = column
        super().__init__(f"line {line_no}: cannot parse column {column!r} from {text!r}")


class ShapeMismatchError(MappingError):
    pass


class NotAFileError(DataError):
    pass


# engine / scheduling / providers

class EngineBug(MiniSwiftError):
    """An engine invariant was breached."""


class RunFailed(MiniSwiftError):
    pass


class PlanDigestMismatch(MiniSwiftError):
    pass


class NoValidSite(MiniSwiftError):
    pass


class ProviderError(MiniSwiftError):
    pass


class SubmitRejected(ProviderError):
    pass


class UnknownJob(ProviderError):
    pass


class UnsupportedCapability(ProviderError):
    pass


class StageInMissing(ProviderError):
    pass


class QueueFull(MiniSwiftError):
    pass


class UnknownDataset(MiniSwiftError):
    pass

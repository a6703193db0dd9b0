"""Exception hierarchy.

Two families matter to callers: :class:`FormatError` for malformed or
unreadable input, and :class:`DomainError` for well-formed input that the
requested operation cannot accept. The CLI maps them to exit codes 2 and 3.
"""
from __future__ import annotations


class MaestroError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(MaestroError):
    """Input could not be read as the expected format."""


class DomainError(MaestroError):
    """Input is well formed but violates an operation's precondition."""


# -- canonical text formats ---------------------------------------------------

class CanonicalSyntaxError(FormatError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class SchemaError(FormatError):
    def __init__(self, field: str, reason: str = "invalid"):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason


class VersionError(FormatError):
    def __init__(self, found, expected: str):
        super().__init__(f"unsupported version {found!r}, expected {expected!r}")
        self.found = found
        self.expected = expected


# -- MusicXML -----------------------------------------------------------------

class XmlSyntaxError(FormatError):
    pass


class UnsupportedStructure(FormatError):
    pass


# -- survey CSV ---------------------------------------------------------------

class RowError(FormatError):
    """Base for CSV errors tied to a line of the input (header is line 1)."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class CsvSyntaxError(RowError):
    pass


class RangeError(RowError):
    pass


class UnknownEmotion(RowError):
    pass


class DuplicateRating(RowError):
    pass


# -- domain -------------------------------------------------------------------

class UnknownInstrument(DomainError, KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"unknown instrument {self.name!r}"


class IndexOutOfRange(DomainError, IndexError):
    pass


class InvalidScore(DomainError):
    def __init__(self, errors):
        self.errors = list(errors)
        shown = "; ".join(str(e) for e in self.errors[:5])
        more = f" (+{len(self.errors) - 5} more)" if len(self.errors) > 5 else ""
        super().__init__(f"score failed validation: {shown}{more}")


class NotSameWork(DomainError):
    pass


class FingerprintMismatch(DomainError):
    pass


class OutOfRange(DomainError):
    pass


class SegmentationMismatch(DomainError):
    pass


class EmptySegment(DomainError):
    pass


class SingularSystem(DomainError):
    pass


class EmptyGrid(DomainError):
    pass

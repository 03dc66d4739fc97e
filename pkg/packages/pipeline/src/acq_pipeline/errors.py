"""
Pipeline error types.

Validation problems stay plain ValueError; these cover the failure modes
callers need to tell apart.
"""


class NonFiniteLossError(RuntimeError):
    """A loss term became NaN / Inf; ``term`` names it."""

    def __init__(self, term: str, detail: str = ""):
        self.term = term
        msg = f"non-finite loss term '{term}'"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class ArchiveError(RuntimeError):
    """Base class for model archive load failures."""


class ArchiveVersionError(ArchiveError):
    pass


class ArchiveDigestError(ArchiveError):
    pass


class ArchiveTruncatedError(ArchiveError):
    pass


class DatasetFormatError(ValueError):
    """Malformed dataset file; ``offset`` is the byte offset of the bad record."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


class UsageError(ValueError):
    """Bad command-line input found after parsing (unknown ``--set`` key, invalid value); exit code 2."""

"""Exception hierarchy and CLI exit codes."""


class StructCoreError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class InvariantError(StructCoreError):
    """A domain-type invariant was violated (rejected before any I/O)."""

    exit_code = 2


class ProtocolError(StructCoreError):
    """One-class protocol violation, e.g. an anomalous file in a train split."""

    exit_code = 2


class FormatError(StructCoreError):
    """Container-format problem. Subclasses carry a distinct ``code``."""

    exit_code = 3
    code = "format"


class BadMagicError(FormatError):
    code = "bad-magic"


class VersionMismatchError(FormatError):
    code = "version-mismatch"


class TruncatedFileError(FormatError):
    code = "truncated"


class CorruptPayloadError(FormatError):
    """Payload failed validation (NaN/Inf entries, bad label byte, ...)."""

    code = "corrupt-payload"


class DimensionError(FormatError):
    """Sections of a container disagree about shapes, or inputs mismatch."""

    code = "dimension-mismatch"


class MetricUndefinedError(StructCoreError):
    """Metric is undefined for the given inputs (e.g. single-class AUROC)."""

    exit_code = 4

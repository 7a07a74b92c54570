"""Exception hierarchy shared by all traintime modules.

Every error raised by this package derives from TraintimeError so callers
(notably the CLI) can separate input problems from genuine bugs. The
``phase`` attribute is filled in by the prediction pipeline to say which
stage an upstream error surfaced in.
"""

from __future__ import annotations


class TraintimeError(Exception):
    """Base class for all package errors.

    Attributes:
        phase: pipeline phase the error surfaced in, set by predict();
            None for errors raised outside the pipeline.
    """

    phase: str | None = None


class ParseError(TraintimeError):
    """A file is syntactically malformed (bad JSON, bad header, bad field type)."""


class SchemaError(TraintimeError):
    """A structurally valid file violates a graph/type invariant."""


class VersionMismatch(TraintimeError):
    """A file declares a format_version this package does not read."""


class UnknownKind(TraintimeError):
    """An operator kind is not part of the closed kind enumeration."""


class RuleConflict(TraintimeError):
    """A cast-rule table lists one operator kind as both low and high precision."""


class ConfigError(TraintimeError):
    """A job configuration value is invalid or incompatible with the graph."""


class DegreeError(TraintimeError):
    """A parallelism degree cannot be applied to the graph (e.g. PP > layer count)."""


class IndivisibleDim(TraintimeError):
    """A weight dimension is not divisible by the TP degree; no padding is done."""


class MergeConflict(TraintimeError):
    """Two latency files disagree on the record for the same key."""


class MissingLatency(TraintimeError):
    """No stored or interpolable latency exists for a requested key."""


class EmptyInput(TraintimeError):
    """An operation that needs at least one element received none."""


class NonPositiveMeasurement(TraintimeError):
    """A measured time is zero or negative and cannot anchor a percentage error."""

"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class RmtError(Exception):
    """Base class for all errors raised by rmtnet."""


class ParseError(RmtError, ValueError):
    """A malformed input row. ``line`` is 1-based and counts the header."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class UnknownKind(ParseError):
    pass


class NegativeQuantity(ParseError):
    pass


class MissingField(ParseError):
    pass


class InvariantViolation(ParseError):
    pass


class NonPositivePrice(ParseError):
    pass


class NonPositiveVolume(ParseError):
    pass


class EventBeforeEpoch(RmtError, ValueError):
    pass


class EmptyGraph(RmtError, ValueError):
    pass


class KTooLarge(RmtError, ValueError):
    pass


class NoData(RmtError, ValueError):
    pass


class TooFewSamples(RmtError, ValueError):
    pass


class DegenerateSamples(RmtError, ValueError):
    pass


class ZeroVariance(RmtError, ValueError):
    pass


class LengthMismatch(RmtError, ValueError):
    pass


class NoPriceData(RmtError, ValueError):
    pass


class ConfigInvalid(RmtError, ValueError):
    pass


class PipelineInvariantError(RmtError, RuntimeError):
    """An internal consistency check failed while running the pipeline."""

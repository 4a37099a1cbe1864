"""Exception hierarchy.

Everything raised on purpose by this package derives from :class:`JointStatError`,
so callers (the CLI in particular) can separate validation problems from bugs.
"""

from __future__ import annotations


class JointStatError(ValueError):
    """Base class for all library errors."""


class BatteryError(JointStatError):
    """A battery configuration violates one of its constraints."""

    def __init__(self, message: str, q: int | None = None, constraint: str | None = None):
        super().__init__(message)
        self.q = q
        self.constraint = constraint


class DivisibilityViolation(BatteryError):
    pass


class WindowTooShort(BatteryError):
    pass


class DegenerateSigma(BatteryError):
    pass


class EmptyCell(BatteryError):
    pass


class EnumerationTooLarge(JointStatError):
    pass


class NegativeVarianceEstimate(JointStatError):
    pass


class NonFiniteMoment(JointStatError):
    pass


class InvalidFunctionOutput(JointStatError):
    """A plug-in function returned NaN/inf or an out-of-range class label."""


class SequenceTooShort(JointStatError):
    pass


class DimensionMismatch(JointStatError):
    pass


class IndefiniteEstimate(JointStatError):
    pass


class NotPSD(JointStatError):
    pass


class UnknownStatistic(JointStatError):
    pass


class UnknownTest(JointStatError):
    pass


class BadParams(JointStatError):
    pass


class OutOfRange(JointStatError):
    pass


class CapExceeded(JointStatError):
    pass


class TooFewReplicas(JointStatError):
    pass


class MalformedInput(JointStatError):
    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class OutOfRangeFloat(MalformedInput):
    pass


class EvaluationError(JointStatError):
    """Wraps a member failure with the statistic (and replica) that triggered it."""

    def __init__(self, message: str, label: str | None = None, replica: int | None = None):
        prefix = []
        if replica is not None:
            prefix.append(f"replica {replica}")
        if label is not None:
            prefix.append(label)
        if prefix:
            message = f"{', '.join(prefix)}: {message}"
        super().__init__(message)
        self.label = label
        self.replica = replica

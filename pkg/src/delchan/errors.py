"""Exception hierarchy. The CLI echoes the class name of any DelchanError."""


class DelchanError(Exception):
    """Base class for domain errors."""


class NonDividing(DelchanError):
    pass


class OutOfRange(DelchanError):
    pass


class BadMessage(DelchanError):
    pass


class BadLength(DelchanError):
    pass


class LengthMismatch(DelchanError):
    pass


class CapExceeded(DelchanError):
    """Exact enumeration would exceed the configured joint-state cap."""


class SupportMismatch(DelchanError):
    pass


class BudgetExceeded(DelchanError):
    pass


class QTooLarge(DelchanError):
    pass


class NoMatch(DelchanError):
    pass

"""Exception types shared across the package."""


class RadarsError(Exception):
    pass


class ConfigError(RadarsError, ValueError):
    pass


class SpaceTooLarge(RadarsError):
    pass


class EmptySet(RadarsError, ValueError):
    pass


class EmptyPool(RadarsError):
    pass


class BudgetTooSmall(RadarsError):
    pass


class MemoryBoundViolation(RadarsError):
    """A SuperNet was built whose modeled memory exceeds the budget."""


class NoSearchPerformed(RadarsError):
    pass


class NonFiniteReward(RadarsError, ValueError):
    pass


class ShapeMismatch(RadarsError, ValueError):
    pass


class GraphNotRecorded(RadarsError):
    pass


class MissingGrad(RadarsError):
    pass


class TruncatedRecord(RadarsError, ValueError):
    pass


class LabelOutOfRange(RadarsError, ValueError):
    pass

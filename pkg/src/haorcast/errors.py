"""Exception hierarchy shared by every haorcast module.

All domain errors derive from :class:`HaorcastError`; the CLI maps them to
exit code 1 with a one-line diagnostic.
"""


class HaorcastError(Exception):
    """Base class for domain errors."""


# raster_mapping
class EmptyInputError(HaorcastError):
    pass


class DegenerateInputError(HaorcastError):
    pass


class ShapeMismatchError(HaorcastError):
    pass


# features / synthetic data
class InvalidMonthError(HaorcastError):
    pass


class OutOfRangeError(HaorcastError):
    pass


class InsufficientDataError(HaorcastError):
    pass


class SingleClassError(HaorcastError):
    pass


class PostSentinelDateError(HaorcastError):
    pass


class EmptyTrainingSplitError(HaorcastError):
    pass


# trees
class TooFewSamplesError(HaorcastError):
    pass


class UntrainedModelError(HaorcastError):
    pass


class ModelFormatError(HaorcastError):
    pass


# inference layers
class NegativeDischargeError(HaorcastError):
    pass


class WrongLengthError(HaorcastError):
    pass


# validation
class EmptyMatrixError(HaorcastError):
    pass


class LengthMismatchError(HaorcastError):
    pass


class DegenerateSpecError(HaorcastError):
    pass


# alerts
class MissingPlaceholderError(HaorcastError):
    pass


class TransportUnregisteredError(HaorcastError):
    pass


# crop damage
class NegativeDaysError(HaorcastError):
    pass


class UnknownStageError(HaorcastError):
    pass


class NegativeInputError(HaorcastError):
    pass

"""Exception hierarchy shared by every module in the package."""


class AmpleError(Exception):
    """Base class for all package errors."""


# geometry
class OutOfBounds(AmpleError, ValueError):
    pass


class DegenerateLink(AmpleError, ValueError):
    pass


class CiExceedsLink(AmpleError, ValueError):
    pass


class MapFormatError(AmpleError, ValueError):
    pass


# models
class InvalidLine(AmpleError, ValueError):
    pass


class RegionCountMismatch(AmpleError, ValueError):
    pass


class DistanceBelowReference(AmpleError, ValueError):
    pass


class PresetError(AmpleError, ValueError):
    pass


# fitting
class NonPositiveSigma(AmpleError, ValueError):
    pass


class EmptyDataset(AmpleError, ValueError):
    pass


class Diverged(AmpleError, ArithmeticError):
    pass


class DegenerateDesign(AmpleError, ValueError):
    pass


# metrics
class LengthMismatch(AmpleError, ValueError):
    pass


class EmptyInput(AmpleError, ValueError):
    pass


class TooFewPoints(AmpleError, ValueError):
    pass


class AllFamiliesFailed(AmpleError, ValueError):
    pass


# data io
class ParseError(AmpleError, ValueError):
    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class SchemaError(AmpleError, ValueError):
    pass


class UnknownTag(AmpleError, KeyError):
    pass


class InvalidRecipe(AmpleError, ValueError):
    pass

"""Exception types raised across the package."""


class LfiHarError(Exception):
    """Base class for all package errors."""


class InvalidConfig(LfiHarError, ValueError):
    pass


class NoPeak(LfiHarError):
    """No spectral peak rose above the noise floor."""


class DegenerateGeometry(LfiHarError, ValueError):
    pass


class RateMismatch(LfiHarError, ValueError):
    pass


class EmptyClass(LfiHarError, ValueError):
    pass


class EmptyTrainSet(LfiHarError, ValueError):
    pass


class ShapeMismatch(LfiHarError, ValueError):
    pass


class NonFiniteLoss(LfiHarError, FloatingPointError):
    """Training produced a NaN or infinite loss."""


class MissingClassShots(LfiHarError, ValueError):
    pass


class LengthMismatch(LfiHarError, ValueError):
    pass


class IntegrityError(LfiHarError):
    """A dataset file does not match the checksum recorded in its manifest."""

"""Exception types raised across the package."""


class NTNError(ValueError):
    """Base class for all domain errors."""


class InvalidShapeError(NTNError):
    pass


class InvalidThresholdError(NTNError):
    pass


class InvalidConfigError(NTNError):
    pass


class InvalidStepError(NTNError):
    pass


class InvalidPromptError(NTNError):
    pass


class SnapshotFormatError(NTNError):
    pass

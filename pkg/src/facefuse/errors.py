"""Exception types shared across the package."""


class FacefuseError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatchError(FacefuseError, ValueError):
    """Inputs have incompatible shapes or lengths."""


class DegenerateConfigurationError(FacefuseError, ValueError):
    """Point configuration does not determine a solution.

    Carries ``rank`` when the failure was detected through a rank check.
    """

    def __init__(self, message, rank=None):
        super().__init__(message)
        self.rank = rank


class InsufficientCorrespondencesError(FacefuseError, ValueError):
    """Fewer 2D-3D correspondences than the estimator needs."""


class RankDeficiencyError(FacefuseError, ValueError):
    """Unregularized least-squares system is underdetermined."""


class SchemaVersionError(FacefuseError, ValueError):
    """File declares a schema version this code does not understand."""


class FileFormatError(FacefuseError, ValueError):
    """File contents are malformed or fail validation.

    The message names the offending field when validation fails.
    """


class MissingInitializationError(FacefuseError, ValueError):
    """Video tracking step has neither previous landmarks nor a face box."""


class ConfigurationError(FacefuseError, ValueError):
    """Configuration value out of range or referenced resource unusable."""

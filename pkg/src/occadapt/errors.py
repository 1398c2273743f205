"""Exception hierarchy shared by all occadapt modules."""


class OccAdaptError(Exception):
    """Base class for every error raised by this package."""


class DegenerateVector(OccAdaptError):
    """A vector with (near-)zero norm reached an operation that needs a direction."""


class ShapeMismatch(OccAdaptError):
    """Array shapes disagree with the operation's contract."""


class KTooLarge(OccAdaptError):
    """Requested more neighbors than the data can provide."""


class FormatError(OccAdaptError):
    """A feature/plan/adapter file is malformed (bad magic, truncation, NaN, ...)."""


class IoError(OccAdaptError):
    """Underlying file I/O failed (missing path, permissions, ...)."""


class CenterSamplingFailed(OccAdaptError):
    """Synthetic class centers could not satisfy the cosine-gap constraint in budget."""


class SingleClass(OccAdaptError):
    """A metric needing both inliers and outliers saw only one label."""


class ConfigError(OccAdaptError):
    """A configuration value violates its invariant."""

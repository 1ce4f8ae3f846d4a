"""Exception types shared across the toolkit."""


class RsrError(Exception):
    """Base class for all rsrkit errors."""


class ShapeError(RsrError):
    """Matrix/vector dimensions do not match the operation's contract."""


class EmptyInput(RsrError):
    """An operation received an empty collection."""


class DegenerateInput(RsrError):
    """Numerically rank-zero input where a subspace is required."""


class InfeasibleAdversary(RsrError):
    """Adversary strategy cannot be realized for the given model."""


class OddSampleCount(RsrError):
    """Pairwise differencing requires an even number of samples."""


class InsufficientSamples(RsrError):
    """Too few samples for the requested estimate."""


class EpsilonTooLarge(RsrError):
    """Corruption fraction outside the range the sizing formulas support."""


class DegenerateData(RsrError):
    """Data cannot span a subspace of the requested dimension."""


class ConfigError(RsrError):
    """Invalid experiment configuration (exit code 2 at the CLI)."""


class SchemaError(RsrError):
    """A CSV or container file does not conform to the expected schema."""


class IoError(RsrError):
    """Filesystem-level failure while reading or writing artifacts."""

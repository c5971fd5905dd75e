"""Exception hierarchy shared by all pipeline stages."""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(PipelineError):
    """A file or byte stream does not conform to its declared format."""


class IoError(PipelineError):
    """A path could not be read or written."""


class ValidationError(PipelineError):
    """Input data violates a documented invariant."""


class VersionError(PipelineError):
    """A serialized artifact carries an unsupported schema version."""


class SpecError(PipelineError):
    """A corpus specification is internally inconsistent."""


class ExtractError(PipelineError):
    """Descriptor extraction is impossible for the given geometry."""


class DimError(PipelineError):
    """Dimensions of two operands do not match."""


class FitError(PipelineError):
    """Model fitting cannot proceed on the given data."""


class TrainError(PipelineError):
    """Classifier training preconditions are not met."""


class EmptyInputError(PipelineError):
    """An operation received an empty collection it cannot handle."""


class DegenerateInputError(PipelineError):
    """An input is degenerate (for example an all-zero vector)."""


class ZeroDenominatorError(PipelineError):
    """A relevance redistribution hit an exactly-zero denominator."""


class RangeError(PipelineError):
    """A numeric argument is outside its valid range."""


class UndefinedError(PipelineError):
    """A requested quantity is undefined for the given input."""


class DependencyError(PipelineError):
    """A pipeline stage is missing a prerequisite artifact."""


class UsageError(PipelineError):
    """Invalid command line usage."""


class VerificationError(PipelineError):
    """An invariant check of the verification suite failed."""

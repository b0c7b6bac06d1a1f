"""Exception hierarchy shared by every module."""


class ModSketchError(Exception):
    """Base class for all library errors."""


class SchemaError(ModSketchError, ValueError):
    """A key or part does not fit the declared schema."""


class HashPreconditionError(ModSketchError, ValueError):
    """A key integer was fed to a hash function whose prime is too small."""


class ConfigurationError(ModSketchError, ValueError):
    """Invalid partition, budget or run configuration."""


class SketchOverflowError(ModSketchError, OverflowError):
    """A counter would exceed the 64-bit unsigned range."""


class EstimationError(ModSketchError, ValueError):
    """A parameter estimate cannot be computed from the sample."""


class ResourceError(ModSketchError):
    """Requested enumeration exceeds the configured cap."""


class MetricError(ModSketchError, ValueError):
    """An accuracy metric was requested over an empty or invalid query set."""


class StreamParseError(ModSketchError, ValueError):
    def __init__(self, line_no: int, message: str, path: str | None = None):
        self.line_no = line_no
        self.path = path
        where = f"{path}:{line_no}" if path else f"line {line_no}"
        super().__init__(f"{where}: {message}")


class PipelineError(ModSketchError):
    """Wraps an error raised inside one pipeline phase."""

    def __init__(self, phase: str, cause: BaseException):
        self.phase = phase
        self.cause = cause
        super().__init__(f"[{phase}] {type(cause).__name__}: {cause}")

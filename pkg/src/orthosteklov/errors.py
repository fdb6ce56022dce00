"""Exception hierarchy shared by all modules."""


class OrthoSteklovError(Exception):
    """Base class for package errors."""


class DomainError(OrthoSteklovError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DegenerateInputError(DomainError):
    """Input is valid in type but degenerate (zero vector, constant trace...)."""


class UnsupportedConfigurationError(OrthoSteklovError, NotImplementedError):
    """A body/exponent/dimension combination that has no implementation."""


class NumericalFailure(OrthoSteklovError, RuntimeError):
    """An iterative method did not reach its tolerance."""


class ResourceError(OrthoSteklovError, MemoryError):
    """A configured size cap (e.g. mesh node count) would be exceeded."""


class ShapeSpecError(OrthoSteklovError, ValueError):
    """A shape or campaign document failed to parse or validate.

    ``location`` names the offending field (``"vertices[3]"``) or line.
    """

    def __init__(self, message: str, location: str | None = None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)

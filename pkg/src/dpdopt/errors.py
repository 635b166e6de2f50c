"""Exception types shared across the package."""


class DPDOptError(Exception):
    """Base class for all package errors."""


class StructuralError(DPDOptError, ValueError):
    """Array shapes or dimensions do not line up."""


class ParameterError(DPDOptError, ValueError):
    """A numeric parameter lies outside its admissible range."""


class ConvergenceError(DPDOptError, RuntimeError):
    """An iterative solver hit its iteration cap."""


class CertificationError(DPDOptError):
    """A generated weight matrix violates the connectivity assumptions."""

    def __init__(self, message, round_index=None):
        super().__init__(message)
        self.round_index = round_index


class ConfigError(DPDOptError, ValueError):
    """The configuration document is malformed."""

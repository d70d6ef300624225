"""Exception types shared across the package."""


class SghmcError(Exception):
    """Base class for all package errors."""


class EvaluationError(SghmcError):
    """A loss or gradient evaluation produced a non-finite value.

    Carries the index of the offending dataset sample when known.
    """

    def __init__(self, message, sample_index=None):
        super().__init__(message)
        self.sample_index = sample_index


class ConfigurationError(SghmcError):
    """Invalid configuration: empty dataset, bad batch size, bad p/q pairing, ..."""


class DivergenceError(SghmcError):
    """A chain produced a non-finite coordinate. Carries the step index."""

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


class CertificationError(SghmcError):
    """A numerical certification loop failed. Carries the witnessing point."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class NumericalError(SghmcError):
    """A numerical procedure (fixed point, quadrature) left its validity range."""

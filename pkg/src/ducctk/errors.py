"""Exception types shared across the package."""


class DuccError(Exception):
    """Base class for all package errors."""


class InvalidReferenceError(DuccError):
    """Reference determinant inconsistent with the operator or space."""


class IncompatibleOperatorError(DuccError):
    """Operands disagree on vacuum or spin-orbital count."""


class OracleTooLargeError(DuccError):
    """Requested dense matrix exceeds the oracle dimension cap."""


class FcidumpParseError(DuccError):
    """Malformed FCIDUMP input; carries the offending line number."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class NotSpatiallyRepresentableError(DuccError):
    """Spin-orbital operator cannot be reduced to spatial integrals."""


class ReferenceVectorFormatError(DuccError):
    """Malformed reference-vector file."""


class DegenerateVectorError(DuccError):
    """Vector norm too small to normalize."""


class DegeneracyError(DuccError):
    """Vanishing orbital-energy denominator; names the orbital tuple."""

    def __init__(self, message, orbitals=()):
        super().__init__(message)
        self.orbitals = tuple(orbitals)


class ConvergenceError(DuccError):
    """Iterative solver failed to converge; carries the residual history."""

    def __init__(self, message, residuals=()):
        super().__init__(message)
        self.residuals = list(residuals)


class InvalidGeneratorError(DuccError):
    """Generator amplitudes violate the external/internal partition."""


class ContractError(DuccError):
    """An operation contract (pre/post condition) was violated."""


class ConfigError(DuccError):
    """Invalid run configuration."""

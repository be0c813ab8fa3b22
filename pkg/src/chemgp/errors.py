"""Exception hierarchy.

Three branches mirror the CLI exit codes: configuration/usage problems
(exit 1), data problems (exit 2), and numerical failures (exit 3).
"""


class ChemGPError(Exception):
    """Base class for all package errors."""


class ConfigError(ChemGPError):
    """Bad configuration or usage (CLI exit code 1)."""


class DataError(ChemGPError):
    """Invalid or inconsistent input data (CLI exit code 2)."""


class NumericalError(ChemGPError):
    """Numerical failure such as a factorization break-down (CLI exit code 3)."""


class InvalidFingerprintError(DataError):
    """All-zero fingerprint, or length mismatch within one space."""


class DuplicateCompoundError(DataError):
    """Two identical fingerprints in one chemical space."""


class StratificationError(DataError):
    """A class has too few observations to stratify into the requested folds."""


class WrongLinkError(ConfigError):
    """A probit-only code path was invoked with a different link."""


class NumericalDegeneracyError(NumericalError):
    """Similarity matrix failed its positive-definiteness check."""


class KernelIndefiniteError(NumericalError):
    """Covariance matrix could not be Cholesky-factorized even with jitter."""


class ModeFailureError(NumericalError):
    """Newton mode search did not converge; carries the final residual norm."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class IndefiniteHessianError(NumericalError):
    """Negative-log-posterior Hessian not positive definite at the mode."""

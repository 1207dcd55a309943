"""Exception hierarchy shared by every pipeline stage.

Each error carries the process exit code the command-line interface reports and the
module it originated from, so a failure deep inside a balance run still tells the
user which stage rejected the input.
"""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_INFEASIBLE = 4


class MCCBError(Exception):
    """Base class for all library errors.

    Attributes:
        exit_code: Process exit code used by the command-line interface
        provenance: Dotted module name of the stage that raised the error
    """

    exit_code: int = EXIT_NUMERICAL

    def __init__(self, message: str, provenance: str | None = None) -> None:
        super().__init__(message)
        self.provenance = provenance or self.__class__.__module__


class ConfigurationError(MCCBError):
    """Invalid run configuration or runtime environment."""

    exit_code = EXIT_CONFIG


class DemonstrationFormatError(MCCBError):
    """A demonstration file could not be parsed or failed validation."""

    exit_code = EXIT_CONFIG


class ArtifactMismatchError(MCCBError):
    """Persisted model or balance artifacts do not match the current run."""

    exit_code = EXIT_CONFIG


class NumericalError(MCCBError):
    """A numerical routine failed."""

    exit_code = EXIT_NUMERICAL


class HorizonMismatchError(NumericalError, ValueError):
    """An operator and a trajectory disagree on the number of time steps."""


class DegenerateComponentError(NumericalError):
    """A mixture component collapsed despite covariance regularization."""


class SingularCovarianceError(NumericalError):
    """A conditional covariance block is not positive definite."""


class InfeasibleConstraintsError(MCCBError):
    """Constraint rows are rank deficient, out of range or inconsistent."""

    exit_code = EXIT_INFEASIBLE


class UnderdeterminedReproductionError(MCCBError):
    """The KKT system of a reproduction is singular."""

    exit_code = EXIT_INFEASIBLE

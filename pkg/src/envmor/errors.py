"""Exception types raised across the package."""


class EnvmorError(Exception):
    """Base class for all package errors."""

    #: process exit code used by the command line front end
    exit_code = 3


class InvalidInputError(EnvmorError, ValueError):
    exit_code = 2


class DegenerateSpectrumError(EnvmorError):
    """Sylvester/Lyapunov operator is singular (eigenvalues sum to zero)."""


class InstabilityError(EnvmorError):
    """An operation needs an asymptotically stable system."""


class ProjectionDegenerateError(EnvmorError):
    """``W^T V`` is singular."""


class PoleError(EnvmorError):
    """Transfer function evaluated at a pole."""


class StiffnessError(EnvmorError):
    """Explicit integrator step size underflow."""


class UnsupportedError(EnvmorError):
    exit_code = 4


class LoadError(EnvmorError):
    exit_code = 2

"""Exception types shared across the package."""


class BoundlabError(Exception):
    """Base class for all package-specific errors."""


class ModelFileError(BoundlabError):
    """Model file could not be parsed (syntax error or missing field)."""


class ModelValidationError(BoundlabError):
    """Model file parsed but violates a physical invariant."""


class ConfigError(BoundlabError):
    """Controller/trial configuration is invalid."""


class UnreachableTargetError(BoundlabError):
    """Leg IK target lies outside the reachable workspace annulus."""


class SimulationFault(BoundlabError):
    """The plant could not advance (e.g. singular mass matrix)."""


class QPIterationLimitError(BoundlabError):
    """Active-set QP failed to converge within the iteration cap."""

    def __init__(self, message, iterations=None, kkt_residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.kkt_residual = kkt_residual

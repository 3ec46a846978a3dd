"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class EKError(Exception):
    exit_code = 3

    def to_dict(self):
        return {"error": type(self).__name__, "message": str(self), "exit_code": self.exit_code}


class ConfigError(EKError, ValueError):
    exit_code = 2


class ParameterError(EKError, ValueError):
    exit_code = 2


class DependencyError(EKError):
    exit_code = 4


class DomainError(EKError, ValueError):
    pass


class SaddleConditionError(EKError):
    exit_code = 2


class NoHomoclinicOrbitError(EKError):
    pass


class DegenerateTurningPointError(EKError):
    pass


class ResolutionError(EKError):
    pass


class GridMismatchError(EKError, ValueError):
    pass


class EigensolverError(EKError):
    pass


class NoInstabilityError(EKError):
    pass


class RefinementError(EKError):
    pass


class PhaseAlignmentError(EKError):
    pass


class IntegratorError(EKError):
    pass


class VacuumError(EKError):
    pass

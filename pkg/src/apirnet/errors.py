"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes, so keep the validation/compute split
meaningful when adding new ones.
"""


class ReconError(Exception):
    """Base class for all package errors."""


class ValidationError(ReconError, ValueError):
    """Inputs are malformed: wrong extents, out-of-range parameters."""


class DimensionError(ValidationError):
    pass


class SpecError(ValidationError):
    pass


class DegenerateInputError(ValidationError):
    pass


class ComputeError(ReconError, RuntimeError):
    """A well-formed computation could not be completed."""


class CalibrationError(ComputeError):
    pass


class RankDeficiencyError(CalibrationError):
    pass


class DivergenceError(ComputeError):
    pass


class StateError(ComputeError):
    pass


class ReplicaError(ComputeError):
    def __init__(self, index: int, cause: BaseException):
        super().__init__(f"replica {index} failed: {cause}")
        self.index = index
        self.cause = cause

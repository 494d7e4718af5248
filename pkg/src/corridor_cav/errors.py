"""Exception types raised across the package."""


class DomainError(ValueError):
    """An operation was called outside the domain where it is defined."""


class InfeasibleOccupancyError(DomainError):
    """A merging-zone occupancy interval cannot be formed (zero speed)."""


class SingularSystemError(DomainError):
    """The boundary-condition system is singular or numerically degenerate."""

    def __init__(self, message, condition=float("inf")):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


class SchedulingError(RuntimeError):
    """The coordinator lacks the data needed to schedule a vehicle."""


class OracleError(RuntimeError):
    """The discretized verification oracle has no feasible solution."""


class ScenarioError(ValueError):
    """A scenario document failed to parse or validate."""

    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)

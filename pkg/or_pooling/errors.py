"""
OR Pooling — Error Types
========================
OrPoolingError:      Base class, caught by the CLI (exit code 1)
ValidationError:     First-stage solution breaks one or more model constraints
OvertimeOverflow:    A block's realised load exceeds regular time + max overtime
SpaceTooLarge:       Brute-force enumeration refused (search space over limit)
BackendUnavailable:  Requested solver backend is not installed / unknown
SolverFailure:       Solver ended without a usable incumbent
"""


class OrPoolingError(Exception):
    """Base class for all library errors"""


class ValidationError(OrPoolingError, ValueError):
    """Raised with the full list of violations found by costs.validate()"""

    def __init__(self, violations: list):
        self.violations = list(violations)
        lines = "; ".join(f"{v.constraint}: {v.message}" for v in self.violations)
        super().__init__(f"{len(self.violations)} constraint violation(s): {lines}")


class OvertimeOverflow(OrPoolingError):
    """Realised surgical load in a block does not fit in A + O^max"""

    def __init__(self, room: int, day: int, load: float, limit: float):
        self.room = room
        self.day = day
        self.load = load
        self.limit = limit
        super().__init__(
            f"room {room} day {day}: load {load:.2f} min exceeds "
            f"regular time + max overtime ({limit:.2f} min); the solution "
            f"was built without the overtime guard constraint"
        )


class SpaceTooLarge(OrPoolingError):
    def __init__(self, size: int, limit: int):
        self.size = size
        self.limit = limit
        super().__init__(f"search space {size:,} exceeds limit {limit:,}")


class BackendUnavailable(OrPoolingError):
    def __init__(self, name: str, reason: str = ""):
        self.name = name
        msg = f"solver backend '{name}' is unavailable"
        super().__init__(f"{msg}: {reason}" if reason else msg)


class SolverFailure(OrPoolingError):
    """Carries the solver status (Infeasible, TimeLimit, ...)"""

    def __init__(self, status, message: str = ""):
        self.status = status
        label = getattr(status, "value", status)
        super().__init__(f"solver returned {label}" + (f": {message}" if message else ""))

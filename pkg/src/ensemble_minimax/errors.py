"""Exception types raised by the solver library."""


class EnsembleError(Exception):
    """Base class for all library errors."""


class ConfigurationError(EnsembleError, ValueError):
    """Inconsistent or invalid problem/solver configuration."""


class ContractViolation(EnsembleError, ValueError):
    """A user-supplied callable broke a documented contract."""


class UnsupportedDimension(EnsembleError, ValueError):
    pass


class NonsmoothCostError(EnsembleError):
    """Raised when a gradient is requested from a cost that has none."""


class IntegrationDiverged(EnsembleError, ArithmeticError):
    """Non-finite state met during time stepping.

    Attributes
    ----------
    cell : int
        Index of the time cell in which the blow-up was detected.
    theta_index : int or None
        Position of the offending parameter in its ParamSet, when known.
    """

    def __init__(self, cell, theta_index=None):
        self.cell = cell
        self.theta_index = theta_index
        where = f"cell {cell}"
        if theta_index is not None:
            where += f" (parameter index {theta_index})"
        super().__init__(f"integration diverged in {where}")

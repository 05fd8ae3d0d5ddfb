"""Exception hierarchy. CLI exit codes hang off these classes."""


class ChpError(Exception):
    exit_code = 1


class ValidationError(ChpError, ValueError):
    """Bad network, coupling or scenario data."""

    exit_code = 1


class NumericalError(ChpError, RuntimeError):
    """Blow-up, NaN, singular systems, non-settling blocks."""

    exit_code = 2


class NonSettlingError(NumericalError):
    pass


class SingularKKTError(NumericalError):
    pass


class UnsettledTrajectoryError(NumericalError):
    pass

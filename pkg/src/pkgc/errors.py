"""Exception types shared across the package, mapped to CLI exit codes."""


class PkgcError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(PkgcError):
    """Bad configuration: unknown key, invalid value, missing required option."""

    exit_code = 2


class DataError(PkgcError):
    """Bad input data (files, ids, shapes)."""

    exit_code = 3


class ParseError(DataError):
    """Malformed line in an input file; carries path and 1-based line number."""

    def __init__(self, path, line_no, message):
        self.path = path
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class InfeasibleRatioError(DataError):
    """Requested known-fraction is below the scaffold size; names the minimum feasible value."""

    def __init__(self, rho, min_rho):
        self.rho = rho
        self.min_rho = min_rho
        super().__init__(
            f"rho={rho} is infeasible: the scaffold needs at least rho={min_rho:.6f}"
        )


class BoundsError(DataError):
    """Entity or relation id out of range for the model."""


class CandidateSpaceTooLarge(PkgcError):
    """Naive mining refused: candidate space exceeds the safety guard."""

    exit_code = 3


class DivergenceError(PkgcError):
    """Training produced a non-finite loss; carries the last finite-loss model."""

    exit_code = 4

    def __init__(self, message, last_good=None, epoch=None):
        self.last_good = last_good
        self.epoch = epoch
        super().__init__(message)


class SessionError(PkgcError):
    """Verification-session protocol violation."""


class ConflictError(SessionError):
    """Verdict conflicts with session state (non-pending triple or contradictory re-post)."""


class SessionClosed(SessionError):
    """The verification session was closed while a step was in flight."""


class CurveInvariantError(PkgcError):
    """Completion curve violated monotonicity."""

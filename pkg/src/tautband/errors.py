"""Exception hierarchy shared by every module.

Input problems derive from :class:`ValueError`, broken internal guarantees
from :class:`RuntimeError`. The command-line front end maps the former to
exit status 1 and the latter to exit status 2.
"""


class TautbandError(Exception):
    pass


class InputError(TautbandError, ValueError):
    """Raised for malformed or out-of-domain arguments."""


class InfeasibleTubeError(InputError):
    """Raised when no path can satisfy the tube constraints.

    ``index`` names the first offending knot when it is known.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class InvariantError(TautbandError, RuntimeError):
    """Raised when a computed result violates a guaranteed property."""


class ConvergenceError(InvariantError):
    pass

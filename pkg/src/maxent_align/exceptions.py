"""Exception hierarchy.

The CLI maps these onto exit codes: argument-like errors to 2, numerical
failures to 3, infeasible or empty outcomes to 4.
"""


class MaxentAlignError(Exception):
    """Base class for every error raised by this package."""


class SupportMismatchError(MaxentAlignError, ValueError):
    """Two distributions live on different supports."""


class AbsoluteContinuityError(MaxentAlignError, ValueError):
    """``q`` is zero somewhere ``p`` is positive."""


class ConstraintInfeasibleError(MaxentAlignError, ValueError):
    """Requested expectation lies outside the closed support range.

    ``lower`` and ``upper`` carry the point masses that attain the two
    boundary expectations.
    """

    def __init__(self, message, lower=None, upper=None):
        super().__init__(message)
        self.lower = lower
        self.upper = upper


class EmptyConditioningEventError(MaxentAlignError, ValueError):
    """Conditioning on an event of probability zero."""


class NoSurvivorsError(MaxentAlignError):
    """Rejection sampling accepted nothing within its draw budget."""


class UnstableEstimateError(MaxentAlignError):
    """Importance weights degenerate (effective sample size too small)."""


class NumericalFailureError(MaxentAlignError):
    """An iterative solver did not converge.

    ``trace`` holds whatever diagnostic record the solver produced.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class InfeasibleSystemError(MaxentAlignError):
    """The total-expectation system has no solution.

    ``certificate`` is a dict with the smallest attainable max-violation
    and the dual multipliers that certify it.
    """

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate

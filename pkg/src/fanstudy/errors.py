"""Exception types raised across the package."""


class FanStudyError(ValueError):
    """Base class for all domain errors."""


class ParseError(FanStudyError):
    def __init__(self, row, message):
        self.row = row
        super().__init__(f"row {row}: {message}")


class DuplicateTimestamp(FanStudyError):
    pass


class UnorderedInput(FanStudyError):
    pass


class InvalidPrice(FanStudyError):
    pass


class InvalidVolume(FanStudyError):
    pass


class LeadingGap(FanStudyError):
    pass


class SeriesTooShort(FanStudyError):
    pass


class NonPositiveShift(FanStudyError):
    pass


class InsufficientCoverage(FanStudyError):
    pass


class DegenerateRegressor(FanStudyError):
    pass


class SpanNotCovered(FanStudyError):
    pass


class EmptyInput(FanStudyError):
    pass


class ZeroVariance(FanStudyError):
    pass


class TooFewObservations(FanStudyError):
    pass


class AllZeros(FanStudyError):
    pass


class InvalidOdds(FanStudyError):
    pass


class RankDeficient(FanStudyError):
    pass


class NoConvergence(FanStudyError):
    """Raised when the robust M-step fails to converge.

    ``iterations`` and ``max_change`` describe the state at abandonment; the
    partial coefficient vector is intentionally not attached.
    """

    def __init__(self, iterations, max_change):
        self.iterations = iterations
        self.max_change = max_change
        super().__init__(
            f"M-step did not converge after {iterations} iterations "
            f"(last max coefficient change {max_change:.3g})"
        )


class InvalidEvent(FanStudyError):
    pass

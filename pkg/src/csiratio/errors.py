"""Exception and warning types shared across the toolkit."""


class DegenerateStatics(ValueError):
    """Static returns cancel: |h0| is below the floor, the ratio model is undefined."""


class ZeroDenominator(ValueError):
    """A CSI-ratio denominator sample is exactly zero."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"zero denominator at sample index {index}")


class GratingLobes(ValueError):
    """The Doppler pattern has grating lobes; the mainlobe width is undefined."""


class NonPositiveDenominator(ValueError):
    """Lobe-sum denominator b0 + b1*cos(.) can reach zero (requires b0 > b1)."""


class RegimeUndefined(ValueError):
    """Static-to-dynamic power ratio falls between the large/small thresholds."""


class OutOfDomain(ValueError):
    """An arcsin/folding argument has no solution on (-1, 1)."""


class InvalidSize(ValueError):
    """Schedule size request is inconsistent (needs 2 <= K <= K_all)."""


class SingularUpdate(ValueError):
    """The schedule-optimizer linear system is numerically singular."""


class InvalidParams(ValueError):
    """Likelihood evaluation is missing a required parameter (e.g. noise scale)."""


class ClosedFormMismatch(RuntimeError):
    """Closed-form CRB matrix disagrees with the Jacobian-assembled one."""


class ScheduleFormatError(ValueError):
    """Schedule text file is malformed."""


class PreconditionWarning(UserWarning):
    """An approximation is evaluated outside its stated validity region."""

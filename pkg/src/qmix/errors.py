"""Exception hierarchy shared by all qmix modules.

Every numerical failure raised on purpose derives from QmixError so
callers (trial harness, CLI) can distinguish model breakdowns from bugs.
"""


class QmixError(Exception):
    """Base class for all qmix numerical/contract failures."""


class NotPositiveDefinite(QmixError):
    """Covariance factorization hit a non-positive pivot."""


class DegenerateAmplitudes(QmixError):
    """All raw Gaussian amplitudes underflowed; class center is absurdly far."""


class LengthMismatch(QmixError):
    """Amplitude columns were built over datasets of different sizes."""


class AllZeroRow(QmixError):
    """A point received zero density under every class."""


class EmptyClass(QmixError):
    """A responsibility column summed to (numerically) zero."""


class ConstraintViolation(QmixError):
    """|cos phi| exceeded 1 for the given amplitude weights."""


class NegativeResponsibility(QmixError):
    """Destructive interference drove a joint probability below tolerance."""


class NonPositiveJoint(QmixError):
    """Objective evaluation found P(p_i, k) <= 0 where it carries weight."""


class DegenerateWeights(QmixError):
    """A fixed-point update had weights summing to ~0."""


class InfeasibleRegion(QmixError):
    """No amplitude pair satisfies the phase-cosine constraint."""


class UnsupportedFormat(QmixError):
    """Input image or file is not in the expected format."""

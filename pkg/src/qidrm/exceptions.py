"""Exception hierarchy.

Every error raised for a mathematical (domain) reason derives from
:class:`DomainError`; the CLI maps those to exit code 2.
"""


class DomainError(ValueError):
    """Base class for errors caused by inputs outside a mathematical contract."""


class MismatchedLattice(DomainError):
    """Two lattice measures do not share a step or a compatible origin."""


class ConvergenceFailure(DomainError):
    """Polynomial roots failed the residual check."""


class NotQidError(DomainError):
    """A pmf is not quasi-infinitely divisible (or could not be certified)."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class TailTooSlow(DomainError):
    """A root lies so close to the unit circle that the series tail is unusable."""


class NotAMeasure(DomainError):
    """The convolution exponential of a quasi-Levy measure has negative mass."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class InvalidInterval(DomainError):
    """Interval endpoints are missing, unordered or inconsistent with the kind."""


class DegenerateInput(DomainError):
    """The input carries no probability mass where mass is required."""


class PerturbationFailed(DomainError):
    """No root shift in the schedule produced a QID pmf."""

    def __init__(self, message, distances=None):
        super().__init__(message)
        self.distances = distances or []


class SpecInvalid(DomainError):
    """A random-measure specification violates one of its defining clauses."""


class InfiniteMass(DomainError):
    """Sampling requires a finite weights-rate measure."""


class DegenerateEstimate(DomainError):
    """A Monte Carlo Laplace estimate underflowed to zero."""


class DegeneratePosterior(DomainError):
    """A posterior normalizer vanished (the likelihood annihilates the prior)."""


class UnnormalizableNewAtom(DomainError):
    """The posterior law of a new atom has an infinite normalizer."""


class UnsupportedPrior(DomainError):
    """The prior lies outside the class a procedure supports."""

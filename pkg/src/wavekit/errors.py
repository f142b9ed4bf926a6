"""Exception hierarchy shared by every wavekit module.

Each exception carries a short ``kind`` slug; the command-line front end
turns it into the machine-parsable prefix ``ERROR:<module>:<kind>:``.
"""


class WavekitError(Exception):
    kind = "error"


class ConfigurationError(WavekitError, ValueError):
    kind = "configuration"


class UsageError(WavekitError, ValueError):
    kind = "usage"


class DegenerateInputError(WavekitError, ValueError):
    kind = "degenerate-input"


class TruncationError(WavekitError, ValueError):
    """Too much of the field's mass sits near the periodic boundary."""

    kind = "truncation"


class ResolutionError(WavekitError, ValueError):
    kind = "resolution"


class UntrackedPeakError(WavekitError, ValueError):
    kind = "untracked-peak"


class InsufficientFringesError(WavekitError, ValueError):
    kind = "insufficient-fringes"


class ProximityError(WavekitError, ValueError):
    kind = "proximity"


class SingularEvaluationError(WavekitError, ValueError):
    kind = "singular-evaluation"


class InvalidEnsembleError(WavekitError, ValueError):
    kind = "invalid-ensemble"


class DomainError(WavekitError, ValueError):
    kind = "domain"


class NumericalFailure(WavekitError, ArithmeticError):
    """A result violated a bound that holds analytically; indicates a bug."""

    kind = "numerical"


class BoundaryDecayWarning(UserWarning):
    """Field does not decay at the edge of a periodic grid."""

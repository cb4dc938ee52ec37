"""Exception types raised by the library."""


class TfwaveError(Exception):
    """Base class for every error raised here."""


class InvariantViolation(TfwaveError):
    """A post-condition check failed."""


class NotSparse(TfwaveError):
    pass


class DegenerateProjection(TfwaveError):
    pass


class RankOutOfRange(TfwaveError):
    pass


class NegativeBlockSize(TfwaveError):
    pass


class InvalidFamily(TfwaveError):
    pass


class OddMediumRank(TfwaveError):
    pass


class GridMismatch(TfwaveError):
    pass


class TileOutsideDomain(TfwaveError):
    pass


class MassPreconditionViolated(TfwaveError):
    pass


class MassResidueViolation(InvariantViolation):
    pass


class StrongDisjointnessViolation(InvariantViolation):
    pass


class HypothesisViolated(TfwaveError):
    pass


class HypothesisFailure(InvariantViolation):
    """A generated model collection fails one of its admissibility checks."""


class NotDisjoint(TfwaveError):
    pass


class InjectivityViolation(InvariantViolation):
    pass


class CountingViolation(InvariantViolation):
    pass


class Type1Required(TfwaveError):
    """The construction needs a subspace passing the Type I check."""


class EmptyCollection(TfwaveError):
    """The configured window produced no admissible tiles."""


class NoDominatingMaximal(TfwaveError):
    """No maximal element dominates a tile (impossible for finite families)."""

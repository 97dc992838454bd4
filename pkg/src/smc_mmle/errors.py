"""Error taxonomy shared by all modules.

Every failure mode that callers are expected to handle gets its own class so
that tests and the CLI can react precisely instead of string-matching.
"""


class SmcMmleError(Exception):
    """Base class for all package errors."""


class AllWeightsDegenerate(SmcMmleError):
    """Every log-weight is -inf or NaN; no particle carries mass."""


class NotNormalized(SmcMmleError):
    """An operation requiring normalized weights got an unnormalized cloud."""


class DomainViolation(SmcMmleError):
    """A point lies outside the active mirror map's domain."""


class NonFiniteDual(SmcMmleError):
    """A dual vector contains NaN or +-inf components."""


class NonSPDCovariance(SmcMmleError):
    """A proposal covariance is not symmetric positive definite."""


class DegenerateCloud(SmcMmleError):
    """A particle cloud carries no usable spread (non-finite or zero moments)."""


class WeightCollapse(SmcMmleError):
    """An SMC run aborted because reweighting degenerated all particles."""


class MissingLatentGradient(SmcMmleError):
    """An algorithm requiring grad_x U was given a model without one."""


class EmptyBlock(SmcMmleError):
    """A block has no members/pairs where an estimate requires some."""


class SpaceTooLarge(SmcMmleError):
    """A discrete space exceeds the exhaustive-enumeration cap."""


class LengthMismatch(SmcMmleError):
    """Two sequences that must align have different lengths."""


class UnknownCheck(SmcMmleError):
    """An oracle check name does not exist."""

"""Exception types shared across the package."""


class LoopformsError(Exception):
    """Base class for all package errors."""


class CutLocusError(LoopformsError):
    """Log map requested outside the injectivity radius."""


class PrecisionError(LoopformsError):
    """Requested evaluation below the certified accuracy floor."""


class TubeError(LoopformsError):
    """Ambient point left the tubular neighborhood where projection is certified."""


class DegreeError(LoopformsError):
    """Operation applied to a form of incompatible degree."""


class DegreeMismatch(DegreeError):
    """Number of tangent arguments does not match the form degree."""


class ParityError(LoopformsError):
    """Mixed even/odd components where a single parity is required."""


class NotClosedError(LoopformsError):
    """Equivariant-closedness pretest failed."""


class PartitionError(LoopformsError):
    """A loop matched no piece (or several pieces) of a plot partition."""


class BoundaryError(LoopformsError):
    """Derivative requested at the boundary of the parameter box."""


class ConvergenceError(LoopformsError):
    """An iterative sampler fell below its configured acceptance floor."""


class EmptyCoverError(LoopformsError):
    """No partition index activated on a loop."""


class CoverError(LoopformsError):
    """A sampled loop lies in no set of the requested cover."""


class ConfigError(LoopformsError):
    """Malformed or unknown study configuration."""

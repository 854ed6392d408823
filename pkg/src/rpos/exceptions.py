"""Exception hierarchy.

Every error raised on purpose by this package derives from :class:`RPosError`.
Input problems that make a file or model description unreadable are
:class:`ParseError`; violated mathematical preconditions are
:class:`PreconditionError`. The CLI maps these to exit codes 2 and 3.
"""


class RPosError(Exception):
    """Base class for all package errors."""


class ParseError(RPosError, ValueError):
    """Malformed matrix file or model description."""


class PreconditionError(RPosError, ValueError):
    """An operation was called outside its domain of validity."""


# core
class NotIrreducible(PreconditionError):
    pass


class NonpositiveWeight(PreconditionError):
    pass


class EdgeNotInSupport(PreconditionError):
    pass


class EmptyComponent(PreconditionError):
    pass


# excursion
class EdgeNotInSubgraph(PreconditionError):
    pass


class VertexHasEdges(PreconditionError):
    pass


class VertexNotInSubgraph(PreconditionError):
    pass


class NoSignChange(PreconditionError):
    pass


# logmgf
class OutsideDomain(PreconditionError):
    pass


class BoundaryNotFinite(PreconditionError):
    pass


# spectral
class ZeroDiagonalPower(PreconditionError):
    pass


class InequalityFails(PreconditionError):
    def __init__(self, msg, state=None):
        super().__init__(msg)
        self.state = state


class NoBracket(PreconditionError):
    pass


# classify
class SupportMismatch(PreconditionError):
    pass


class NotDominated(PreconditionError):
    pass


class NotDominating(PreconditionError):
    pass


class NotSubprobability(PreconditionError):
    pass


class UnsupportedPerturbation(PreconditionError):
    """The model cannot express the excursion law of the perturbed matrix."""


# htransform
class NoConvergence(RPosError, RuntimeError):
    pass


class NotEigenpair(PreconditionError):
    pass


class RowSumViolation(PreconditionError):
    pass


class Divergent(PreconditionError):
    pass


class NotRTransient(PreconditionError):
    pass


class NotStronglyPositiveRecurrent(PreconditionError):
    pass


class WindowTooSmall(PreconditionError):
    pass


# models
class BadParameter(PreconditionError):
    pass


class LimitExceeded(PreconditionError):
    pass

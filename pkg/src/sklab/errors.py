"""Exception and warning types raised by sklab."""


class SklabError(Exception):
    """Base class for every error raised by this package."""


class DomainValidationError(SklabError, ValueError):
    pass


class DomainTooLarge(DomainValidationError):
    pass


class PointOutsideDomain(SklabError, ValueError):
    def __init__(self, message, point=None, faces=()):
        super().__init__(message)
        self.point = point
        self.faces = tuple(faces)


class LpNumericalFailure(SklabError, RuntimeError):
    def __init__(self, message, stratum=None):
        super().__init__(message)
        self.stratum = stratum


class NonCompletelyS(SklabError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class LcpRayTermination(SklabError, RuntimeError):
    """The step LCP could not be solved; typically the path is near V.

    ``step`` is the 1-based step index along a path when known, ``state`` the
    pre-step point.
    """

    def __init__(self, message, step=None, state=None):
        super().__init__(message)
        self.step = step
        self.state = state


class BadInitialPoint(SklabError, ValueError):
    pass


class GridMismatch(SklabError, ValueError):
    pass


class ObliqueSignViolation(SklabError, ValueError):
    def __init__(self, message, faces=()):
        super().__init__(message)
        self.faces = tuple(faces)


class CenterInV(SklabError, ValueError):
    pass


class RadiusTooLarge(SklabError, ValueError):
    pass


class InsufficientPaths(UserWarning):
    """A conditioning bin held too few samples and was dropped."""


class NonStationaryWarning(UserWarning):
    """First- and second-half moments of a long run disagree."""
